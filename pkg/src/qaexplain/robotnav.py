"""Indoor robot navigation: maps, the QA-annotated planning problem, and
the scenario generator used for aligned / misaligned question items.

The robot moves between adjacent locations at full or half speed. Moving
takes ``distance / speed`` seconds; at full speed through obstacles it may
collide (probability by obstacle density); arriving in an area is an
intrusiveness event whose level depends on the kind of area.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Any, Iterator, Mapping, Sequence

import networkx as nx
import numpy as np

from .mdp import (EVENT_COUNT, NONSTANDARD, STANDARD, TOTAL_COST, ActionDef, ActionRule, AttributeDef,
                  Criterion, EventLevel, ExplainableProblem, ExplicitMdp, Outcome, ProblemError, QaSpec,
                  StateVar, TypeDef, ValueFn, compile)
from .oracle import CapExceeded, pareto_filter

AREAS = ("public", "semi-private", "private")
DENSITIES = ("none", "sparse", "dense")
SPEEDS = ("full", "half")
QA_TIME, QA_COLLISION, QA_INTRUSION = "travel_time", "collision", "intrusiveness"
EVENT_LEVELS = {"public": ("non-intrusive", "non-intrusive"),
                "semi-private": ("somewhat-intrusive", "somewhat intrusive"),
                "private": ("very-intrusive", "very intrusive")}

ALIGNED, MISALIGNED = "aligned", "misaligned"
EASY_UNDOMINATED, EASY_SUBOPTIMAL = "easy-undominated", "easy-suboptimal"
LABELS = (ALIGNED, MISALIGNED, EASY_UNDOMINATED, EASY_SUBOPTIMAL)
SEVERITY_MARGIN = 0.5
RETRY_CAP = 200
MAP_RETRY_CAP = 50
COST_TOL = 1e-6


class UnknownLocation(ProblemError):
    pass


class DisconnectedGoal(ProblemError):
    pass


class SamplingExhausted(RuntimeError):
    pass


# --------------------------------------------------------------------------
# domain data


@dataclass(frozen=True)
class Location:
    id: str
    area: str
    xy: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class Edge:
    a: str
    b: str
    distance: float
    obstacle: str = "none"


@dataclass
class BuildingMap:
    locations: list[Location]
    edges: list[Edge]

    def __post_init__(self):
        ids = [loc.id for loc in self.locations]
        if len(ids) != len(set(ids)):
            raise ProblemError("location IDs must be unique")
        known = set(ids)
        for loc in self.locations:
            if loc.area not in AREAS:
                raise ProblemError(f"location {loc.id}: unknown area {loc.area!r}")
        for e in self.edges:
            for end in (e.a, e.b):
                if end not in known:
                    raise UnknownLocation(f"edge refers to unknown location {end!r}")
            if not e.distance > 0:
                raise ProblemError(f"edge {e.a}-{e.b}: distance must be positive")
            if e.obstacle not in DENSITIES:
                raise ProblemError(f"edge {e.a}-{e.b}: unknown obstacle density {e.obstacle!r}")
        if not nx.is_connected(self.graph()):
            raise ProblemError("map is not connected")

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(loc.id for loc in self.locations)
        for e in self.edges:
            g.add_edge(e.a, e.b, distance=e.distance, obstacle=e.obstacle)
        return g

    def area(self, loc: str) -> str:
        return next(x.area for x in self.locations if x.id == loc)

    def edge(self, a: str, b: str) -> Edge:
        for e in self.edges:
            if {e.a, e.b} == {a, b}:
                return e
        raise KeyError((a, b))

    def to_json(self) -> dict:
        return {"locations": [{"id": x.id, "area": x.area, "xy": list(x.xy)} for x in self.locations],
                "edges": [asdict(e) for e in self.edges]}

    @classmethod
    def from_json(cls, d: Mapping) -> "BuildingMap":
        return cls([Location(x["id"], x["area"], tuple(x.get("xy", (0.0, 0.0)))) for x in d["locations"]],
                   [Edge(e["a"], e["b"], float(e["distance"]), e.get("obstacle", "none")) for e in d["edges"]])


@dataclass
class DomainTables:
    """Every numeric domain constant: speeds, collision odds, penalties."""

    speeds: dict[str, float]
    collision: dict[str, dict[str, float]]
    intrusiveness: dict[str, float]
    start_speed: str = "half"
    time_unit: str = "seconds"

    @classmethod
    def defaults(cls) -> "DomainTables":
        text = resources.files("qaexplain").joinpath("data/robotnav_defaults.json").read_text(encoding="utf-8")
        return cls.from_json(json.loads(text))

    @classmethod
    def from_json(cls, d: Mapping) -> "DomainTables":
        return cls({k: float(v) for k, v in d["speeds"].items()},
                   {s: {k: float(v) for k, v in row.items()} for s, row in d["collision"].items()},
                   {k: float(v) for k, v in d["intrusiveness"].items()},
                   d.get("start_speed", "half"), d.get("time_unit", "seconds"))

    def to_json(self) -> dict:
        return asdict(self)

    def step(self, edge: Edge, dest_area: str, speed: str) -> tuple[float, float, float]:
        """(time, collision probability, intrusiveness penalty) of one move."""
        return (edge.distance / self.speeds[speed], self.collision[speed][edge.obstacle],
                self.intrusiveness[dest_area])


@dataclass(frozen=True)
class CostProfile:
    """Dollars per second of travel, per expected collision, per intrusiveness unit."""

    per_second: float
    per_collision: float
    per_intrusion: float

    def __post_init__(self):
        if min(self.per_second, self.per_collision, self.per_intrusion) <= 0:
            raise ValueError("cost profile amounts must be positive")

    @property
    def weights(self) -> dict[str, float]:
        return {QA_TIME: self.per_second, QA_COLLISION: self.per_collision, QA_INTRUSION: self.per_intrusion}

    def cost(self, values: Sequence[float]) -> float:
        t, c, i = values
        return self.per_second * t + self.per_collision * c + self.per_intrusion * i

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: Mapping) -> "CostProfile":
        return cls(float(d["per_second"]), float(d["per_collision"]), float(d["per_intrusion"]))


VOCABULARY = {
    QA_COLLISION: {"noun": "collisions", "best": "the navigation route with the fewest expected collisions"},
    QA_TIME: {"noun": "travel time", "better": "shorter", "best": "the fastest navigation route"},
    QA_INTRUSION: {"noun": "intrusiveness", "subject": "the robot", "count_noun": "locations",
                   "count_noun_one": "location",
                   "best": "the least intrusive navigation route"},
}


def move_name(dest: str) -> str:
    return f"MoveTo({dest})"


def speed_name(speed: str) -> str:
    return f"SetSpeed({speed})"


def build_problem(building: BuildingMap, start: str, goal: str, tables: DomainTables | None = None,
                  profile: CostProfile | None = None, name: str = "robot-navigation") -> ExplainableProblem:
    """Total-cost problem over location x speed with MoveTo / SetSpeed actions."""
    tables = tables or DomainTables.defaults()
    ids = [x.id for x in building.locations]
    for loc in (start, goal):
        if loc not in ids:
            raise UnknownLocation(f"unknown location {loc!r}")
    if not nx.has_path(building.graph(), start, goal):
        raise DisconnectedGoal(f"{goal} cannot be reached from {start}")
    profile = profile or CostProfile(1.0, 1.0, 1.0)
    speeds = tuple(s for s in SPEEDS if s in tables.speeds) + tuple(s for s in tables.speeds if s not in SPEEDS)

    state_types = [TypeDef("Location", (AttributeDef("id"), AttributeDef("area", AREAS))),
                   TypeDef("Speed", (AttributeDef("mps", unit="m/s"),))]
    action_types = [TypeDef("MoveTo", (AttributeDef("distance", unit="m"), AttributeDef("obstacle", DENSITIES))),
                    TypeDef("SetSpeed")]
    loc_var = StateVar("loc", "Location", tuple(ids), {x.id: {"id": x.id, "area": x.area} for x in building.locations})
    speed_var = StateVar("speed", "Speed", speeds, {s: {"mps": tables.speeds[s]} for s in speeds})

    actions = []
    g = building.graph()
    for dest in ids:
        rules = [ActionRule({"loc": src}, [Outcome(1.0, {"loc": dest})],
                            {"distance": g.edges[src, dest]["distance"], "obstacle": g.edges[src, dest]["obstacle"]})
                 for src in ids if g.has_edge(src, dest)]
        if rules:
            actions.append(ActionDef(move_name(dest), "MoveTo", rules, {"dest": ("loc", dest)}))
    for s in speeds:
        others = [o for o in speeds if o != s]
        actions.append(ActionDef(speed_name(s), "SetSpeed", [ActionRule({"speed": others}, [Outcome(1.0, {"speed": s})])]))

    collision_table = {"keys": ["speed", "action.obstacle"],
                       "entries": [{"key": [s, d], "value": tables.collision[s][d]} for s in speeds for d in DENSITIES]}
    intrusion_table = {"keys": ["action.dest.area"],
                       "entries": [{"key": [a], "value": EVENT_LEVELS[a][0]} for a in AREAS]}
    specs = [
        QaSpec(QA_TIME, STANDARD, ValueFn({"by_action_type": {"MoveTo": {"expr": "action.distance / speed.mps"},
                                                              "SetSpeed": 0.0}}), unit=tables.time_unit),
        QaSpec(QA_COLLISION, EVENT_COUNT, ValueFn({"by_action_type": {"MoveTo": {"table": collision_table},
                                                                      "SetSpeed": 0.0}}), event=QA_COLLISION),
        QaSpec(QA_INTRUSION, NONSTANDARD, ValueFn({"by_action_type": {"MoveTo": {"table": intrusion_table},
                                                                      "SetSpeed": None}}),
               events=tuple(EventLevel(EVENT_LEVELS[a][0], EVENT_LEVELS[a][1], tables.intrusiveness[a])
                            for a in AREAS)),
    ]
    crit = Criterion(TOTAL_COST, [({"loc": start, "speed": tables.start_speed}, 1.0)], [{"loc": goal}])
    vocab = copy.deepcopy(VOCABULARY)
    vocab[QA_TIME]["unit"] = tables.time_unit
    return ExplainableProblem(name, state_types, action_types, [loc_var, speed_var], actions, crit, specs,
                              profile.weights, {q: (1.0, 0.0) for q in profile.weights}, vocab)


# --------------------------------------------------------------------------
# the two-route instance


FIGURE1_START, FIGURE1_GOAL = "L1", "L7"
FORK_START, FORK_GOAL = "L1", "L4"
FIGURE1_DASHED = ("L1", "L2", "L3", "L4", "L7")
FIGURE1_DOTTED = ("L1", "L5", "L7")
FIGURE1_PROFILE = CostProfile(per_second=1.0, per_collision=200.0, per_intrusion=10.0)


def figure1_map() -> BuildingMap:
    """A corridor loop through public areas versus a short cut through an office.

    The long way round (L1-L2-L3-L4-L7, 160 m) is public and obstacle free;
    the direct way (L1-L5-L7, 100 m) crosses a private office with sparse
    obstacles. A semi-private room L6 hangs off the office with dense
    clutter and is never worth visiting.
    """
    locs = [Location("L1", "public", (0, 0)), Location("L2", "public", (0, 40)),
            Location("L3", "public", (40, 40)), Location("L4", "public", (80, 40)),
            Location("L5", "private", (40, 0)), Location("L6", "semi-private", (40, -30)),
            Location("L7", "public", (80, 0))]
    edges = [Edge("L1", "L2", 40.0), Edge("L2", "L3", 40.0), Edge("L3", "L4", 40.0), Edge("L4", "L7", 40.0),
             Edge("L1", "L5", 50.0, "sparse"), Edge("L5", "L7", 50.0, "sparse"),
             Edge("L5", "L6", 30.0, "dense"), Edge("L6", "L7", 50.0, "dense")]
    return BuildingMap(locs, edges)


def figure1_instance(tables: DomainTables | None = None) -> ExplainableProblem:
    return build_problem(figure1_map(), FIGURE1_START, FIGURE1_GOAL, tables, FIGURE1_PROFILE, name="figure1")


# --------------------------------------------------------------------------
# routes


@dataclass(frozen=True)
class Route:
    """Locations visited and the speed used on each move."""

    stops: tuple[str, ...]
    speeds: tuple[str, ...]

    def describe(self) -> str:
        if len(set(self.speeds)) == 1:
            return f"taking the route {' -> '.join(self.stops)} at {self.speeds[0]} speed"
        legs = [self.stops[0]] + [f"{b} ({s} speed)" for b, s in zip(self.stops[1:], self.speeds)]
        return "taking the route " + " -> ".join(legs)

    def values(self, building: BuildingMap, tables: DomainTables) -> tuple[float, float, float]:
        t = c = i = 0.0
        for a, b, s in zip(self.stops, self.stops[1:], self.speeds):
            dt, dc, di = tables.step(building.edge(a, b), building.area(b), s)
            t, c, i = t + dt, c + dc, i + di
        return (t, c, i)

    def to_json(self) -> dict:
        return {"stops": list(self.stops), "speeds": list(self.speeds)}

    @classmethod
    def from_json(cls, d: Mapping) -> "Route":
        return cls(tuple(d["stops"]), tuple(d["speeds"]))


def policy_route(mdp: ExplicitMdp, policy, max_steps: int = 10_000) -> Route:
    """Follow a deterministic navigation policy from the start to the goal."""
    s = int(mdp.initial_states[0])
    loc_i, speed_i = mdp.var_names.index("loc"), mdp.var_names.index("speed")
    stops = [mdp.state_labels[s][loc_i]]
    speeds = []
    for _ in range(max_steps):
        if mdp.goal[s]:
            return Route(tuple(stops), tuple(speeds))
        p = policy.choice[s]
        nxt = int(mdp.transitions.getrow(p).indices[0])
        if mdp.pair_labels[p].startswith("MoveTo"):
            speeds.append(mdp.state_labels[s][speed_i])
            stops.append(mdp.state_labels[nxt][loc_i])
        s = nxt
    raise ValueError("policy does not reach the goal")


def simple_routes(building: BuildingMap, start: str, goal: str, cutoff: int | None = None) -> Iterator[list[str]]:
    yield from nx.all_simple_paths(building.graph(), start, goal, cutoff=cutoff)


def best_route_cost(building: BuildingMap, start: str, goal: str, tables: DomainTables,
                    profile: CostProfile) -> tuple[float, Route]:
    """Exhaustive minimum of the profile's cost over simple routes.

    Moves are deterministic and costs add up per move, so the cheapest
    speed on each move can be picked independently; revisiting a location
    never pays because every move takes positive time.
    """
    best, arg = math.inf, None
    for path in simple_routes(building, start, goal):
        total, speeds = 0.0, []
        for a, b in zip(path, path[1:]):
            options = [(profile.cost(tables.step(building.edge(a, b), building.area(b), s)), k, s)
                       for k, s in enumerate(tables.speeds)]
            c, _, s = min(options)
            total += c
            speeds.append(s)
        if total < best - 1e-12:
            best, arg = total, Route(tuple(path), tuple(speeds))
    return best, arg


def route_value_vectors(building: BuildingMap, start: str, goal: str, tables: DomainTables,
                        cap: int = 100_000) -> list[tuple[Route, tuple[float, float, float]]]:
    """Every (simple route, speed assignment) with its QA vector."""
    out = []
    for path in simple_routes(building, start, goal):
        for speeds in np.ndindex(*([len(tables.speeds)] * (len(path) - 1))):
            names = list(tables.speeds)
            r = Route(tuple(path), tuple(names[k] for k in speeds))
            out.append((r, r.values(building, tables)))
            if len(out) > cap:
                raise CapExceeded(f"more than {cap} routes to enumerate")
    return out


# --------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class Topology:
    name: str
    locations: tuple[tuple[str, tuple[float, float]], ...]
    edges: tuple[tuple[str, str], ...]
    start: str
    goal: str


def grid_topology(rows: int = 3, cols: int = 5) -> Topology:
    """Corridor grid; column and row spacings are uneven so route lengths differ."""
    xs = [0.0, 12.0, 20.0, 35.0, 44.0, 56.0, 63.0][:cols]
    ys = [0.0, 9.0, 20.0, 27.0, 38.0][:rows]
    if len(xs) < cols or len(ys) < rows:
        raise ValueError("grid topology supports at most 5 rows and 7 columns")
    locs = tuple((f"L{r * cols + c + 1}", (xs[c], ys[r])) for r in range(rows) for c in range(cols))
    edges = []
    for r in range(rows):
        for c in range(cols):
            k = r * cols + c + 1
            if c + 1 < cols:
                edges.append((f"L{k}", f"L{k + 1}"))
            if r + 1 < rows:
                edges.append((f"L{k}", f"L{k + cols}"))
    return Topology(f"grid{rows}x{cols}", locs, tuple(edges), locs[0][0], locs[-1][0])


def line_topology(n: int = 4) -> Topology:
    locs = tuple((f"L{k + 1}", (12.0 * k, 0.0)) for k in range(n))
    edges = tuple((f"L{k + 1}", f"L{k + 2}") for k in range(n - 1))
    return Topology(f"line{n}", locs, edges, locs[0][0], locs[-1][0])


TOPOLOGIES = {"grid": grid_topology, "line": line_topology}


def random_map(rng: np.random.Generator, topo: Topology, obstacle_free: bool = False) -> BuildingMap:
    """Same structure, fresh areas and obstacles."""
    where = dict(topo.locations)
    locs = [Location(i, str(rng.choice(AREAS, p=[0.5, 0.25, 0.25])), xy) for i, xy in topo.locations]
    edges = []
    for a, b in topo.edges:
        d = float(round(math.dist(where[a], where[b]), 2))
        dens = "none" if obstacle_free else str(rng.choice(DENSITIES, p=[0.5, 0.3, 0.2]))
        edges.append(Edge(a, b, d, dens))
    return BuildingMap(locs, edges)


def random_profile(rng: np.random.Generator) -> CostProfile:
    return CostProfile(float(round(rng.uniform(0.5, 2.0), 2)), float(round(rng.uniform(20.0, 200.0), 2)),
                       float(round(rng.uniform(2.0, 20.0), 2)))


def perturbed_profile(rng: np.random.Generator, user: CostProfile) -> CostProfile:
    """Each amount scaled by a log-uniform factor in [0.1, 10]."""
    f = np.exp(rng.uniform(math.log(0.1), math.log(10.0), size=3))
    return CostProfile(float(round(user.per_second * f[0], 4)), float(round(user.per_collision * f[1], 4)),
                       float(round(user.per_intrusion * f[2], 4)))


@dataclass
class Scenario:
    id: str
    map: BuildingMap
    start: str
    goal: str
    tables: DomainTables
    robot_profile: CostProfile
    user_profile: CostProfile
    label: str
    route: Route
    values: tuple[float, float, float]
    bundle: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "label": self.label,
            "start": self.start,
            "goal": self.goal,
            "map": self.map.to_json(),
            "tables": self.tables.to_json(),
            "robot_profile": self.robot_profile.to_json(),
            "user_profile": self.user_profile.to_json(),
            "plan": {"route": self.route.to_json(), "description": self.route.describe(),
                     "values": dict(zip((QA_TIME, QA_COLLISION, QA_INTRUSION), self.values))},
            **self.bundle,
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "Scenario":
        vals = d["plan"]["values"]
        extra = {k: v for k, v in d.items() if k in ("control", "treatment")}
        return cls(d["id"], BuildingMap.from_json(d["map"]), d["start"], d["goal"], DomainTables.from_json(d["tables"]),
                   CostProfile.from_json(d["robot_profile"]), CostProfile.from_json(d["user_profile"]), d["label"],
                   Route.from_json(d["plan"]["route"]), (vals[QA_TIME], vals[QA_COLLISION], vals[QA_INTRUSION]),
                   extra)


def verify_scenario(sc: Scenario, margin: float = SEVERITY_MARGIN) -> str:
    """Recompute the label by exhaustive route search under the user's costs."""
    robot_vals = sc.route.values(sc.map, sc.tables)
    robot_cost = sc.user_profile.cost(robot_vals)
    best, _ = best_route_cost(sc.map, sc.start, sc.goal, sc.tables, sc.user_profile)
    tol = COST_TOL * max(1.0, abs(best))
    if sc.label == EASY_UNDOMINATED:
        front = pareto_filter([(r, np.array(v)) for r, v in route_value_vectors(sc.map, sc.start, sc.goal, sc.tables)])
        if len(front.members) == 1 and np.allclose(front.members[0][1], robot_vals, atol=1e-9):
            return EASY_UNDOMINATED
    if sc.label == EASY_SUBOPTIMAL and robot_cost >= (1.0 + margin) * best - tol:
        return EASY_SUBOPTIMAL
    return ALIGNED if robot_cost <= best + tol else MISALIGNED


def _plan(problem: ExplainableProblem):
    from .valuation import evaluate, solve_optimal
    mdp = compile(problem)
    pol = solve_optimal(mdp)
    return mdp, pol, evaluate(mdp, pol)


def _treatment_bundle(mdp: ExplicitMdp, pol, val, limits=None) -> dict:
    from .alternatives import generate_alternatives
    from .explain import explain
    alts = generate_alternatives(mdp, None, pol, limits=limits)
    exp = explain(mdp, pol, val, alts.results, alts.lower_bounds,
                  describe_policy=lambda r, label: policy_route(mdp, r.policy).describe())
    return {
        "text": exp.text,
        "explanation": exp.to_json(),
        "alternatives": [{**r.to_json(mdp), "route": policy_route(mdp, r.policy).to_json()} for r in alts.results],
        "alternative_failures": alts.failures,
    }


def make_scenario(sid: str, building: BuildingMap, topo_start: str, topo_goal: str, tables: DomainTables,
                  robot: CostProfile, user: CostProfile, label: str, limits=None) -> Scenario:
    problem = build_problem(building, topo_start, topo_goal, tables, robot, name=sid)
    mdp, pol, val = _plan(problem)
    route = policy_route(mdp, pol)
    values = tuple(float(v) for v in val.values)
    bundle = {
        "control": {"valuation": val.to_json()},
        "treatment": _treatment_bundle(mdp, pol, val, limits),
    }
    return Scenario(sid, building, topo_start, topo_goal, tables, robot, user, label, route, values, bundle)


def generate_scenarios(seed: int, count: int, topology: str | Topology = "grid", profiles: int | None = None,
                       easy: int = 0, tables: DomainTables | None = None, limits=None) -> list[Scenario]:
    """``count`` question items, alternating aligned and misaligned.

    Items share ``profiles`` user cost profiles round-robin in blocks
    (default: one profile per three items). ``easy`` extra items alternate
    easy-undominated (single obstacle-free corridor) and easy-suboptimal
    (see :func:`fork_map`). Maps for aligned and misaligned items are
    redrawn until the robot's explanation has an alternative.
    """
    if count < 2:
        raise ValueError("need at least two scenarios")
    topo = TOPOLOGIES[topology]() if isinstance(topology, str) else topology
    tables = tables or DomainTables.defaults()
    profiles = profiles or max(1, math.ceil(count / 3))
    per = math.ceil(count / profiles)
    root = np.random.SeedSequence(seed)
    prof_rng = np.random.default_rng(root.spawn(1)[0])
    user_profiles = [random_profile(prof_rng) for _ in range(profiles)]
    item_seeds = root.spawn(count + easy + 1)[1:]
    out = []
    for k in range(count):
        rng = np.random.default_rng(item_seeds[k])
        label = ALIGNED if k % 2 == 0 else MISALIGNED
        out.append(_sample_item(f"item{k + 1:03d}", rng, topo, tables, user_profiles[k // per], label, limits))
    for e in range(easy):
        rng = np.random.default_rng(item_seeds[count + e])
        label = EASY_UNDOMINATED if e % 2 == 0 else EASY_SUBOPTIMAL
        out.append(_sample_item(f"easy{e + 1:03d}", rng, topo, tables, user_profiles[e % profiles], label, limits))
    return out


def _sample_item(sid: str, rng: np.random.Generator, topo: Topology, tables: DomainTables, user: CostProfile,
                 label: str, limits) -> Scenario:
    for _ in range(MAP_RETRY_CAP):
        if label == EASY_SUBOPTIMAL:
            building, robot = fork_map(rng, user, tables)
            start, goal = FORK_START, FORK_GOAL
        else:
            if label == EASY_UNDOMINATED:
                line = line_topology()
                building = random_map(rng, line, obstacle_free=True)
                start, goal = line.start, line.goal
            else:
                building = random_map(rng, topo)
                start, goal = topo.start, topo.goal
            best, _ = best_route_cost(building, start, goal, tables, user)
            robot = _robot_profile(rng, building, start, goal, tables, user, best, label)
        if robot is None:
            continue
        sc = make_scenario(sid, building, start, goal, tables, robot, user, label, limits)
        if label in (ALIGNED, MISALIGNED) and not sc.bundle["treatment"]["alternatives"]:
            continue
        if verify_scenario(sc) != label:
            continue
        return sc
    raise SamplingExhausted(f"no {label} scenario found for {sid} after {MAP_RETRY_CAP} maps")


def fork_map(rng: np.random.Generator, user: CostProfile, tables: DomainTables) -> tuple[BuildingMap, CostProfile]:
    """Two-way map for a severely suboptimal plan.

    The direct route L1-L2-L4 is short but crosses a private area through
    dense obstacles; the detour L1-L3-L4 is public and clear but long. The
    robot puts 10x the user's weight on collisions and intrusiveness and
    0.1x on time, so it takes the detour, whose length is drawn so that it
    costs the user at least ``1 + SEVERITY_MARGIN`` times the direct route.
    """
    fast = max(tables.speeds, key=tables.speeds.get)
    robot = CostProfile(round(0.1 * user.per_second, 4), round(10 * user.per_collision, 4),
                        round(10 * user.per_intrusion, 4))
    for _ in range(RETRY_CAP):
        d = float(round(rng.uniform(5.0, 12.0), 2))
        direct = Edge("L1", "L2", d, "dense"), Edge("L2", "L4", d, "dense")

        def direct_cost(p: CostProfile) -> float:
            return sum(min(p.cost(tables.step(e, area, sp)) for sp in tables.speeds)
                       for e, area in zip(direct, ("private", "public")))

        # detour cost at top speed is per_second * length / speed
        lo = (1.0 + SEVERITY_MARGIN) * direct_cost(user) * tables.speeds[fast] / user.per_second
        hi = direct_cost(robot) * tables.speeds[fast] / robot.per_second
        if 1.05 * lo < 0.95 * hi:
            break
    else:
        raise SamplingExhausted("domain tables admit no severely suboptimal detour")
    length = float(round(rng.uniform(1.05 * lo, min(0.95 * hi, 2.0 * lo)), 2))
    locs = [Location("L1", "public", (0.0, 0.0)), Location("L2", "private", (d, 0.0)),
            Location("L3", "public", (d, length / 2)), Location("L4", "public", (2 * d, 0.0))]
    edges = [*direct, Edge("L1", "L3", round(length / 2, 2), "none"), Edge("L3", "L4", round(length / 2, 2), "none")]
    return BuildingMap(locs, edges), robot


def _robot_profile(rng, building, start, goal, tables, user, best, label) -> CostProfile | None:
    if label in (ALIGNED, EASY_UNDOMINATED):
        return user
    need = best * (1 + COST_TOL) + COST_TOL
    for _ in range(RETRY_CAP):
        robot = perturbed_profile(rng, user)
        _, route = best_route_cost(building, start, goal, tables, robot)
        if user.cost(route.values(building, tables)) > need:
            return robot
    return None


def scenarios_to_json(items: Sequence[Scenario], seed: int, topology: str) -> dict:
    return {"seed": seed, "topology": topology, "count": len(items), "items": [s.to_json() for s in items]}
