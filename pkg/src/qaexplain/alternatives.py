"""Pareto-optimal, QA-improving alternatives via occupation-measure MILPs.

For a target QA ``i`` the planner's cost is re-weighted so that QA ``i``
keeps only a small weight ``k'_i``, and the expected QA ``i`` value is
bounded by ``theta_i = D_i - delta_i``. Binary indicators restrict every
state to one action, so the optimum is a deterministic policy. With a
:class:`PenaltySpec` the bound becomes soft: the QA row is relaxed by a
violation variable ``v_i`` whose (piecewise-linear, convex) penalty enters
the objective, and a second row keeps the QA value at or below ``D_i``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from . import milp
from .mdp import AVERAGE_COST, TOTAL_COST, ExplicitMdp, ScalarizationProfile
from .valuation import (MILP_ALTERNATIVE, EvaluationError, Policy, PolicyValuation, evaluate,
                        per_qa_lower_bound, reachable_states, visit_measure)

log = logging.getLogger(__name__)

POSITIVE = 1e-9
BOUND_TOL = 1e-6
DEFAULT_DELTA_FRACTION = 0.1
DEFAULT_KPRIME_RATIO = 0.01
DEFAULT_PENALTY_FACTOR = 10.0
DEFAULT_SEGMENTS = 8


class AlternativeError(RuntimeError):
    pass


class NonconvexPenalty(ValueError):
    pass


class AmbiguousRecovery(AlternativeError):
    """More than one action carries positive measure at a state."""


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty on the violation ``v`` of a soft QA bound, in QA units.

    ``linear``: ``slope * v``. ``quadratic``: ``coefficient * v**2``
    approximated by ``segments`` secants over ``[0, upper]``.
    ``piecewise``: explicit ``slopes`` over equal-width segments.
    """

    shape: str = "quadratic"
    slope: float = 0.0
    coefficient: float = 0.0
    segments: int = DEFAULT_SEGMENTS
    upper: float | None = None
    slopes: tuple[float, ...] = ()

    def pieces(self, upper: float) -> list[tuple[float, float]]:
        """(width, slope) per linear piece."""
        if self.shape == "linear":
            return [(upper, self.slope)]
        if self.shape == "quadratic":
            n = max(1, int(self.segments))
            w = upper / n
            out = [(w, self.coefficient * w * (2 * k + 1)) for k in range(n)]
        elif self.shape == "piecewise":
            n = len(self.slopes)
            out = [(upper / n, float(s)) for s in self.slopes]
        else:
            raise ValueError(f"unknown penalty shape {self.shape!r}")
        slopes = [s for _, s in out]
        if any(b < a for a, b in zip(slopes, slopes[1:])):
            raise NonconvexPenalty("penalty segment slopes must be nondecreasing")
        if slopes and slopes[0] < 0:
            raise NonconvexPenalty("penalty must be nondecreasing from zero")
        return out

    def value(self, v: float, upper: float) -> float:
        """Piecewise-linear penalty actually used in the MILP."""
        total, left = 0.0, max(0.0, v)
        for width, slope in self.pieces(upper):
            take = min(width, left)
            total += take * slope
            left -= take
        return total + left * (self.pieces(upper)[-1][1] if left > 0 else 0.0)


@dataclass(frozen=True)
class AlternativeQuery:
    target: int
    solution_value: float  # D_i
    delta: float
    k_prime: float
    penalty: PenaltySpec | None = None  # None: hard bound

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("improvement margin must be positive")
        if not self.k_prime > 0:
            raise ValueError("k' must be positive")

    @property
    def theta(self) -> float:
        return self.solution_value - self.delta

    @property
    def violation_cap(self) -> float:
        if self.penalty is not None and self.penalty.upper is not None:
            return self.penalty.upper
        return self.delta


@dataclass
class BuiltMilp:
    """A constructed MILP plus the index maps needed to read a solution."""

    model: milp.MilpModel
    mdp: ExplicitMdp
    query: AlternativeQuery | None
    x: np.ndarray  # pair -> variable index
    dx: np.ndarray
    y: np.ndarray | None = None
    dy: np.ndarray | None = None
    v: int | None = None
    X: float = 1.0
    Y: float = 1.0
    qa_row: int | None = None

    def occupation(self, sol: milp.MilpSolution) -> np.ndarray:
        return np.asarray(sol.x)[self.x]

    def y_measure(self, sol: milp.MilpSolution) -> np.ndarray | None:
        return None if self.y is None else np.asarray(sol.x)[self.y]

    def violation(self, sol: milp.MilpSolution) -> float:
        return 0.0 if self.v is None else float(sol.x[self.v])


def default_bound_X(mdp: ExplicitMdp) -> float:
    """Upper bound on occupation measures: |S| / (smallest positive probability)."""
    data = mdp.transitions.data
    pmin = float(data[data > 0].min()) if data.size else 1.0
    return mdp.num_states / pmin


def _objective(mdp: ExplicitMdp, profile: ScalarizationProfile, query: AlternativeQuery | None) -> np.ndarray:
    prof = profile if query is None else profile.with_weight(query.target, query.k_prime)
    return prof.pair_costs(mdp.qa)


def _sname(mdp: ExplicitMdp, s: int) -> str:
    return f"s{s}"


def _add_qa_rows(b: BuiltMilp, query: AlternativeQuery | None) -> None:
    if query is None:
        return
    m = b.model
    row = {int(b.x[p]): float(q) for p, q in enumerate(b.mdp.qa[:, query.target]) if q != 0.0}
    b.qa_row = m.add_constraint(row, "<=", query.theta, name="qa_bound")
    if query.penalty is not None:
        apply_soft_constraint(b, query)


def build_total_cost_milp(mdp: ExplicitMdp, profile: ScalarizationProfile | None,
                          query: AlternativeQuery | None, X: float | None = None) -> BuiltMilp:
    """Occupation-measure MILP for the expected total cost to reach the goal."""
    if mdp.criterion != TOTAL_COST:
        raise ValueError("total-cost MILP needs a total-cost model")
    profile = profile or mdp.profile
    starts = mdp.initial_states
    if len(starts) != 1:
        raise ValueError("total-cost MILP needs a single initial state")
    s0 = int(starts[0])
    X = float(X or default_bound_X(mdp))
    m = milp.MilpModel(f"{mdp.name}-total" + ("" if query is None else f"-qa{query.target}"))
    x = np.array([m.add_var(f"x_{p}", 0.0, math.inf, tag=("x", int(mdp.pair_state[p]), p))
                  for p in range(mdp.num_pairs)], dtype=int)
    dx = np.array([m.add_var(f"d_{p}", binary=True, tag=("d", int(mdp.pair_state[p]), p))
                   for p in range(mdp.num_pairs)], dtype=int)
    cost = _objective(mdp, profile, query)
    m.set_objective({int(x[p]): float(cost[p]) for p in range(mdp.num_pairs)})

    inflow = _inflow(mdp, x)
    for s in range(mdp.num_states):
        if mdp.goal[s] or s == s0:
            continue
        m.add_constraint(_flow(mdp, s, x, inflow), "=", 0.0, name=f"flow_{_sname(mdp, s)}")
    m.add_constraint(_flow(mdp, s0, x, inflow), "=", 1.0, name="source")
    goal_in: dict[int, float] = {}
    for g in np.flatnonzero(mdp.goal):
        for j, a in inflow[g].items():
            goal_in[j] = goal_in.get(j, 0.0) + a
    m.add_constraint(goal_in, "=", 1.0, name="goal_inflow")
    for s in range(mdp.num_states):
        if mdp.state_pairs[s]:
            m.add_constraint({int(dx[p]): 1.0 for p in mdp.state_pairs[s]}, "<=", 1.0, name=f"one_{_sname(mdp, s)}")
    for p in range(mdp.num_pairs):
        m.add_constraint({int(x[p]): 1.0, int(dx[p]): -X}, "<=", 0.0, name=f"link_{p}")
    built = BuiltMilp(m, mdp, query, x, dx, X=X)
    _add_qa_rows(built, query)
    return built


def _inflow(mdp: ExplicitMdp, x: np.ndarray) -> list[dict[int, float]]:
    inflow: list[dict[int, float]] = [dict() for _ in range(mdp.num_states)]
    T = mdp.transitions.tocoo()
    for p, t, pr in zip(T.row, T.col, T.data):
        inflow[t][int(x[p])] = inflow[t].get(int(x[p]), 0.0) + float(pr)
    return inflow


def _flow(mdp: ExplicitMdp, s: int, x: np.ndarray, inflow) -> dict[int, float]:
    row: dict[int, float] = {int(x[p]): 1.0 for p in mdp.state_pairs[s]}
    for j, a in inflow[s].items():
        row[j] = row.get(j, 0.0) - a
    return row


def build_average_cost_milp(mdp: ExplicitMdp, profile: ScalarizationProfile | None,
                            query: AlternativeQuery | None, X: float = 1.0, Y: float = 1.0) -> BuiltMilp:
    """Two-measure MILP for the long-run average cost (any chain structure)."""
    if mdp.criterion != AVERAGE_COST:
        raise ValueError("average-cost MILP needs an average-cost model")
    profile = profile or mdp.profile
    m = milp.MilpModel(f"{mdp.name}-average" + ("" if query is None else f"-qa{query.target}"))
    n = mdp.num_pairs
    x = np.array([m.add_var(f"x_{p}", tag=("x", int(mdp.pair_state[p]), p)) for p in range(n)], dtype=int)
    y = np.array([m.add_var(f"y_{p}", tag=("y", int(mdp.pair_state[p]), p)) for p in range(n)], dtype=int)
    dx = np.array([m.add_var(f"dx_{p}", binary=True, tag=("dx", int(mdp.pair_state[p]), p)) for p in range(n)],
                  dtype=int)
    dy = np.array([m.add_var(f"dy_{p}", binary=True, tag=("dy", int(mdp.pair_state[p]), p)) for p in range(n)],
                  dtype=int)
    cost = _objective(mdp, profile, query)
    m.set_objective({int(x[p]): float(cost[p]) for p in range(n)})
    in_x, in_y = _inflow(mdp, x), _inflow(mdp, y)
    for s in range(mdp.num_states):
        m.add_constraint(_flow(mdp, s, x, in_x), "=", 0.0, name=f"xflow_{_sname(mdp, s)}")
    for s in range(mdp.num_states):
        row = {int(x[p]): 1.0 for p in mdp.state_pairs[s]}
        for j, a in _flow(mdp, s, y, in_y).items():
            row[j] = row.get(j, 0.0) + a
        m.add_constraint(row, "=", float(mdp.alpha[s]), name=f"yflow_{_sname(mdp, s)}")
    for s in range(mdp.num_states):
        m.add_constraint({int(dx[p]): 1.0 for p in mdp.state_pairs[s]}, "<=", 1.0, name=f"onex_{_sname(mdp, s)}")
    for p in range(n):
        m.add_constraint({int(x[p]): 1.0, int(dx[p]): -X}, "<=", 0.0, name=f"linkx_{p}")
    for s in range(mdp.num_states):
        m.add_constraint({int(dy[p]): 1.0 for p in mdp.state_pairs[s]}, "<=", 1.0, name=f"oney_{_sname(mdp, s)}")
    for p in range(n):
        m.add_constraint({int(y[p]): 1.0, int(dy[p]): -Y}, "<=", 0.0, name=f"linky_{p}")
    built = BuiltMilp(m, mdp, query, x, dx, y, dy, X=X, Y=Y)
    _add_qa_rows(built, query)
    return built


def apply_soft_constraint(built: BuiltMilp, query: AlternativeQuery) -> BuiltMilp:
    """Replace the hard QA row by the soft triple and add the penalty.

    Rows after the rewrite::

        sum x*QA_i        <= D_i
        sum x*QA_i - v_i  <= theta_i
                    - v_i <= 0

    The penalty is linear in ``v_i`` or a convex piecewise-linear
    approximation with one bounded variable per segment.
    """
    if query.penalty is None:
        raise ValueError("soft constraint needs a penalty spec")
    m = built.model
    if built.qa_row is None:
        raise ValueError("model has no QA row to soften")
    cap = query.violation_cap
    pieces = query.penalty.pieces(cap)
    qa_coeffs = dict(m.constraints[built.qa_row].coeffs)
    v = m.add_var("v", 0.0, cap, tag=("v", query.target))
    m.constraints[built.qa_row] = milp.Constraint("qa_cap", qa_coeffs, "<=", float(query.solution_value))
    soft = dict(qa_coeffs)
    soft[v] = -1.0
    m.add_constraint(soft, "<=", query.theta, name="qa_soft")
    m.add_constraint({v: -1.0}, "<=", 0.0, name="qa_violation_nonneg")
    if query.penalty.shape == "linear":
        m.add_objective_terms({v: pieces[0][1]})
    else:
        link = {v: 1.0}
        for k, (width, slope) in enumerate(pieces):
            w = m.add_var(f"w_{k}", 0.0, width, tag=("w", k))
            link[w] = -1.0
            m.add_objective_terms({w: slope})
        m.add_constraint(link, "=", 0.0, name="penalty_split")
    built.v = v
    return built


# --------------------------------------------------------------------------
# recovery


def recover_policy(sol: milp.MilpSolution, built: BuiltMilp) -> Policy:
    """Deterministic policy from an optimal MILP assignment.

    Total cost: the action with positive occupation at each state; only the
    states reachable from the start under those choices keep them (positive
    measure elsewhere is a detached zero-cost circulation). Average cost:
    ``x`` decides on the recurrent states ``S_x``, ``y`` on the rest. States
    without positive measure get their first action and are flagged.
    """
    if sol.x is None or not sol.optimal:
        raise AlternativeError(f"cannot recover a policy from a {sol.status} solution")
    mdp = built.mdp
    xv = built.occupation(sol)
    yv = built.y_measure(sol)
    choice = np.full(mdp.num_states, -1)

    def positive(vals, s):
        hits = [p for p in mdp.state_pairs[s] if vals[p] > POSITIVE]
        if len(hits) > 1:
            raise AmbiguousRecovery(f"actions {[mdp.pair_labels[p] for p in hits]} all positive at "
                                    f"{mdp.state_name(s)}")
        return hits[0] if hits else -1

    for s in range(mdp.num_states):
        if not mdp.state_pairs[s]:
            continue
        p = positive(xv, s)
        if p < 0 and yv is not None:
            p = positive(yv, s)
        choice[s] = p
    target = None if built.query is None else built.query.target
    pol = Policy(tuple(int(c) for c in choice), mdp.criterion, MILP_ALTERNATIVE, target)
    reach = reachable_states(mdp, _filled(mdp, pol))
    flagged = set()
    for s in range(mdp.num_states):
        if mdp.state_pairs[s] and (choice[s] < 0 or not reach[s]):
            flagged.add(s)
            if choice[s] < 0 or mdp.criterion == TOTAL_COST:
                choice[s] = mdp.state_pairs[s][0] if choice[s] < 0 else choice[s]
    return Policy(tuple(int(c) for c in choice), mdp.criterion, MILP_ALTERNATIVE, target, frozenset(flagged))


def _filled(mdp: ExplicitMdp, pol: Policy) -> Policy:
    choice = [c if c >= 0 or not mdp.state_pairs[s] else mdp.state_pairs[s][0] for s, c in enumerate(pol.choice)]
    return Policy(tuple(choice), pol.criterion, pol.provenance, pol.target_qa)


def detached_states(sol: milp.MilpSolution, built: BuiltMilp, policy: Policy) -> list[int]:
    """States with positive x that the recovered policy never visits."""
    xv = built.occupation(sol)
    reach = reachable_states(built.mdp, policy)
    return [s for s in range(built.mdp.num_states)
            if not reach[s] and any(xv[p] > POSITIVE for p in built.mdp.state_pairs[s])]


# --------------------------------------------------------------------------
# end-to-end


@dataclass
class SolvedAlternative:
    built: BuiltMilp
    solution: milp.MilpSolution
    policy: Policy


def solve_query(mdp: ExplicitMdp, profile: ScalarizationProfile | None, query: AlternativeQuery | None,
                limits: milp.MilpLimits | None = None, X: float | None = None,
                max_doublings: int = 6) -> SolvedAlternative:
    """Build, solve and recover; re-solve when X binds or circulations appear."""
    profile = profile or mdp.profile
    for _ in range(max_doublings + 1):
        if mdp.criterion == TOTAL_COST:
            built = build_total_cost_milp(mdp, profile, query, X)
        else:
            built = build_average_cost_milp(mdp, profile, query)
        banned: set[int] = set()
        while True:
            for p in banned:
                built.model.variables[int(built.x[p])].hi = 0.0
            sol = milp.solve(built.model, limits)
            if not sol.optimal:
                raise AlternativeError(f"MILP ended with status {sol.status}")
            policy = recover_policy(sol, built)
            if mdp.criterion != TOTAL_COST:
                break
            loose = detached_states(sol, built, policy)
            if not loose:
                break
            banned |= {p for s in loose for p in mdp.state_pairs[s]}
        if mdp.criterion != TOTAL_COST or built.occupation(sol).max(initial=0.0) < built.X * (1 - 1e-9):
            return SolvedAlternative(built, sol, policy)
        X = 2 * built.X
        log.info("occupation bound X=%g binds; re-solving with %g", built.X, X)
    raise AlternativeError("occupation bound X kept binding")


@dataclass
class AlternativeResult:
    target: int
    target_name: str
    policy: Policy
    valuation: PolicyValuation
    violation: float
    gains: dict[str, float]
    losses: dict[str, float]
    objective: float
    stats: dict[str, Any] = field(default_factory=dict)

    def to_json(self, mdp: ExplicitMdp) -> dict:
        return {
            "target_qa": self.target_name,
            "policy": self.policy.to_json(mdp),
            "valuation": self.valuation.to_json(),
            "violation": self.violation,
            "gains": self.gains,
            "losses": self.losses,
            "milp_objective": self.objective,
            "milp_stats": self.stats,
        }


@dataclass
class AlternativeSet:
    results: list[AlternativeResult]
    failures: dict[str, str]
    skipped: dict[str, str]
    models: dict[str, milp.MilpModel]
    lower_bounds: list[float]


def compare(solution: PolicyValuation, other: PolicyValuation,
            tol: float = BOUND_TOL) -> tuple[dict[str, float], dict[str, float]]:
    """QA improvements and deteriorations of ``other`` relative to ``solution``."""
    gains, losses = {}, {}
    for name, d, a in zip(solution.qa_names, solution.values, other.values):
        if a < d - tol:
            gains[name] = d - a
        elif a > d + tol:
            losses[name] = a - d
    return gains, losses


def default_penalty(profile: ScalarizationProfile, i: int, delta: float, shape: str = "quadratic",
                    plan_cost: float = 0.0) -> PenaltySpec:
    """Penalty reaching ``10 * max(k_i, plan_cost)`` at a full violation ``delta``.

    The violation is measured as a fraction of its range and the scale is
    tied to the plan's own scalarized cost, so the soft bound only gives
    way when meeting it would cost many times more than the plan itself.
    """
    top = DEFAULT_PENALTY_FACTOR * max(profile.weights[i], abs(plan_cost))
    if shape == "linear":
        return PenaltySpec("linear", slope=top / delta, upper=delta)
    return PenaltySpec("quadratic", coefficient=top / delta**2, segments=DEFAULT_SEGMENTS, upper=delta)


def generate_alternatives(mdp: ExplicitMdp, profile: ScalarizationProfile | None, solution: Policy,
                          deltas: Mapping[int, float] | None = None,
                          k_prime_ratio: float = DEFAULT_KPRIME_RATIO,
                          penalty: str | PenaltySpec | Mapping[int, PenaltySpec] | None = "quadratic",
                          limits: milp.MilpLimits | None = None,
                          lower: Sequence[float] | None = None) -> AlternativeSet:
    """One Pareto-optimal, QA-``i``-improving alternative per QA where one exists.

    ``penalty`` is ``"quadratic"`` or ``"linear"`` (see
    :func:`default_penalty`), ``None`` for a hard bound, or explicit specs.
    Per-QA solver failures are collected in ``failures``.
    """
    profile = profile or mdp.profile
    if not 0 < k_prime_ratio < 1:
        raise ValueError("k' ratio must lie in (0, 1)")
    base = evaluate(mdp, solution, profile)
    lower = list(lower) if lower is not None else [per_qa_lower_bound(mdp, i) for i in range(mdp.num_qa)]
    results, failures, skipped, models = [], {}, {}, {}
    for i, spec in enumerate(mdp.qa_specs):
        D = base.values[i]
        if D - lower[i] <= BOUND_TOL:
            skipped[spec.name] = "already at its lower bound"
            continue
        delta = (deltas or {}).get(i)
        if delta is None:
            delta = max(DEFAULT_DELTA_FRACTION * (D - lower[i]), 1e-6)
        if isinstance(penalty, Mapping):
            pen = penalty.get(i)
        elif isinstance(penalty, PenaltySpec) or penalty is None:
            pen = penalty
        elif penalty in ("quadratic", "linear"):
            pen = default_penalty(profile, i, delta, penalty, base.scalarized_cost)
        else:
            raise ValueError(f"unknown penalty {penalty!r}")
        query = AlternativeQuery(i, D, delta, k_prime_ratio * profile.weights[i], pen)
        try:
            solved = solve_query(mdp, profile, query, limits)
            models[spec.name] = solved.built.model
            val = evaluate(mdp, solved.policy, profile)
        except (AlternativeError, EvaluationError, milp.ModelError) as exc:
            failures[spec.name] = str(exc)
            log.warning("alternative for %s failed: %s", spec.name, exc)
            continue
        if val.values[i] >= D - POSITIVE or solved.policy.same_behaviour(solution, mdp):
            skipped[spec.name] = "no policy improves it enough to outweigh the other objectives"
            continue
        gains, losses = compare(base, val)
        gains.setdefault(spec.name, D - val.values[i])
        st = solved.solution.stats
        results.append(AlternativeResult(i, spec.name, solved.policy, val, solved.built.violation(solved.solution),
                                         gains, losses, solved.solution.objective,
                                         {"nodes": st.nodes, "lp_iterations": st.lp_iterations}))
    return AlternativeSet(results, failures, skipped, models, lower)


def occupation_visits(mdp: ExplicitMdp, policy: Policy) -> np.ndarray:
    """Per-state expected visits of ``policy`` (independent linear solve)."""
    nu = visit_measure(mdp, policy)
    out = np.zeros(mdp.num_states)
    np.add.at(out, mdp.pair_state, nu)
    return out
