"""Factored, QA-annotated MDPs and their grounding into explicit form.

A problem is written against typed state variables and typed actions. Each
action has rule-table entries (``when`` guards, rule-level attributes and
probabilistic outcomes); a quality-attribute value function reads the
attributes of the current state variables and of the action. ``compile``
grounds everything into an :class:`ExplicitMdp` whose arrays the solvers
consume directly.
"""

from __future__ import annotations

import ast
import itertools
import json
import math
import operator
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import sparse

PROB_TOL = 1e-9

EVENT_COUNT = "event_count"
STANDARD = "standard"
NONSTANDARD = "nonstandard"
QA_KINDS = (EVENT_COUNT, STANDARD, NONSTANDARD)

TOTAL_COST = "total"
AVERAGE_COST = "average"


class ProblemError(ValueError):
    """Base class for invalid problem definitions."""


class InvalidTransition(ProblemError):
    pass


class UnreachableGoal(ProblemError):
    pass


class UndefinedAttribute(ProblemError):
    pass


# --------------------------------------------------------------------------
# value functions


class _Context:
    """Attribute lookup for one grounded (state, action) pair."""

    def __init__(self, problem: "ExplainableProblem", state: Mapping[str, str],
                 action: "ActionDef", rule: "ActionRule"):
        self.problem = problem
        self.state = state
        self.action = action
        self.rule = rule

    def resolve(self, path: str) -> Any:
        parts = path.split(".")
        head = parts[0]
        if head == "action":
            return self._action_attr(parts[1:], path)
        var = self.problem.var(head)
        if var is None:
            raise UndefinedAttribute(f"unknown state variable in {path!r}")
        value = self.state[head]
        if len(parts) == 1:
            return value
        return var.attribute(value, parts[1], path)

    def _action_attr(self, parts: list[str], path: str) -> Any:
        if not parts:
            raise UndefinedAttribute(f"incomplete reference {path!r}")
        name = parts[0]
        if name == "name" and len(parts) == 1:
            return self.action.name
        if name == "type" and len(parts) == 1:
            return self.action.type
        if name in self.action.params:
            var_name, value = self.action.params[name]
            if len(parts) == 1:
                return value
            return self.problem.var(var_name).attribute(value, parts[1], path)
        if len(parts) == 1:
            if name in self.rule.attributes:
                return self.rule.attributes[name]
            if name in self.action.attributes:
                return self.action.attributes[name]
        raise UndefinedAttribute(f"action {self.action.name} has no attribute for {path!r}")


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_FUNCS = {"min": min, "max": max, "abs": abs}


def _path_of(node: ast.AST) -> str:
    if isinstance(node, ast.Name):
        return node.id
    if isinstance(node, ast.Attribute):
        return f"{_path_of(node.value)}.{node.attr}"
    raise ProblemError(f"unsupported expression element {ast.dump(node)}")


def _eval(node: ast.AST, ctx: _Context) -> float:
    if isinstance(node, ast.Expression):
        return _eval(node.body, ctx)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left, ctx), _eval(node.right, ctx))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval(node.operand, ctx)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        return float(_FUNCS[node.func.id](*(_eval(a, ctx) for a in node.args)))
    if isinstance(node, (ast.Name, ast.Attribute)):
        v = ctx.resolve(_path_of(node))
        try:
            return float(v)
        except (TypeError, ValueError):
            raise UndefinedAttribute(f"{_path_of(node)} is not numeric ({v!r})") from None
    raise ProblemError(f"unsupported expression element {ast.dump(node)}")


class ValueFn:
    """QA value function over attributes; built from its JSON form."""

    def __init__(self, spec: Any):
        self.spec = spec
        if isinstance(spec, (int, float, str)) or spec is None:
            self.kind = "constant"
        elif isinstance(spec, Mapping) and len(spec) == 1 and "constant" in spec:
            self.kind = "constant"
        elif isinstance(spec, Mapping) and "expr" in spec:
            self.kind = "expr"
            try:
                self._tree = ast.parse(spec["expr"], mode="eval")
            except SyntaxError as exc:
                raise ProblemError(f"bad expression {spec['expr']!r}: {exc.msg}") from None
        elif isinstance(spec, Mapping) and "table" in spec:
            self.kind = "table"
            table = spec["table"]
            self._keys = list(table["keys"])
            self._entries = {tuple(e["key"]): e["value"] for e in table["entries"]}
            self._has_default = "default" in table
            self._default = table.get("default")
        elif isinstance(spec, Mapping) and "by_action_type" in spec:
            self.kind = "by_type"
            self._cases = {k: ValueFn(v) for k, v in spec["by_action_type"].items()}
            self._fallback = ValueFn(spec["default"]) if "default" in spec else None
        else:
            raise ProblemError(f"unrecognised value function {spec!r}")

    def __call__(self, ctx: _Context) -> Any:
        if self.kind == "constant":
            return self.spec["constant"] if isinstance(self.spec, Mapping) else self.spec
        if self.kind == "expr":
            return _eval(self._tree, ctx)
        if self.kind == "table":
            key = tuple(ctx.resolve(k) for k in self._keys)
            if key in self._entries:
                return self._entries[key]
            if self._has_default:
                return self._default
            raise UndefinedAttribute(f"no table entry for {dict(zip(self._keys, key))}")
        fn = self._cases.get(ctx.action.type, self._fallback)
        if fn is None:
            raise UndefinedAttribute(f"no value defined for action type {ctx.action.type}")
        return fn(ctx)

    def to_json(self) -> Any:
        return self.spec


# --------------------------------------------------------------------------
# factored problem types


@dataclass(frozen=True)
class AttributeDef:
    name: str
    domain: tuple | None = None
    unit: str | None = None


@dataclass(frozen=True)
class TypeDef:
    """A state-variable type or an action type with its attribute schema."""

    name: str
    attributes: tuple[AttributeDef, ...] = ()

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(names) != len(set(names)):
            raise ProblemError(f"type {self.name} declares an attribute twice")

    def has(self, attr: str) -> bool:
        return any(a.name == attr for a in self.attributes)


@dataclass
class StateVar:
    name: str
    type: str
    domain: tuple[str, ...]
    values: dict[str, dict[str, Any]] = field(default_factory=dict)

    def attribute(self, value: str, attr: str, path: str = "") -> Any:
        try:
            return self.values[value][attr]
        except KeyError:
            raise UndefinedAttribute(f"{self.name}={value} has no attribute {attr!r} ({path})") from None


@dataclass
class Outcome:
    prob: float
    assign: dict[str, str]


@dataclass
class ActionRule:
    when: dict[str, Any]
    outcomes: list[Outcome]
    attributes: dict[str, Any] = field(default_factory=dict)

    def matches(self, state: Mapping[str, str]) -> bool:
        for var, want in self.when.items():
            have = state[var]
            if isinstance(want, (list, tuple)):
                if have not in want:
                    return False
            elif have != want:
                return False
        return True


@dataclass
class ActionDef:
    name: str
    type: str
    rules: list[ActionRule]
    params: dict[str, tuple[str, str]] = field(default_factory=dict)
    attributes: dict[str, Any] = field(default_factory=dict)

    def rule_for(self, state: Mapping[str, str]) -> ActionRule | None:
        for rule in self.rules:
            if rule.matches(state):
                return rule
        return None


@dataclass(frozen=True)
class EventLevel:
    name: str
    label: str
    penalty: float


@dataclass
class QaSpec:
    name: str
    kind: str
    value_fn: ValueFn
    unit: str | None = None
    event: str | None = None
    events: tuple[EventLevel, ...] = ()

    def __post_init__(self):
        if self.kind not in QA_KINDS:
            raise ProblemError(f"QA {self.name}: unknown kind {self.kind!r}")
        if self.kind == EVENT_COUNT and not self.event:
            self.event = self.name
        if self.kind == NONSTANDARD:
            if not self.events:
                raise ProblemError(f"QA {self.name}: non-standard measurement needs events")
            pens = [e.penalty for e in self.events]
            if any(b <= a for a, b in zip(pens, pens[1:])):
                raise ProblemError(f"QA {self.name}: event penalties must strictly increase")
            if pens[0] < 0:
                raise ProblemError(f"QA {self.name}: penalties must be nonnegative")

    @property
    def event_names(self) -> list[str]:
        if self.kind == EVENT_COUNT:
            return [self.event]
        if self.kind == NONSTANDARD:
            return [e.name for e in self.events]
        return []


@dataclass(frozen=True)
class ScalarizationProfile:
    """Weights k_i on normalized costs C_i = scale_i * QA_i + offset_i."""

    weights: tuple[float, ...]
    scales: tuple[float, ...]
    offsets: tuple[float, ...]

    def __post_init__(self):
        n = len(self.weights)
        if len(self.scales) != n or len(self.offsets) != n:
            raise ProblemError("profile weights and normalizers differ in length")
        if any(not k > 0 for k in self.weights):
            raise ProblemError("scalarization weights must be positive")
        if any(not s > 0 for s in self.scales):
            raise ProblemError("normalizer scales must be positive")

    @classmethod
    def identity(cls, weights: Sequence[float]) -> "ScalarizationProfile":
        w = tuple(float(k) for k in weights)
        return cls(w, (1.0,) * len(w), (0.0,) * len(w))

    @property
    def size(self) -> int:
        return len(self.weights)

    def pair_costs(self, qa: np.ndarray) -> np.ndarray:
        """Per-(s,a) scalarized cost for a ``(pairs, n_qa)`` QA matrix."""
        k = np.asarray(self.weights)
        return (np.asarray(qa) * np.asarray(self.scales) + np.asarray(self.offsets)) @ k

    def with_weight(self, i: int, k: float) -> "ScalarizationProfile":
        w = list(self.weights)
        w[i] = k
        return ScalarizationProfile(tuple(w), self.scales, self.offsets)

    def to_json(self) -> dict:
        return {"weights": list(self.weights), "scales": list(self.scales), "offsets": list(self.offsets)}


def scalarized_cost(profile: ScalarizationProfile, qa_values: Sequence[float]) -> float:
    q = np.asarray(qa_values, dtype=float)
    if q.shape != (profile.size,):
        raise ValueError(f"expected {profile.size} QA values, got {q.shape}")
    return float(np.dot(profile.weights, np.asarray(profile.scales) * q + np.asarray(profile.offsets)))


def minmax_profile(weights: Sequence[float], qa: np.ndarray) -> ScalarizationProfile:
    """Profile whose normalizers map each QA's grounded range onto [0, 1]."""
    scales, offsets = [], []
    for i in range(len(weights)):
        col = qa[:, i] if qa.size else np.zeros(1)
        lo, hi = float(col.min()), float(col.max())
        if hi - lo > 0:
            scales.append(1.0 / (hi - lo))
            offsets.append(-lo / (hi - lo))
        else:
            scales.append(1.0)
            offsets.append(0.0)
    return ScalarizationProfile(tuple(float(k) for k in weights), tuple(scales), tuple(offsets))


@dataclass
class Criterion:
    kind: str  # TOTAL_COST | AVERAGE_COST
    initial: list[tuple[dict[str, str], float]]
    goal: list[dict[str, Any]] = field(default_factory=list)

    def is_goal(self, state: Mapping[str, str]) -> bool:
        return any(ActionRule(g, []).matches(state) for g in self.goal)


@dataclass
class ExplainableProblem:
    name: str
    state_types: list[TypeDef]
    action_types: list[TypeDef]
    state_vars: list[StateVar]
    actions: list[ActionDef]
    criterion: Criterion
    qa_specs: list[QaSpec]
    weights: dict[str, float]
    normalizers: dict[str, tuple[float, float]] | None = None
    vocabulary: dict[str, dict[str, Any]] = field(default_factory=dict)

    def var(self, name: str) -> StateVar | None:
        for v in self.state_vars:
            if v.name == name:
                return v
        return None

    def validate(self) -> None:
        type_names = {t.name: t for t in self.state_types}
        act_types = {t.name: t for t in self.action_types}
        for v in self.state_vars:
            t = type_names.get(v.type)
            if t is None:
                raise ProblemError(f"state variable {v.name} has unknown type {v.type}")
            for value, attrs in v.values.items():
                if value not in v.domain:
                    raise ProblemError(f"{v.name}: attributes for unknown value {value}")
                for a in attrs:
                    if not t.has(a):
                        raise UndefinedAttribute(f"type {t.name} has no attribute {a!r}")
        names = [a.name for a in self.actions]
        if len(names) != len(set(names)):
            raise ProblemError("action names must be unique")
        for a in self.actions:
            t = act_types.get(a.type)
            if t is None:
                raise ProblemError(f"action {a.name} has unknown type {a.type}")
            attrs = set(a.attributes) | {k for r in a.rules for k in r.attributes}
            for k in attrs:
                if not t.has(k):
                    raise UndefinedAttribute(f"action type {t.name} has no attribute {k!r}")
        qa_names = [q.name for q in self.qa_specs]
        if len(qa_names) != len(set(qa_names)):
            raise ProblemError("QA names must be unique")
        for q in qa_names:
            if q not in self.weights:
                raise ProblemError(f"no scalarization weight for QA {q}")
            if not self.weights[q] > 0:
                raise ProblemError(f"weight for QA {q} must be positive")
        total = sum(p for _, p in self.criterion.initial)
        if abs(total - 1.0) > PROB_TOL:
            raise ProblemError(f"initial distribution sums to {total}")
        if self.criterion.kind == TOTAL_COST and not self.criterion.goal:
            raise ProblemError("total-cost criterion needs a goal set")


# --------------------------------------------------------------------------
# explicit form


@dataclass(eq=False)
class ExplicitMdp:
    """Grounded MDP over state indices and (state, action) pair indices.

    ``pair_state[p]`` is the state pair ``p`` belongs to; ``state_pairs[s]``
    lists the pairs applicable at ``s`` in canonical action order. Goal
    states (total cost) are absorbing and carry no pairs.
    """

    criterion: str
    state_labels: list[tuple]
    pair_state: np.ndarray
    pair_labels: list[str]
    transitions: sparse.csr_matrix  # pairs x states
    qa: np.ndarray  # pairs x n_qa
    qa_specs: list[QaSpec]
    alpha: np.ndarray
    goal: np.ndarray  # bool mask
    events: dict[str, np.ndarray] = field(default_factory=dict)
    profile: ScalarizationProfile | None = None
    vocabulary: dict[str, dict[str, Any]] = field(default_factory=dict)
    var_names: tuple[str, ...] = ()
    name: str = "mdp"

    def __post_init__(self):
        self.pair_state = np.asarray(self.pair_state, dtype=int)
        self.qa = np.atleast_2d(np.asarray(self.qa, dtype=float))
        if self.qa.shape[0] != len(self.pair_state):
            self.qa = self.qa.reshape(len(self.pair_state), -1)
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.goal = np.asarray(self.goal, dtype=bool)
        self.transitions = sparse.csr_matrix(self.transitions)
        n = len(self.state_labels)
        self.state_pairs: list[list[int]] = [[] for _ in range(n)]
        for p, s in enumerate(self.pair_state):
            self.state_pairs[s].append(p)
        self._check()
        for arr in (self.pair_state, self.qa, self.alpha, self.goal):
            arr.setflags(write=False)
        for arr in self.events.values():
            arr.setflags(write=False)

    def _check(self) -> None:
        n, npairs = self.num_states, self.num_pairs
        if self.transitions.shape != (npairs, n):
            raise InvalidTransition("transition matrix shape mismatch")
        rows = np.asarray(self.transitions.sum(axis=1)).ravel()
        bad = np.flatnonzero(np.abs(rows - 1.0) > PROB_TOL)
        if bad.size:
            p = int(bad[0])
            raise InvalidTransition(f"transition row of {self.pair_name(p)} sums to {rows[p]:.12g}")
        if self.transitions.nnz and self.transitions.data.min() < 0:
            raise InvalidTransition("negative transition probability")
        if self.qa.shape[1] != len(self.qa_specs):
            raise ProblemError("QA matrix does not match the QA specs")
        if not np.all(np.isfinite(self.qa)) or (self.qa.size and self.qa.min() < 0):
            raise ProblemError("QA values must be finite and nonnegative")
        for i, spec in enumerate(self.qa_specs):
            if spec.kind == EVENT_COUNT and self.qa.size and self.qa[:, i].max() > 1 + PROB_TOL:
                raise ProblemError(f"event-count QA {spec.name} has a per-step value above 1")
        if abs(self.alpha.sum() - 1.0) > PROB_TOL:
            raise ProblemError("initial distribution must sum to 1")
        if self.criterion == TOTAL_COST:
            if np.any(self.goal[self.pair_state]):
                raise ProblemError("goal states must be absorbing and carry no actions")
            if not self.goal.any():
                raise UnreachableGoal("no goal state")
        elif self.criterion == AVERAGE_COST:
            for s in range(n):
                if not self.state_pairs[s]:
                    raise ProblemError(f"state {self.state_name(s)} has no applicable action")
        else:
            raise ProblemError(f"unknown criterion {self.criterion!r}")

    @property
    def num_states(self) -> int:
        return len(self.state_labels)

    @property
    def num_pairs(self) -> int:
        return len(self.pair_state)

    @property
    def num_qa(self) -> int:
        return len(self.qa_specs)

    @property
    def initial_states(self) -> np.ndarray:
        return np.flatnonzero(self.alpha > 0)

    def state_name(self, s: int) -> str:
        label = self.state_labels[s]
        if self.var_names and isinstance(label, tuple) and len(label) == len(self.var_names):
            return ",".join(f"{k}={v}" for k, v in zip(self.var_names, label))
        return str(label)

    def pair_name(self, p: int) -> str:
        return f"{self.state_name(int(self.pair_state[p]))}:{self.pair_labels[p]}"

    def qa_index(self, name: str) -> int:
        for i, q in enumerate(self.qa_specs):
            if q.name == name:
                return i
        raise KeyError(name)

    @classmethod
    def from_arrays(cls, transitions: Sequence[Sequence[Sequence[float]]], qa: Sequence,
                    *, goal: Sequence[int] = (), alpha: Sequence[float] | None = None,
                    start: int = 0, criterion: str = TOTAL_COST,
                    qa_specs: Sequence[QaSpec] | None = None,
                    profile: ScalarizationProfile | None = None,
                    name: str = "mdp") -> "ExplicitMdp":
        """Build from nested lists: ``transitions[s][a]`` is a successor
        distribution, ``qa[s][a]`` a QA vector. Goal states get no actions."""
        n = len(transitions)
        goal_mask = np.zeros(n, dtype=bool)
        goal_mask[list(goal)] = True
        pair_state, labels, rows, q = [], [], [], []
        for s in range(n):
            if goal_mask[s]:
                continue
            for a, dist in enumerate(transitions[s]):
                pair_state.append(s)
                labels.append(f"a{a}")
                rows.append(np.asarray(dist, dtype=float))
                q.append(np.atleast_1d(np.asarray(qa[s][a], dtype=float)))
        nq = len(q[0]) if q else (len(qa_specs) if qa_specs else 1)
        T = np.vstack(rows) if rows else np.zeros((0, n))
        Q = np.vstack(q) if q else np.zeros((0, nq))
        if qa_specs is None:
            qa_specs = [QaSpec(f"qa{i}", STANDARD, ValueFn(0.0)) for i in range(nq)]
        if alpha is None:
            alpha = np.zeros(n)
            alpha[start] = 1.0
        mdp = cls(criterion, [(s,) for s in range(n)], np.array(pair_state, dtype=int), labels,
                  sparse.csr_matrix(T), Q, list(qa_specs), np.asarray(alpha, dtype=float), goal_mask,
                  name=name)
        mdp.events = _derive_events(mdp.qa, mdp.qa_specs, {})
        mdp.profile = profile or minmax_profile([1.0] * nq, mdp.qa)
        return mdp


def _derive_events(qa: np.ndarray, specs: Sequence[QaSpec], labels: Mapping[int, list]) -> dict[str, np.ndarray]:
    """Per-pair single-epoch event probabilities for every declared event."""
    events: dict[str, np.ndarray] = {}
    for i, spec in enumerate(specs):
        if spec.kind == EVENT_COUNT:
            events[spec.event] = qa[:, i].copy()
        elif spec.kind == NONSTANDARD:
            chosen = labels.get(i)
            for ev in spec.events:
                if chosen is None:
                    # penalty values are distinct, so the value identifies the event
                    arr = np.isclose(qa[:, i], ev.penalty, atol=1e-12).astype(float)
                else:
                    arr = np.array([1.0 if c == ev.name else 0.0 for c in chosen])
                events[ev.name] = arr
    return events


def _initial_states(problem: ExplainableProblem) -> list[tuple[dict[str, str], float]]:
    names = [v.name for v in problem.state_vars]
    out = []
    for assign, p in problem.criterion.initial:
        missing = [n for n in names if n not in assign]
        if missing:
            raise ProblemError(f"initial state leaves {missing} unassigned")
        for v in problem.state_vars:
            if assign[v.name] not in v.domain:
                raise ProblemError(f"initial value {assign[v.name]!r} not in domain of {v.name}")
        out.append((dict(assign), p))
    return out


def compile(problem: ExplainableProblem) -> ExplicitMdp:  # noqa: A001 - domain verb
    """Ground ``problem`` over the states reachable from its initial support.

    States are ordered lexicographically by the domain positions of their
    variable values; actions within a state keep declaration order.
    """
    problem.validate()
    vars_ = problem.state_vars
    names = tuple(v.name for v in vars_)
    pos = [{val: i for i, val in enumerate(v.domain)} for v in vars_]

    def key(state: tuple) -> tuple:
        return tuple(pos[i][x] for i, x in enumerate(state))

    init = _initial_states(problem)
    is_total = problem.criterion.kind == TOTAL_COST
    seen: set[tuple] = set()
    queue = deque()
    for assign, p in init:
        st = tuple(assign[n] for n in names)
        if p > 0 and st not in seen:
            seen.add(st)
            queue.append(st)
    grounded: dict[tuple, list] = {}
    while queue:
        st = queue.popleft()
        sd = dict(zip(names, st))
        entries = []
        if not (is_total and problem.criterion.is_goal(sd)):
            for act in problem.actions:
                rule = act.rule_for(sd)
                if rule is None:
                    continue
                succ: dict[tuple, float] = {}
                for out in rule.outcomes:
                    nxt = dict(sd)
                    for var, val in out.assign.items():
                        if var not in nxt:
                            raise ProblemError(f"action {act.name} assigns unknown variable {var}")
                        if val not in vars_[names.index(var)].domain:
                            raise ProblemError(f"action {act.name} assigns {val!r} outside {var}'s domain")
                        nxt[var] = val
                    t = tuple(nxt[n] for n in names)
                    succ[t] = succ.get(t, 0.0) + float(out.prob)
                total = sum(succ.values())
                if abs(total - 1.0) > PROB_TOL:
                    raise InvalidTransition(f"{act.name} at {sd} has outcome probabilities summing to {total:.12g}")
                entries.append((act, rule, succ))
                for t, pr in succ.items():
                    if pr > 0 and t not in seen:
                        seen.add(t)
                        queue.append(t)
        grounded[st] = entries

    order = sorted(seen, key=key)
    index = {st: i for i, st in enumerate(order)}
    goal = np.array([is_total and problem.criterion.is_goal(dict(zip(names, st))) for st in order], dtype=bool)

    pair_state, pair_labels, qa_rows, rows, cols, vals = [], [], [], [], [], []
    ns_labels: dict[int, list] = {i: [] for i, q in enumerate(problem.qa_specs) if q.kind == NONSTANDARD}
    for st in order:
        sd = dict(zip(names, st))
        for act, rule, succ in grounded[st]:
            p = len(pair_state)
            pair_state.append(index[st])
            pair_labels.append(act.name)
            ctx = _Context(problem, sd, act, rule)
            qv = []
            for i, spec in enumerate(problem.qa_specs):
                raw = spec.value_fn(ctx)
                if spec.kind == NONSTANDARD:
                    ns_labels[i].append(raw)
                    if raw is None:
                        qv.append(0.0)
                        continue
                    level = next((e for e in spec.events if e.name == raw), None)
                    if level is None:
                        raise UndefinedAttribute(f"QA {spec.name}: unknown event {raw!r}")
                    qv.append(level.penalty)
                else:
                    try:
                        qv.append(float(raw))
                    except (TypeError, ValueError):
                        raise ProblemError(f"QA {spec.name} produced non-numeric {raw!r}") from None
            qa_rows.append(qv)
            for t, pr in sorted(succ.items(), key=lambda kv: index[kv[0]]):
                if pr > 0:
                    rows.append(p)
                    cols.append(index[t])
                    vals.append(pr)

    n = len(order)
    alpha = np.zeros(n)
    for assign, p in init:
        alpha[index[tuple(assign[k] for k in names)]] += p
    nq = len(problem.qa_specs)
    Q = np.array(qa_rows, dtype=float).reshape(len(pair_state), nq)
    T = sparse.csr_matrix((vals, (rows, cols)), shape=(len(pair_state), n))
    weights = [problem.weights[q.name] for q in problem.qa_specs]
    if problem.normalizers:
        sc = tuple(float(problem.normalizers[q.name][0]) for q in problem.qa_specs)
        of = tuple(float(problem.normalizers[q.name][1]) for q in problem.qa_specs)
        profile = ScalarizationProfile(tuple(weights), sc, of)
    else:
        profile = minmax_profile(weights, Q)
    mdp = ExplicitMdp(problem.criterion.kind, order, np.array(pair_state, dtype=int), pair_labels, T, Q,
                      list(problem.qa_specs), alpha, goal, profile=profile,
                      vocabulary=dict(problem.vocabulary), var_names=names, name=problem.name)
    mdp.events = _derive_events(Q, problem.qa_specs, ns_labels)
    for arr in mdp.events.values():
        arr.setflags(write=False)
    if is_total and not _goal_reachable(mdp):
        raise UnreachableGoal(f"no goal state is reachable from the initial state of {problem.name}")
    return mdp


def _goal_reachable(mdp: ExplicitMdp) -> bool:
    seen = set(int(s) for s in mdp.initial_states)
    stack = list(seen)
    while stack:
        s = stack.pop()
        if mdp.goal[s]:
            return True
        for p in mdp.state_pairs[s]:
            row = mdp.transitions.getrow(p)
            for t in row.indices:
                if t not in seen:
                    seen.add(int(t))
                    stack.append(int(t))
    return False


# --------------------------------------------------------------------------
# JSON form


def _type_from_json(d: Mapping) -> TypeDef:
    attrs = []
    for a in d.get("attributes", []):
        if isinstance(a, str):
            attrs.append(AttributeDef(a))
        else:
            dom = tuple(a["domain"]) if a.get("domain") is not None else None
            attrs.append(AttributeDef(a["name"], dom, a.get("unit")))
    return TypeDef(d["name"], tuple(attrs))


def problem_from_dict(d: Mapping) -> ExplainableProblem:
    try:
        state_types = [_type_from_json(t) for t in d.get("state_types", [])]
        action_types = [_type_from_json(t) for t in d.get("action_types", [])]
        state_vars = [StateVar(v["name"], v["type"], tuple(v["domain"]),
                               {k: dict(a) for k, a in v.get("values", {}).items()})
                      for v in d["state_vars"]]
        actions = []
        for a in d["actions"]:
            rules = [ActionRule(dict(r.get("when", {})),
                                [Outcome(float(o["prob"]), dict(o.get("set", {}))) for o in r["outcomes"]],
                                dict(r.get("attributes", {})))
                     for r in a["rules"]]
            params = {k: (v[0], v[1]) for k, v in a.get("params", {}).items()}
            actions.append(ActionDef(a["name"], a["type"], rules, params, dict(a.get("attributes", {}))))
        c = d["criterion"]
        if c["kind"] == TOTAL_COST:
            crit = Criterion(TOTAL_COST, [(dict(c["initial"]), 1.0)], [dict(g) for g in c["goal"]])
        elif c["kind"] == AVERAGE_COST:
            crit = Criterion(AVERAGE_COST, [(dict(e["state"]), float(e["prob"])) for e in c["initial"]])
        else:
            raise ProblemError(f"unknown criterion {c['kind']!r}")
        specs = []
        for q in d["qa"]:
            events = tuple(EventLevel(e["name"], e.get("label", e["name"]), float(e["penalty"]))
                           for e in q.get("events", []))
            specs.append(QaSpec(q["name"], q["kind"], ValueFn(q["value"]), q.get("unit"), q.get("event"), events))
        weights = {k: float(v) for k, v in d["scalarization"]["weights"].items()}
        norms = d["scalarization"].get("normalizers")
        norms = {k: (float(v[0]), float(v[1])) for k, v in norms.items()} if norms else None
    except KeyError as exc:
        raise ProblemError(f"missing field {exc.args[0]!r}") from None
    return ExplainableProblem(d.get("name", "problem"), state_types, action_types, state_vars, actions,
                              crit, specs, weights, norms, dict(d.get("vocabulary", {})))


def _type_to_json(t: TypeDef) -> dict:
    out = []
    for a in t.attributes:
        e: dict[str, Any] = {"name": a.name}
        if a.domain is not None:
            e["domain"] = list(a.domain)
        if a.unit is not None:
            e["unit"] = a.unit
        out.append(e)
    return {"name": t.name, "attributes": out}


def problem_to_dict(p: ExplainableProblem) -> dict:
    crit: dict[str, Any] = {"kind": p.criterion.kind}
    if p.criterion.kind == TOTAL_COST:
        crit["initial"] = p.criterion.initial[0][0]
        crit["goal"] = p.criterion.goal
    else:
        crit["initial"] = [{"state": s, "prob": pr} for s, pr in p.criterion.initial]
    qa = []
    for q in p.qa_specs:
        e: dict[str, Any] = {"name": q.name, "kind": q.kind, "value": q.value_fn.to_json()}
        if q.unit is not None:
            e["unit"] = q.unit
        if q.kind == EVENT_COUNT:
            e["event"] = q.event
        if q.events:
            e["events"] = [{"name": ev.name, "label": ev.label, "penalty": ev.penalty} for ev in q.events]
        qa.append(e)
    scal: dict[str, Any] = {"weights": dict(p.weights)}
    if p.normalizers:
        scal["normalizers"] = {k: list(v) for k, v in p.normalizers.items()}
    return {
        "name": p.name,
        "state_types": [_type_to_json(t) for t in p.state_types],
        "action_types": [_type_to_json(t) for t in p.action_types],
        "state_vars": [{"name": v.name, "type": v.type, "domain": list(v.domain), "values": v.values}
                       for v in p.state_vars],
        "actions": [{"name": a.name, "type": a.type,
                     **({"params": {k: list(v) for k, v in a.params.items()}} if a.params else {}),
                     **({"attributes": a.attributes} if a.attributes else {}),
                     "rules": [{"when": r.when, **({"attributes": r.attributes} if r.attributes else {}),
                                "outcomes": [{"prob": o.prob, "set": o.assign} for o in r.outcomes]}
                               for r in a.rules]}
                    for a in p.actions],
        "criterion": crit,
        "qa": qa,
        "scalarization": scal,
        "vocabulary": p.vocabulary,
    }


def load_problem(path) -> ExplainableProblem:
    """Read a problem JSON file; JSON syntax errors keep their line/column."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return problem_from_dict(json.loads(text))


def state_product_size(problem: ExplainableProblem) -> int:
    return math.prod(len(v.domain) for v in problem.state_vars)


def all_states(problem: ExplainableProblem):
    return itertools.product(*(v.domain for v in problem.state_vars))
