"""Policy evaluation, optimal planning and per-QA lower bounds."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import spsolve

from .mdp import AVERAGE_COST, TOTAL_COST, ExplicitMdp, ScalarizationProfile

PLANNER = "planner"
MILP_ALTERNATIVE = "milp_alternative"
EXTERNAL = "external"

_DIRECT_LIMIT = 50_000
_IMPROVE_TOL = 1e-10


class EvaluationError(ValueError):
    pass


class ImproperPolicy(EvaluationError):
    """The policy does not reach the goal set almost surely."""


class Multichain(EvaluationError):
    """More than one recurrent class is reachable under the policy."""


class NoProperPolicy(EvaluationError):
    pass


@dataclass(frozen=True)
class Policy:
    """Deterministic stationary policy: one pair index per state (-1: none)."""

    choice: tuple[int, ...]
    criterion: str
    provenance: str = PLANNER
    target_qa: int | None = None
    unreachable: frozenset[int] = frozenset()

    def action(self, s: int) -> int:
        return self.choice[s]

    def pairs(self) -> list[int]:
        return [p for p in self.choice if p >= 0]

    def table(self, mdp: ExplicitMdp, only_reachable: bool = True) -> dict[str, str]:
        states = np.flatnonzero(reachable_states(mdp, self)) if only_reachable else range(mdp.num_states)
        return {mdp.state_name(int(s)): mdp.pair_labels[self.choice[s]]
                for s in states if self.choice[s] >= 0}

    def same_behaviour(self, other: "Policy", mdp: ExplicitMdp) -> bool:
        """Equal choices on every state reachable under either policy."""
        mask = reachable_states(mdp, self) | reachable_states(mdp, other)
        return all(self.choice[s] == other.choice[s] for s in np.flatnonzero(mask))

    def to_json(self, mdp: ExplicitMdp) -> dict:
        return {
            "criterion": self.criterion,
            "provenance": self.provenance,
            "target_qa": None if self.target_qa is None else mdp.qa_specs[self.target_qa].name,
            "actions": self.table(mdp),
        }


def policy_from_choices(mdp: ExplicitMdp, choice: Sequence[int], **kw) -> Policy:
    return Policy(tuple(int(c) for c in choice), mdp.criterion, **kw)


def policy_from_action_indices(mdp: ExplicitMdp, local: Sequence[int], **kw) -> Policy:
    """Policy from per-state *local* action positions (goal states ignored)."""
    choice = [mdp.state_pairs[s][a] if mdp.state_pairs[s] else -1 for s, a in enumerate(local)]
    return policy_from_choices(mdp, choice, **kw)


# --------------------------------------------------------------------------
# chain structure


def _successors(mdp: ExplicitMdp, p: int) -> np.ndarray:
    T = mdp.transitions
    return T.indices[T.indptr[p]:T.indptr[p + 1]]


def policy_matrix(mdp: ExplicitMdp, policy: Policy) -> sparse.csr_matrix:
    """State-to-state transition matrix under ``policy`` (zero rows where undefined)."""
    n = mdp.num_states
    choice = np.asarray(policy.choice)
    defined = np.flatnonzero(choice >= 0)
    sel = sparse.csr_matrix((np.ones(len(defined)), (defined, choice[defined])), shape=(n, mdp.num_pairs))
    return (sel @ mdp.transitions).tocsr()


def reachable_states(mdp: ExplicitMdp, policy: Policy) -> np.ndarray:
    seen = np.zeros(mdp.num_states, dtype=bool)
    queue = deque(int(s) for s in mdp.initial_states)
    seen[list(queue)] = True
    while queue:
        s = queue.popleft()
        p = policy.choice[s]
        if p < 0 or (mdp.criterion == TOTAL_COST and mdp.goal[s]):
            continue
        for t in _successors(mdp, p):
            if not seen[t]:
                seen[t] = True
                queue.append(int(t))
    return seen


def _check_proper(mdp: ExplicitMdp, policy: Policy) -> np.ndarray:
    """Return the reachable mask; raise unless the goal is reached a.s."""
    reach = reachable_states(mdp, policy)
    for s in np.flatnonzero(reach):
        if not mdp.goal[s] and policy.choice[s] < 0:
            raise ImproperPolicy(f"policy undefined at reachable state {mdp.state_name(int(s))}")
    P = policy_matrix(mdp, policy)
    # backward search from goals over positive-probability edges
    back = P.T.tocsr()
    can_reach = mdp.goal.copy()
    queue = deque(int(s) for s in np.flatnonzero(mdp.goal))
    while queue:
        t = queue.popleft()
        for s in back.indices[back.indptr[t]:back.indptr[t + 1]]:
            if not can_reach[s]:
                can_reach[s] = True
                queue.append(int(s))
    stuck = np.flatnonzero(reach & ~can_reach)
    if stuck.size:
        raise ImproperPolicy(f"goal unreachable from {mdp.state_name(int(stuck[0]))} under the policy")
    return reach


def _solve(A: sparse.spmatrix, b: np.ndarray) -> np.ndarray:
    A = sparse.csc_matrix(A)
    if A.shape[0] <= _DIRECT_LIMIT:
        return np.atleast_1d(spsolve(A, b))
    return _gauss_seidel(A.tocsr(), b)


def _gauss_seidel(A: sparse.csr_matrix, b: np.ndarray, tol: float = 1e-9, max_sweeps: int = 100_000) -> np.ndarray:
    x = np.zeros_like(b)
    diag = A.diagonal()
    for _ in range(max_sweeps):
        delta = 0.0
        for i in range(A.shape[0]):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            row = A.data[lo:hi] @ x[A.indices[lo:hi]] - diag[i] * x[i]
            new = (b[i] - row) / diag[i]
            delta = max(delta, abs(new - x[i]))
            x[i] = new
        if delta < tol:
            break
    return x


def _pair_vector(mdp: ExplicitMdp, policy: Policy, per_pair: np.ndarray) -> np.ndarray:
    out = np.zeros(mdp.num_states)
    choice = np.asarray(policy.choice)
    ok = choice >= 0
    out[ok] = per_pair[choice[ok]]
    return out


def _total_values(mdp: ExplicitMdp, policy: Policy, per_pair: np.ndarray, reach: np.ndarray) -> np.ndarray:
    J = np.full(mdp.num_states, np.nan)
    J[mdp.goal] = 0.0
    trans = np.flatnonzero(reach & ~mdp.goal)
    if trans.size:
        P = policy_matrix(mdp, policy)[trans][:, trans]
        c = _pair_vector(mdp, policy, per_pair)[trans]
        J[trans] = _solve(sparse.identity(len(trans)) - P, c)
    return J


def _recurrent_classes(P: sparse.csr_matrix, mask: np.ndarray) -> list[np.ndarray]:
    idx = np.flatnonzero(mask)
    sub = P[idx][:, idx]
    ncomp, labels = csgraph.connected_components(sub, directed=True, connection="strong")
    closed = np.ones(ncomp, dtype=bool)
    coo = sub.tocoo()
    leaving = labels[coo.row] != labels[coo.col]
    closed[np.unique(labels[coo.row[leaving]])] = False
    return [idx[labels == k] for k in range(ncomp) if closed[k]]


def stationary_distribution(mdp: ExplicitMdp, policy: Policy) -> np.ndarray:
    """Stationary state distribution of the policy's chain started from alpha."""
    if mdp.criterion != AVERAGE_COST:
        raise EvaluationError("stationary distribution needs the average-cost criterion")
    reach = reachable_states(mdp, policy)
    P = policy_matrix(mdp, policy)
    classes = _recurrent_classes(P, reach)
    if len(classes) != 1:
        raise Multichain(f"{len(classes)} recurrent classes reachable under the policy")
    C = classes[0]
    k = len(C)
    A = (P[C][:, C].T - sparse.identity(k)).tolil()
    A[k - 1, :] = np.ones(k)
    b = np.zeros(k)
    b[-1] = 1.0
    mu = np.zeros(mdp.num_states)
    mu[C] = _solve(A.tocsc(), b)
    return mu


def visit_measure(mdp: ExplicitMdp, policy: Policy) -> np.ndarray:
    """Per-pair measure: expected visits (total cost) or long-run frequency."""
    nu = np.zeros(mdp.num_pairs)
    if mdp.criterion == TOTAL_COST:
        reach = _check_proper(mdp, policy)
        trans = np.flatnonzero(reach & ~mdp.goal)
        if trans.size:
            P = policy_matrix(mdp, policy)[trans][:, trans]
            occ = _solve(sparse.identity(len(trans)) - P.T, mdp.alpha[trans])
            nu[np.asarray(policy.choice)[trans]] = occ
    else:
        mu = stationary_distribution(mdp, policy)
        on = np.flatnonzero(mu > 0)
        nu[np.asarray(policy.choice)[on]] = mu[on]
    return nu


def evaluate_total_cost(mdp: ExplicitMdp, policy: Policy, qa_index: int) -> np.ndarray:
    """Per-state totals of one QA (0 on goals, NaN off the reachable set)."""
    if mdp.criterion != TOTAL_COST:
        raise EvaluationError("total-cost evaluation on an average-cost model")
    reach = _check_proper(mdp, policy)
    return _total_values(mdp, policy, mdp.qa[:, qa_index], reach)


def evaluate_average_cost(mdp: ExplicitMdp, policy: Policy, qa_index: int) -> float:
    mu = stationary_distribution(mdp, policy)
    return float(mu @ _pair_vector(mdp, policy, mdp.qa[:, qa_index]))


def event_counts(mdp: ExplicitMdp, policy: Policy) -> dict[str, float]:
    nu = visit_measure(mdp, policy)
    return {e: float(nu @ p) for e, p in mdp.events.items()}


@dataclass
class PolicyValuation:
    """QA values D_i of one policy plus expected event counts."""

    criterion: str
    qa_names: tuple[str, ...]
    values: tuple[float, ...]
    event_counts: dict[str, float]
    scalarized_cost: float
    units: tuple[str | None, ...] = ()
    expected_steps: float = float("nan")

    def __getitem__(self, key: int | str) -> float:
        if isinstance(key, str):
            key = self.qa_names.index(key)
        return self.values[key]

    def to_json(self) -> dict[str, Any]:
        return {
            "criterion": self.criterion,
            "qa": {n: {"value": v, "unit": u} for n, v, u in
                   zip(self.qa_names, self.values, self.units or (None,) * len(self.values))},
            "event_counts": dict(self.event_counts),
            "scalarized_cost": self.scalarized_cost,
            "expected_steps": self.expected_steps,
        }

    @classmethod
    def from_json(cls, d: dict) -> "PolicyValuation":
        names = tuple(d["qa"])
        return cls(d["criterion"], names, tuple(float(d["qa"][n]["value"]) for n in names),
                   {k: float(v) for k, v in d["event_counts"].items()}, float(d["scalarized_cost"]),
                   tuple(d["qa"][n].get("unit") for n in names), float(d.get("expected_steps", "nan")))


def evaluate(mdp: ExplicitMdp, policy: Policy, profile: ScalarizationProfile | None = None) -> PolicyValuation:
    """Evaluate every QA of ``policy``.

    The scalarized cost is the expected total (or long-run average) of the
    per-step scalarized cost, i.e. what the planner minimizes.
    """
    profile = profile or mdp.profile
    nu = visit_measure(mdp, policy)
    if mdp.criterion == TOTAL_COST:
        reach = _check_proper(mdp, policy)
        values = []
        for i in range(mdp.num_qa):
            J = _total_values(mdp, policy, mdp.qa[:, i], reach)
            values.append(float(np.nansum(mdp.alpha * np.nan_to_num(J))))
        steps = float(nu.sum())
    else:
        values = [float(nu @ mdp.qa[:, i]) for i in range(mdp.num_qa)]
        steps = 1.0
    counts = {e: float(nu @ p) for e, p in mdp.events.items()}
    cost = float(nu @ profile.pair_costs(mdp.qa)) if profile is not None else float("nan")
    return PolicyValuation(mdp.criterion, tuple(q.name for q in mdp.qa_specs), tuple(values), counts, cost,
                           tuple(q.unit for q in mdp.qa_specs), steps)


# --------------------------------------------------------------------------
# optimization


def _almost_sure_region(mdp: ExplicitMdp) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """States with a proper policy, pairs that stay inside them, and a seed policy."""
    n = mdp.num_states
    inside = np.ones(n, dtype=bool)
    succ = [_successors(mdp, p) for p in range(mdp.num_pairs)]
    while True:
        allowed = np.array([inside[s] and bool(np.all(inside[succ[p]]))
                            for p, s in enumerate(mdp.pair_state)], dtype=bool)
        seed = np.full(n, -1)
        good = mdp.goal.copy()
        changed = True
        while changed:
            changed = False
            for s in range(n):
                if good[s] or not inside[s]:
                    continue
                for p in mdp.state_pairs[s]:
                    if allowed[p] and np.any(good[succ[p]]):
                        good[s] = True
                        seed[s] = p
                        changed = True
                        break
        if np.array_equal(good, inside):
            return inside, allowed, seed
        inside = good


def _improve(mdp: ExplicitMdp, choice: np.ndarray, q: np.ndarray, allowed: np.ndarray, states) -> bool:
    changed = False
    for s in states:
        cur = choice[s]
        cands = [p for p in mdp.state_pairs[s] if allowed[p]]
        if not cands:
            continue
        vals = q[cands]
        best = vals.min()
        tol = _IMPROVE_TOL * (1.0 + abs(q[cur]))
        if best < q[cur] - tol:
            choice[s] = cands[int(np.flatnonzero(vals <= best + tol)[0])]
            changed = True
    return changed


def _optimal_total(mdp: ExplicitMdp, costs: np.ndarray) -> tuple[np.ndarray, float]:
    inside, allowed, choice = _almost_sure_region(mdp)
    if not np.all(inside[mdp.initial_states]):
        raise NoProperPolicy("no policy reaches the goal almost surely from the initial state")
    work = np.flatnonzero(inside & ~mdp.goal)
    J = np.zeros(mdp.num_states)
    for _ in range(10_000):
        pol = Policy(tuple(int(c) for c in choice), TOTAL_COST)
        P = policy_matrix(mdp, pol)[work][:, work]
        J[:] = np.inf
        J[mdp.goal] = 0.0
        if work.size:
            J[work] = _solve(sparse.identity(len(work)) - P, costs[choice[work]])
        Jf = np.where(np.isfinite(J), J, 0.0)
        q = costs + mdp.transitions @ Jf
        if not _improve(mdp, choice, q, allowed, work):
            break
    for s in range(mdp.num_states):
        if choice[s] < 0 and mdp.state_pairs[s]:
            choice[s] = mdp.state_pairs[s][0]
    return choice, float(mdp.alpha @ np.where(np.isfinite(J), J, 0.0))


def _optimal_average(mdp: ExplicitMdp, costs: np.ndarray) -> tuple[np.ndarray, float]:
    n = mdp.num_states
    choice = np.array([mdp.state_pairs[s][0] for s in range(n)])
    allowed = np.ones(mdp.num_pairs, dtype=bool)
    everything = np.ones(n, dtype=bool)
    gain = 0.0
    for _ in range(10_000):
        pol = Policy(tuple(int(c) for c in choice), AVERAGE_COST)
        P = policy_matrix(mdp, pol)
        classes = _recurrent_classes(P, everything)
        if len(classes) != 1:
            raise Multichain("average-cost planning requires every visited policy to be unichain")
        ref = int(classes[0][0])
        # unknowns h(0..n-1), g ; h(ref) = 0
        A = sparse.lil_matrix((n + 1, n + 1))
        A[:n, :n] = sparse.identity(n) - P
        A[:n, n] = np.ones((n, 1))
        A[n, ref] = 1.0
        b = np.concatenate([costs[choice], [0.0]])
        sol = _solve(A.tocsc(), b)
        h, gain = sol[:n], float(sol[n])
        q = costs + mdp.transitions @ h
        if not _improve(mdp, choice, q, allowed, range(n)):
            break
    return choice, gain


def optimize_costs(mdp: ExplicitMdp, costs: np.ndarray, **kw) -> tuple[Policy, float]:
    """Deterministic policy minimizing per-pair ``costs`` under the model's criterion."""
    costs = np.asarray(costs, dtype=float)
    if mdp.criterion == TOTAL_COST:
        choice, value = _optimal_total(mdp, costs)
    else:
        choice, value = _optimal_average(mdp, costs)
    return policy_from_choices(mdp, choice, **kw), value


def solve_optimal(mdp: ExplicitMdp, profile: ScalarizationProfile | None = None) -> Policy:
    """Policy iteration on the scalarized cost.

    Total cost starts from a proper policy and only switches on strict
    improvement, which keeps every iterate proper when costs are
    nonnegative. Average cost uses unichain policy iteration and reports
    :class:`Multichain` if it meets a multichain policy.
    """
    profile = profile or mdp.profile
    policy, _ = optimize_costs(mdp, profile.pair_costs(mdp.qa), provenance=PLANNER)
    return policy


def per_qa_lower_bound(mdp: ExplicitMdp, qa_index: int) -> float:
    """Best achievable value of one QA alone over deterministic policies."""
    _, value = optimize_costs(mdp, mdp.qa[:, qa_index])
    return value


def lower_bounds(mdp: ExplicitMdp) -> list[float]:
    return [per_qa_lower_bound(mdp, i) for i in range(mdp.num_qa)]

