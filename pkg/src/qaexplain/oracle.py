"""Brute-force ground truth for small instances.

Everything here deliberately avoids the evaluation code in
:mod:`qaexplain.valuation`: values come from dense linear algebra over the
full state space, properness from a dense transitive closure, and long-run
averages from repeated squaring of the lazy chain.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .mdp import TOTAL_COST, ExplicitMdp, ScalarizationProfile
from .valuation import EXTERNAL, Policy

DOMINANCE_TOL = 1e-9
DEFAULT_CAP = 10**6


class CapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Enumerated:
    policy: Policy
    proper: bool


def policy_count(mdp: ExplicitMdp) -> int:
    return math.prod(max(1, len(p)) for p in mdp.state_pairs)


def enumerate_policies(mdp: ExplicitMdp, cap: int = DEFAULT_CAP) -> Iterator[Enumerated]:
    """Every deterministic stationary policy in canonical (odometer) order."""
    total = policy_count(mdp)
    if total > cap:
        raise CapExceeded(f"{total} policies exceed the enumeration cap {cap}")
    options = [pairs if pairs else [-1] for pairs in mdp.state_pairs]
    for choice in itertools.product(*options):
        pol = Policy(tuple(choice), mdp.criterion, provenance=EXTERNAL)
        yield Enumerated(pol, is_proper(mdp, pol) if mdp.criterion == TOTAL_COST else True)


def _dense_chain(mdp: ExplicitMdp, policy: Policy) -> np.ndarray:
    n = mdp.num_states
    T = mdp.transitions.toarray()
    P = np.zeros((n, n))
    for s, p in enumerate(policy.choice):
        if p >= 0 and not (mdp.criterion == TOTAL_COST and mdp.goal[s]):
            P[s] = T[p]
    return P


def _closure(adj: np.ndarray) -> np.ndarray:
    """Reflexive-transitive closure of a boolean adjacency matrix."""
    R = adj | np.eye(len(adj), dtype=bool)
    while True:
        nxt = (R.astype(int) @ R.astype(int)) > 0
        if np.array_equal(nxt, R):
            return R
        R = nxt


def is_proper(mdp: ExplicitMdp, policy: Policy) -> bool:
    P = _dense_chain(mdp, policy)
    R = _closure(P > 0)
    start = mdp.alpha > 0
    reach = R[start].any(axis=0)
    reaches_goal = R[:, mdp.goal].any(axis=1)
    return bool(np.all(reaches_goal[reach]))


def _step_values(mdp: ExplicitMdp, policy: Policy, per_pair: np.ndarray) -> np.ndarray:
    out = np.zeros(mdp.num_states)
    for s, p in enumerate(policy.choice):
        if p >= 0 and not (mdp.criterion == TOTAL_COST and mdp.goal[s]):
            out[s] = per_pair[p]
    return out


def _limit_matrix(P: np.ndarray) -> np.ndarray:
    lazy = 0.5 * (P + np.eye(len(P)))
    for _ in range(80):
        nxt = lazy @ lazy
        nxt /= nxt.sum(axis=1, keepdims=True)  # squaring compounds rounding drift
        if np.max(np.abs(nxt - lazy)) < 1e-15:
            break
        lazy = nxt
    return lazy


def exact_values(mdp: ExplicitMdp, policy: Policy, per_pair: np.ndarray | None = None) -> np.ndarray:
    """Value of every QA (columns of ``per_pair``) from the initial distribution."""
    Q = mdp.qa if per_pair is None else np.asarray(per_pair, dtype=float).reshape(mdp.num_pairs, -1)
    P = _dense_chain(mdp, policy)
    if mdp.criterion == TOTAL_COST:
        R = _closure(P > 0)
        reach = R[mdp.alpha > 0].any(axis=0)
        idx = np.flatnonzero(reach & ~mdp.goal)
        out = []
        for col in Q.T:
            c = _step_values(mdp, policy, col)[idx]
            J = np.linalg.solve(np.eye(len(idx)) - P[np.ix_(idx, idx)], c) if len(idx) else np.zeros(0)
            out.append(float(mdp.alpha[idx] @ J))
        return np.array(out)
    L = _limit_matrix(P)
    d = mdp.alpha @ L
    return np.array([float(d @ _step_values(mdp, policy, col)) for col in Q.T])


def scalarized_value(mdp: ExplicitMdp, policy: Policy, profile: ScalarizationProfile) -> float:
    return float(exact_values(mdp, policy, profile.pair_costs(mdp.qa))[0])


def brute_force_minimum(mdp: ExplicitMdp, profile: ScalarizationProfile,
                        cap: int = DEFAULT_CAP) -> tuple[float, Policy]:
    best, arg = math.inf, None
    for e in enumerate_policies(mdp, cap):
        if not e.proper:
            continue
        v = scalarized_value(mdp, e.policy, profile)
        if v < best:
            best, arg = v, e.policy
    return best, arg


def dominates(a: Sequence[float], b: Sequence[float], tol: float = DOMINANCE_TOL) -> bool:
    """``a`` is no worse than ``b`` everywhere and strictly better somewhere."""
    a, b = np.asarray(a), np.asarray(b)
    return bool(np.all(a <= b + tol) and np.any(a < b - tol))


@dataclass
class ParetoFront:
    members: list[tuple[Policy, np.ndarray]]

    @property
    def vectors(self) -> list[np.ndarray]:
        return [v for _, v in self.members]

    def contains_vector(self, v: Sequence[float], tol: float = 1e-6) -> bool:
        return any(np.allclose(v, w, atol=tol, rtol=0) for w in self.vectors)

    def dominated(self, v: Sequence[float], tol: float = DOMINANCE_TOL) -> bool:
        return any(dominates(w, v, tol) for w in self.vectors)


def all_value_vectors(mdp: ExplicitMdp, cap: int = DEFAULT_CAP) -> list[tuple[Policy, np.ndarray]]:
    out = []
    for e in enumerate_policies(mdp, cap):
        if e.proper:
            out.append((e.policy, exact_values(mdp, e.policy)))
    return out


def pareto_filter(items: list[tuple[Policy, np.ndarray]], tol: float = DOMINANCE_TOL) -> ParetoFront:
    """Keep non-dominated items; one representative per distinct vector."""
    distinct: list[tuple[Policy, np.ndarray]] = []
    for pol, v in items:
        if not any(np.allclose(v, w, atol=tol, rtol=0) for _, w in distinct):
            distinct.append((pol, v))
    keep = [(p, v) for p, v in distinct if not any(dominates(w, v, tol) for _, w in distinct)]
    return ParetoFront(keep)


def pareto_front(mdp: ExplicitMdp, cap: int = DEFAULT_CAP) -> ParetoFront:
    return pareto_filter(all_value_vectors(mdp, cap))
