"""Best-bound branch and bound over the simplex LP relaxation."""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .model import MilpModel
from .simplex import solve_lp

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"
ITERATION_LIMIT = "IterationLimit"


@dataclass
class MilpLimits:
    node_cap: int = 20000
    time_cap: float = 120.0
    rel_gap: float = 1e-9
    abs_gap: float = 1e-9
    int_tol: float = 1e-6


@dataclass
class SolveStats:
    nodes: int = 0
    lp_iterations: int = 0
    wall_time: float = 0.0
    root_bound: float = math.nan
    node_bounds: list[float] = field(default_factory=list)


@dataclass
class MilpSolution:
    status: str
    x: np.ndarray | None
    objective: float
    stats: SolveStats

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def value(self, j: int) -> float:
        return float(self.x[j])


def _most_fractional(x: np.ndarray, binaries: np.ndarray, tol: float) -> int:
    if binaries.size == 0:
        return -1
    frac = np.abs(x[binaries] - np.round(x[binaries]))
    k = int(np.argmax(frac))
    return int(binaries[k]) if frac[k] > tol else -1


def solve(model: MilpModel, limits: MilpLimits | None = None) -> MilpSolution:
    """Solve ``model`` to proven optimality or until a cap is hit.

    Branching picks the most fractional binary (lowest index on ties);
    open nodes are explored best-bound first with FIFO tie-breaking, so
    identical models give identical assignments. When a node's relaxation
    is integral the binaries are rounded and fixed and the LP is re-solved,
    which removes the residue of near-integral binaries from continuous
    variables linked to them.
    """
    limits = limits or MilpLimits()
    model.validate()
    start = time.perf_counter()
    stats = SolveStats()
    c, A, senses, b, lo0, hi0 = model.dense()
    binaries = np.array(model.binary_indices, dtype=int)

    def lp(lo, hi):
        res = solve_lp(c, A, senses, b, lo, hi)
        stats.lp_iterations += res.iterations
        return res

    incumbent: np.ndarray | None = None
    inc_obj = math.inf
    counter = itertools.count()
    root = lp(lo0, hi0)
    stats.nodes = 1
    if root.status == "unbounded":
        stats.wall_time = time.perf_counter() - start
        return MilpSolution(UNBOUNDED, None, -math.inf, stats)
    if root.status != "optimal":
        stats.wall_time = time.perf_counter() - start
        status = INFEASIBLE if root.status == "infeasible" else ITERATION_LIMIT
        return MilpSolution(status, None, math.nan, stats)
    stats.root_bound = root.objective
    heap = [(root.objective, next(counter), lo0, hi0, root)]
    hit_cap = False

    def cutoff() -> float:
        if incumbent is None:
            return math.inf
        return inc_obj - max(limits.abs_gap, limits.rel_gap * abs(inc_obj))

    while heap:
        bound, _, lo, hi, res = heapq.heappop(heap)
        if bound >= cutoff():
            continue
        stats.node_bounds.append(bound)
        j = _most_fractional(res.x, binaries, limits.int_tol)
        if j < 0:
            lo_f, hi_f = lo.copy(), hi.copy()
            rounded = np.round(res.x[binaries])
            lo_f[binaries] = rounded
            hi_f[binaries] = rounded
            polished = lp(lo_f, hi_f)
            if polished.status == "optimal" and polished.objective < inc_obj:
                incumbent, inc_obj = polished.x, polished.objective
            elif polished.status != "optimal" and res.objective < inc_obj:
                incumbent, inc_obj = res.x, res.objective
            continue
        if stats.nodes >= limits.node_cap or time.perf_counter() - start > limits.time_cap:
            hit_cap = True
            break
        for val in (0.0, 1.0):
            lo_c, hi_c = lo.copy(), hi.copy()
            lo_c[j] = hi_c[j] = val
            child = lp(lo_c, hi_c)
            stats.nodes += 1
            if child.status == "iteration_limit":
                hit_cap = True
            elif child.status == "optimal" and child.objective < cutoff():
                heapq.heappush(heap, (child.objective, next(counter), lo_c, hi_c, child))

    stats.wall_time = time.perf_counter() - start
    if hit_cap:
        return MilpSolution(ITERATION_LIMIT, incumbent, inc_obj if incumbent is not None else math.nan, stats)
    if incumbent is None:
        return MilpSolution(INFEASIBLE, None, math.nan, stats)
    return MilpSolution(OPTIMAL, incumbent, inc_obj, stats)
