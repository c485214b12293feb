"""Dense bounded-variable revised simplex.

Solves ``min c.x  s.t.  A x (<=,=,>=) b,  lo <= x <= hi`` with a two-phase
primal method. Nonbasic variables sit at either bound, so finite upper
bounds never become rows. Pricing is Dantzig's rule; after a run of
degenerate pivots the solver switches to Bland's rule until it makes
progress again.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
_REFACTOR_EVERY = 64
_DEGENERATE_RUN = 30


@dataclass
class LpResult:
    status: str  # optimal | infeasible | unbounded | iteration_limit
    x: np.ndarray | None
    objective: float
    iterations: int


def _column_map(lo: np.ndarray, hi: np.ndarray):
    """Express x = offset + M z with z >= 0 and z <= u."""
    n = len(lo)
    cols: list[tuple[int, float]] = []  # (original var, sign)
    upper: list[float] = []
    offset = np.zeros(n)
    for j in range(n):
        if np.isfinite(lo[j]):
            offset[j] = lo[j]
            cols.append((j, 1.0))
            upper.append(hi[j] - lo[j])
        elif np.isfinite(hi[j]):
            offset[j] = hi[j]
            cols.append((j, -1.0))
            upper.append(np.inf)
        else:
            cols.append((j, 1.0))
            upper.append(np.inf)
            cols.append((j, -1.0))
            upper.append(np.inf)
    M = np.zeros((n, len(cols)))
    for k, (j, s) in enumerate(cols):
        M[j, k] = s
    return offset, M, np.array(upper, dtype=float)


class _Tableau:
    def __init__(self, A: np.ndarray, b: np.ndarray, upper: np.ndarray,
                 basis: list[int], max_iter: int):
        self.A = A
        self.b = b
        self.m, self.N = A.shape
        self.upper = upper.copy()
        self.basis = list(basis)
        self.is_basic = np.zeros(self.N, dtype=bool)
        self.is_basic[self.basis] = True
        self.at_upper = np.zeros(self.N, dtype=bool)
        self.allowed = np.ones(self.N, dtype=bool)
        self.iterations = 0
        self.max_iter = max_iter
        self.refactor()

    def nonbasic_values(self) -> np.ndarray:
        v = np.zeros(self.N)
        up = self.at_upper & ~self.is_basic
        v[up] = self.upper[up]
        return v

    def refactor(self) -> None:
        B = self.A[:, self.basis]
        self.Binv = np.linalg.inv(B) if self.m else np.zeros((0, 0))
        xN = self.nonbasic_values()
        self.xB = self.Binv @ (self.b - self.A @ xN)

    def values(self) -> np.ndarray:
        z = self.nonbasic_values()
        z[self.basis] = self.xB
        return z

    def _pivot(self, r: int, q: int, alpha: np.ndarray) -> None:
        piv = alpha[r]
        row = self.Binv[r] / piv
        self.Binv -= np.outer(alpha, row)
        self.Binv[r] = row
        self.is_basic[self.basis[r]] = False
        self.basis[r] = q
        self.is_basic[q] = True
        self.at_upper[q] = False

    def run(self, cost: np.ndarray) -> str:
        degenerate = 0
        bland = False
        since_refactor = 0
        while True:
            if self.iterations >= self.max_iter:
                return "iteration_limit"
            if since_refactor >= _REFACTOR_EVERY:
                self.refactor()
                since_refactor = 0
            pi = cost[self.basis] @ self.Binv
            d = cost - pi @ self.A
            elig = ~self.is_basic & self.allowed & (self.upper > 0)
            elig &= np.where(self.at_upper, d > OPT_TOL, d < -OPT_TOL)
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                return "optimal"
            q = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
            alpha = self.Binv @ self.A[:, q]
            sigma = -1.0 if self.at_upper[q] else 1.0
            delta = sigma * alpha

            t_best = self.upper[q]
            r = -1
            dec = delta > PIVOT_TOL
            inc = delta < -PIVOT_TOL
            ub = self.upper[self.basis]
            ratios = np.full(self.m, np.inf)
            ratios[dec] = np.maximum(self.xB[dec], 0.0) / delta[dec]
            ok = inc & np.isfinite(ub)
            ratios[ok] = np.maximum(ub[ok] - self.xB[ok], 0.0) / -delta[ok]
            if self.m:
                t_row = ratios.min()
                if t_row < t_best:
                    ties = np.flatnonzero(ratios <= t_row + 1e-12)
                    if bland:
                        r = int(ties[np.argmin([self.basis[i] for i in ties])])
                    else:
                        r = int(ties[np.argmax(np.abs(delta[ties]))])
                    t_best = ratios[r]
            if not np.isfinite(t_best):
                return "unbounded"

            self.iterations += 1
            since_refactor += 1
            self.xB -= t_best * delta
            if r < 0:
                self.at_upper[q] = not self.at_upper[q]
            else:
                leave = self.basis[r]
                leave_upper = delta[r] < 0
                entering_value = t_best if sigma > 0 else self.upper[q] - t_best
                self._pivot(r, q, alpha)
                self.xB[r] = entering_value
                self.at_upper[leave] = leave_upper
            if t_best < 1e-12:
                degenerate += 1
                if degenerate > _DEGENERATE_RUN:
                    bland = True
            else:
                degenerate = 0
                bland = False

    def drive_out(self, artificial: np.ndarray) -> None:
        """Pivot zero-level artificials out of the basis where possible."""
        for r in range(self.m):
            if not artificial[self.basis[r]]:
                continue
            row = self.Binv[r] @ self.A
            cand = np.flatnonzero(~self.is_basic & ~artificial & (np.abs(row) > 1e-7))
            if cand.size == 0:
                continue
            q = int(cand[np.argmax(np.abs(row[cand]))])
            alpha = self.Binv @ self.A[:, q]
            old = self.basis[r]
            self._pivot(r, q, alpha)
            self.at_upper[old] = False
            self.refactor()


def solve_lp(c, A, senses, b, lo, hi, max_iter: int | None = None) -> LpResult:
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float).reshape(len(senses), len(c))
    b = np.asarray(b, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    m, n = A.shape
    if np.any(lo > hi):
        return LpResult("infeasible", None, np.nan, 0)

    offset, M, u = _column_map(lo, hi)
    Az = A @ M
    bz = b - A @ offset
    cz = c @ M
    nz = Az.shape[1]

    slack_sign = np.array([{"<=": 1.0, ">=": -1.0, "=": 0.0}[s] for s in senses])
    slack_rows = np.flatnonzero(slack_sign != 0.0)
    ns = len(slack_rows)
    S = np.zeros((m, ns))
    S[slack_rows, np.arange(ns)] = slack_sign[slack_rows]
    flip = bz < 0
    Az[flip] *= -1
    S[flip] *= -1
    bz = np.where(flip, -bz, bz)

    basis: list[int] = [-1] * m
    for k, i in enumerate(slack_rows):
        if S[i, k] > 0:
            basis[i] = nz + k
    art_rows = [i for i in range(m) if basis[i] < 0]
    na = len(art_rows)
    R = np.zeros((m, na))
    for k, i in enumerate(art_rows):
        R[i, k] = 1.0
        basis[i] = nz + ns + k

    full = np.hstack([Az, S, R])
    upper = np.concatenate([u, np.full(ns, np.inf), np.full(na, np.inf)])
    if max_iter is None:
        max_iter = 50 * (m + full.shape[1]) + 1000
    tab = _Tableau(full, bz, upper, basis, max_iter)

    artificial = np.zeros(full.shape[1], dtype=bool)
    artificial[nz + ns:] = True
    if na:
        cost1 = artificial.astype(float)
        status = tab.run(cost1)
        if status == "iteration_limit":
            return LpResult(status, None, np.nan, tab.iterations)
        tab.refactor()
        infeas = float(tab.values()[artificial].sum())
        if infeas > FEAS_TOL * max(1.0, float(np.abs(bz).max(initial=0.0))):
            return LpResult("infeasible", None, np.nan, tab.iterations)
        tab.upper[artificial] = 0.0
        tab.allowed[artificial] = False
        tab.drive_out(artificial)

    cost2 = np.concatenate([cz, np.zeros(ns + na)])
    status = tab.run(cost2)
    if status != "optimal":
        return LpResult(status, None, np.nan, tab.iterations)
    tab.refactor()
    z = tab.values()[:nz]
    z = np.clip(z, 0.0, u)
    x = offset + M @ z
    x = np.clip(x, lo, hi)
    return LpResult("optimal", x, float(c @ x), tab.iterations)
