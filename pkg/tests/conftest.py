import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from qaexplain import milp


def enumerate_binaries(model: milp.MilpModel) -> float:
    """Brute-force MILP optimum: every binary assignment, each completed by HiGHS."""
    c, A, senses, b, lo, hi = model.dense()
    bins = model.binary_indices
    ub = [i for i, s in enumerate(senses) if s != "="]
    eq = [i for i, s in enumerate(senses) if s == "="]
    sign = np.array([1.0 if senses[i] == "<=" else -1.0 for i in ub])
    best = np.inf
    for assign in itertools.product((0.0, 1.0), repeat=len(bins)):
        l, h = lo.copy(), hi.copy()
        l[bins] = assign
        h[bins] = assign
        res = linprog(c, A_ub=(A[ub] * sign[:, None]) if ub else None, b_ub=(b[ub] * sign) if ub else None,
                      A_eq=A[eq] if eq else None, b_eq=b[eq] if eq else None,
                      bounds=[(x, None if np.isinf(y) else y) for x, y in zip(l, h)], method="highs")
        if res.status == 0:
            best = min(best, res.fun)
    return best


def random_milp(rng: np.random.Generator, n_bin: int, n_cont: int = 3, n_rows: int = 4) -> milp.MilpModel:
    m = milp.MilpModel("random")
    xs = [m.add_var(f"b{i}", binary=True) for i in range(n_bin)]
    xs += [m.add_var(f"y{i}", 0.0, float(rng.integers(1, 6))) for i in range(n_cont)]
    m.set_objective({j: float(rng.integers(-9, 10)) for j in xs})
    for r in range(n_rows):
        coeffs = {j: float(rng.integers(-5, 6)) for j in xs if rng.random() < 0.7}
        if not coeffs:
            continue
        sense = ["<=", ">=", "="][int(rng.integers(0, 3)) if r else 0]
        if sense == "=":
            coeffs = {j: abs(v) for j, v in coeffs.items()}
            rhs = float(rng.integers(0, 4))
        else:
            rhs = float(rng.integers(-2, 10)) if sense == "<=" else float(rng.integers(-10, 3))
        m.add_constraint(coeffs, sense, rhs, name=f"r{r}")
    return m


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
