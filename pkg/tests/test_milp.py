import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from qaexplain import milp
from conftest import enumerate_binaries, random_milp


def test_pure_lp_single_constraint():
    m = milp.MilpModel("lp")
    x = m.add_var("x")
    m.set_objective({x: 1.0})
    m.add_constraint({x: 1.0}, ">=", 3.0)
    sol = milp.solve(m)
    assert sol.status == milp.OPTIMAL
    assert sol.value(x) == pytest.approx(3.0)
    assert sol.objective == pytest.approx(3.0)


def test_contradictory_bounds_are_infeasible():
    m = milp.MilpModel("bad")
    x = m.add_var("x", -math.inf, math.inf)
    m.add_constraint({x: 1.0}, ">=", 2.0)
    m.add_constraint({x: 1.0}, "<=", 1.0)
    assert milp.solve(m).status == milp.INFEASIBLE


def test_unbounded_lp():
    m = milp.MilpModel("open")
    x = m.add_var("x")
    m.set_objective({x: -1.0})
    assert milp.solve(m).status == milp.UNBOUNDED


def test_knapsack_matches_exhaustive_enumeration():
    values, weights, cap = [3, 4, 2, 5], [2, 3, 1, 4], 6
    m = milp.MilpModel("knapsack")
    xs = [m.add_var(f"k{i}", binary=True) for i in range(4)]
    m.set_objective({j: -float(v) for j, v in zip(xs, values)})
    m.add_constraint({j: float(w) for j, w in zip(xs, weights)}, "<=", float(cap))
    best = max(sum(v for v, t in zip(values, pick) if t)
               for pick in itertools.product((0, 1), repeat=4)
               if sum(w for w, t in zip(weights, pick) if t) <= cap)
    sol = milp.solve(m)
    assert best == 9
    assert -sol.objective == pytest.approx(best)
    assert all(abs(v - round(v)) <= 1e-6 for v in sol.x)


@pytest.mark.parametrize("seed", range(30))
def test_branch_and_bound_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    m = random_milp(rng, n_bin=int(rng.integers(1, 9)))
    sol = milp.solve(m)
    brute = enumerate_binaries(m)
    if np.isinf(brute):
        assert sol.status == milp.INFEASIBLE
    else:
        assert sol.status == milp.OPTIMAL
        assert sol.objective == pytest.approx(brute, abs=1e-6)
        assert m.max_violation(sol.x) <= 1e-6
        # every explored node's relaxation bounds the optimum from below
        assert all(b <= sol.objective + 1e-6 for b in sol.stats.node_bounds)


def test_solve_is_deterministic():
    m = random_milp(np.random.default_rng(7), n_bin=8)
    a, b = milp.solve(m), milp.solve(m)
    assert a.status == b.status
    assert np.array_equal(a.x, b.x)


def test_node_cap_reports_iteration_limit():
    m = random_milp(np.random.default_rng(3), n_bin=10, n_rows=6)
    sol = milp.solve(m, milp.MilpLimits(node_cap=1))
    assert sol.status in (milp.ITERATION_LIMIT, milp.OPTIMAL, milp.INFEASIBLE)
    if sol.stats.nodes > 1 and sol.status != milp.OPTIMAL:
        assert sol.status == milp.ITERATION_LIMIT


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_simplex_agrees_with_highs(seed):
    rng = np.random.default_rng(seed)
    n, m_rows = int(rng.integers(1, 6)), int(rng.integers(1, 5))
    c = rng.integers(-5, 6, size=n).astype(float)
    A = rng.integers(-4, 5, size=(m_rows, n)).astype(float)
    b = rng.integers(-5, 10, size=m_rows).astype(float)
    senses = [["<=", ">=", "="][k] for k in rng.integers(0, 3, size=m_rows)]
    lo = np.where(rng.random(n) < 0.2, -np.inf, rng.integers(-3, 1, size=n).astype(float))
    hi = np.where(rng.random(n) < 0.5, np.inf, lo + rng.integers(0, 6, size=n))
    hi = np.where(np.isinf(lo) & np.isinf(hi), np.inf, hi)
    hi = np.where(np.isinf(lo), np.maximum(hi, 0.0), hi)
    res = milp.solve_lp(c, A, senses, b, lo, hi)
    ub = [i for i, s in enumerate(senses) if s != "="]
    eq = [i for i, s in enumerate(senses) if s == "="]
    sgn = np.array([1.0 if senses[i] == "<=" else -1.0 for i in ub])
    ref = linprog(c, A_ub=A[ub] * sgn[:, None] if ub else None, b_ub=b[ub] * sgn if ub else None,
                  A_eq=A[eq] if eq else None, b_eq=b[eq] if eq else None,
                  bounds=[(None if np.isinf(x) else x, None if np.isinf(y) else y) for x, y in zip(lo, hi)],
                  method="highs")
    expected = {0: "optimal", 2: "infeasible", 3: "unbounded"}[ref.status]
    assert res.status == expected
    if expected == "optimal":
        assert res.objective == pytest.approx(ref.fun, abs=1e-6)


# ---------------------------------------------------------------- LP files


def test_bounded_variable_only_model_has_bounds_section_only():
    m = milp.MilpModel("bounds")
    m.add_var("x", 1.0, 4.0)
    text = milp.export_lp(m)
    assert "Bounds" in text and " 1 <= x <= 4" in text
    assert "Subject To" not in text and "Binaries" not in text
    assert text.rstrip().endswith("End")


def test_binary_variable_listed_under_binaries():
    m = milp.MilpModel("bin")
    d = m.add_var("d", binary=True)
    m.add_constraint({d: 1.0}, "<=", 1.0, name="one")
    lines = milp.export_lp(m).splitlines()
    assert lines[lines.index("Binaries") + 1].split() == ["d"]


def test_section_order_is_fixed():
    m = random_milp(np.random.default_rng(1), n_bin=3)
    text = milp.export_lp(m)
    keys = ["Minimize", "Subject To", "Bounds", "Binaries", "End"]
    pos = [text.index(k) for k in keys]
    assert pos == sorted(pos)


@pytest.mark.parametrize("seed", range(25))
def test_lp_round_trip_reproduces_model(seed):
    m = random_milp(np.random.default_rng(seed), n_bin=int(seed % 6) + 1, n_cont=3)
    m.variables[-1].lo = -math.inf
    m.variables[-2].lo = -2.5
    text = milp.export_lp(m)
    back = milp.read_lp(text)
    assert back.same_program(m)
    assert milp.export_lp(back) == text


def test_export_is_deterministic():
    m = random_milp(np.random.default_rng(9), n_bin=4)
    assert milp.export_lp(m) == milp.export_lp(m.copy())


def test_reader_rejects_maximize():
    with pytest.raises(milp.LpParseError):
        milp.read_lp("Maximize\n obj: x\nEnd\n")


def test_model_validation():
    m = milp.MilpModel("v")
    with pytest.raises(milp.ModelError):
        m.add_var("bad name")
    x = m.add_var("x", 2.0, 1.0)
    with pytest.raises(milp.ModelError):
        m.validate()
    with pytest.raises(milp.ModelError):
        m.add_constraint({x + 5: 1.0}, "<=", 1.0)


def _highs(model: milp.MilpModel) -> float:
    from scipy.optimize import Bounds, LinearConstraint, milp as highs_milp
    c, A, senses, b, lo, hi = model.dense()
    lb = np.where(np.array(senses) == "<=", -np.inf, b)
    ub = np.where(np.array(senses) == ">=", np.inf, b)
    integrality = np.zeros(len(c))
    integrality[model.binary_indices] = 1
    res = highs_milp(c, constraints=LinearConstraint(A, lb, ub), integrality=integrality,
                     bounds=Bounds(lo, hi), options={"mip_rel_gap": 1e-9})
    return res.fun if res.status == 0 else np.inf


@pytest.mark.parametrize("seed", range(10))
def test_exported_occupation_programs_agree_with_highs(seed):
    from qaexplain.alternatives import AlternativeQuery, build_total_cost_milp, default_penalty
    from qaexplain.random_instances import random_total_cost
    from qaexplain.valuation import evaluate, solve_optimal
    mdp = random_total_cost(np.random.default_rng(seed))
    base = evaluate(mdp, solve_optimal(mdp))
    for i in range(mdp.num_qa):
        for pen in (None, default_penalty(mdp.profile, i, 0.1, "quadratic", base.scalarized_cost)):
            q = AlternativeQuery(i, base.values[i], 0.1, 0.01 * mdp.profile.weights[i], pen)
            model = milp.read_lp(milp.export_lp(build_total_cost_milp(mdp, None, q).model))
            ours = milp.solve(model)
            ref = _highs(model)
            if np.isinf(ref):
                assert ours.status == milp.INFEASIBLE
            else:
                assert ours.objective == pytest.approx(ref, abs=1e-6)
