import json

import numpy as np
import pytest

from qaexplain import milp
from qaexplain.alternatives import (AlternativeQuery, AmbiguousRecovery, BuiltMilp, NonconvexPenalty, PenaltySpec,
                                    apply_soft_constraint, build_average_cost_milp, build_total_cost_milp, compare,
                                    default_bound_X, generate_alternatives, recover_policy, solve_query)
from qaexplain.mdp import ExplicitMdp
from qaexplain.oracle import exact_values, pareto_front
from qaexplain.random_instances import random_total_cost, random_unichain
from qaexplain.valuation import MILP_ALTERNATIVE, evaluate, solve_optimal


def three_by_two():
    """Three non-goal states with two actions each, plus a goal."""
    trans = [
        [[0, 1, 0, 0], [0, 0, 1, 0]],
        [[0, 0, 1, 0], [0, 0, 0, 1]],
        [[0, 0, 0, 1], [0, 0.5, 0, 0.5]],
        [],
    ]
    qa = [[[1, 2], [2, 1]], [[1, 1], [3, 0]], [[2, 0], [1, 1]], []]
    return ExplicitMdp.from_arrays(trans, qa, goal=[3])


def test_total_cost_milp_size():
    mdp = three_by_two()
    built = build_total_cost_milp(mdp, None, AlternativeQuery(0, 5.0, 1.0, 0.01))
    m = built.model
    assert len(built.x) == 6 and len(built.dx) == 6
    assert len(m.variables) == 12 and len(m.binary_indices) == 6
    assert len(m.constraints) == 14
    names = [c.name for c in m.constraints]
    assert {"source", "goal_inflow", "qa_bound"} <= set(names)


def test_planner_program_matches_policy_iteration():
    rng = np.random.default_rng(11)
    for _ in range(20):
        mdp = random_total_cost(rng)
        solved = solve_query(mdp, None, None)
        assert solved.solution.objective == pytest.approx(evaluate(mdp, solve_optimal(mdp)).scalarized_cost,
                                                          abs=1e-6)


def test_default_bound_X():
    mdp = three_by_two()
    assert default_bound_X(mdp) == pytest.approx(4 / 0.5)


def test_average_cost_milp_structure_and_gain():
    rng = np.random.default_rng(12)
    mdp = random_unichain(rng, max_states=4)
    built = build_average_cost_milp(mdp, None, None)
    m = built.model
    n = mdp.num_pairs
    assert len(m.variables) == 4 * n and len(m.binary_indices) == 2 * n
    assert built.X == 1.0 and built.Y == 1.0
    sol = milp.solve(m)
    pol = recover_policy(sol, built)
    assert sol.objective == pytest.approx(evaluate(mdp, pol).scalarized_cost, abs=1e-9)


def test_builders_check_criterion():
    with pytest.raises(ValueError):
        build_average_cost_milp(three_by_two(), None, None)
    with pytest.raises(ValueError):
        build_total_cost_milp(random_unichain(np.random.default_rng(0)), None, None)


def test_hard_bound_is_respected():
    rng = np.random.default_rng(13)
    for _ in range(30):
        mdp = random_total_cost(rng)
        base = evaluate(mdp, solve_optimal(mdp))
        for i in range(mdp.num_qa):
            q = AlternativeQuery(i, base.values[i], 0.05, 0.01)
            try:
                solved = solve_query(mdp, None, q)
            except Exception:
                continue
            assert evaluate(mdp, solved.policy).values[i] <= q.theta + 1e-9
            assert solved.policy.provenance == MILP_ALTERNATIVE and solved.policy.target_qa == i


def test_soft_constraint_rows():
    mdp = three_by_two()
    pen = PenaltySpec("quadratic", coefficient=4.0, segments=3, upper=1.0)
    built = build_total_cost_milp(mdp, None, AlternativeQuery(0, 5.0, 1.0, 0.01, pen))
    names = [c.name for c in built.model.constraints]
    assert "qa_bound" not in names
    assert {"qa_cap", "qa_soft", "qa_violation_nonneg", "penalty_split"} <= set(names)
    v = built.model.variables[built.v]
    assert (v.lo, v.hi) == (0.0, 1.0)
    ws = [var for var in built.model.variables if var.name.startswith("w_")]
    assert len(ws) == 3


def test_linear_penalty_has_no_segments():
    mdp = three_by_two()
    built = build_total_cost_milp(mdp, None, AlternativeQuery(0, 5.0, 1.0, 0.01, PenaltySpec("linear", slope=3.0)))
    assert "penalty_split" not in [c.name for c in built.model.constraints]
    assert built.model.objective[built.v] == 3.0


def test_soft_needs_penalty():
    mdp = three_by_two()
    built = build_total_cost_milp(mdp, None, AlternativeQuery(0, 5.0, 1.0, 0.01))
    with pytest.raises(ValueError):
        apply_soft_constraint(built, AlternativeQuery(0, 5.0, 1.0, 0.01))


def test_quadratic_segments_are_secants():
    pen = PenaltySpec("quadratic", coefficient=2.0, segments=4)
    for v in np.linspace(0, 1, 5):
        assert pen.value(v, 1.0) == pytest.approx(2.0 * v * v)
    assert pen.value(0.1, 1.0) >= 2.0 * 0.01


def test_nonconvex_penalty_rejected():
    with pytest.raises(NonconvexPenalty):
        PenaltySpec("piecewise", slopes=(3.0, 1.0)).pieces(1.0)
    with pytest.raises(NonconvexPenalty):
        PenaltySpec("piecewise", slopes=(-1.0, 1.0)).pieces(1.0)


@pytest.mark.parametrize("kw", [dict(delta=0.0, k_prime=0.1), dict(delta=1.0, k_prime=0.0)])
def test_query_validation(kw):
    with pytest.raises(ValueError):
        AlternativeQuery(0, 1.0, **kw)


def test_ambiguous_recovery_raised():
    mdp = three_by_two()
    built = build_total_cost_milp(mdp, None, None)
    x = np.zeros(len(built.model.variables))
    x[built.x[0]] = 0.5
    x[built.x[1]] = 0.5
    sol = milp.MilpSolution(milp.OPTIMAL, x, 0.0, milp.SolveStats())
    with pytest.raises(AmbiguousRecovery):
        recover_policy(sol, built)


def test_unvisited_states_flagged():
    mdp = three_by_two()
    solved = solve_query(mdp, None, None)
    visited = {int(mdp.pair_state[p]) for p in np.flatnonzero(solved.built.occupation(solved.solution) > 1e-9)}
    flagged = set(solved.policy.unreachable)
    assert flagged == {s for s in range(3) if s not in visited}


@pytest.mark.parametrize("penalty", [None, "quadratic", "linear"])
def test_alternatives_are_pareto_optimal_and_improve_target(penalty):
    rng = np.random.default_rng(14)
    emitted = 0
    for _ in range(40):
        mdp = random_total_cost(rng)
        pol = solve_optimal(mdp)
        base = evaluate(mdp, pol)
        front = pareto_front(mdp)
        alts = generate_alternatives(mdp, None, pol, penalty=penalty)
        assert not alts.failures
        for r in alts.results:
            emitted += 1
            v = exact_values(mdp, r.policy)
            assert not front.dominated(v)
            assert v[r.target] < base.values[r.target] - 1e-9
            assert not r.policy.same_behaviour(pol, mdp)
            assert r.gains[r.target_name] == pytest.approx(base.values[r.target] - v[r.target])
    assert emitted > 0


def test_average_cost_alternatives():
    rng = np.random.default_rng(15)
    emitted = 0
    for _ in range(15):
        mdp = random_unichain(rng, max_states=4)
        pol = solve_optimal(mdp)
        base = evaluate(mdp, pol)
        front = pareto_front(mdp)
        alts = generate_alternatives(mdp, None, pol)
        assert not alts.failures
        for r in alts.results:
            emitted += 1
            assert not front.dominated(r.valuation.values)
            assert r.valuation.values[r.target] < base.values[r.target]
    assert emitted > 0


def test_skip_reasons():
    # one action everywhere: every QA already at its bound
    mdp = ExplicitMdp.from_arrays([[[0, 1]], []], [[[1.0, 2.0]], []], goal=[1])
    alts = generate_alternatives(mdp, None, solve_optimal(mdp))
    assert not alts.results
    assert set(alts.skipped.values()) == {"already at its lower bound"}


def test_compare_threshold():
    from qaexplain.valuation import PolicyValuation
    a = PolicyValuation("total", ("p", "q", "r"), (1.0, 2.0, 3.0), {}, 0.0)
    b = PolicyValuation("total", ("p", "q", "r"), (0.5, 2.0 + 1e-8, 4.0), {}, 0.0)
    gains, losses = compare(a, b)
    assert gains == {"p": 0.5} and losses == {"r": 1.0}


def test_result_json_is_deterministic():
    rng = np.random.default_rng(16)
    mdp = random_total_cost(rng, max_states=6)
    pol = solve_optimal(mdp)
    a = generate_alternatives(mdp, None, pol)
    b = generate_alternatives(mdp, None, pol)
    dump = lambda s: json.dumps([r.to_json(mdp) for r in s.results], sort_keys=True)
    assert dump(a) == dump(b)


def test_k_prime_ratio_bounds():
    mdp = three_by_two()
    with pytest.raises(ValueError):
        generate_alternatives(mdp, None, solve_optimal(mdp), k_prime_ratio=1.5)


def test_built_milp_type():
    assert isinstance(build_total_cost_milp(three_by_two(), None, None), BuiltMilp)
