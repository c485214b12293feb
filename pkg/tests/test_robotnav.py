import json

import numpy as np
import pytest

from qaexplain.alternatives import generate_alternatives
from qaexplain.mdp import ProblemError, compile
from qaexplain.oracle import pareto_filter
from qaexplain.robotnav import (ALIGNED, EASY_SUBOPTIMAL, EASY_UNDOMINATED, FIGURE1_DASHED, FIGURE1_DOTTED,
                                FIGURE1_PROFILE, MISALIGNED, QA_COLLISION, QA_INTRUSION, QA_TIME, SEVERITY_MARGIN,
                                BuildingMap, CostProfile, DomainTables, Edge, Location, Route, Scenario,
                                UnknownLocation, best_route_cost, build_problem, figure1_instance, figure1_map,
                                generate_scenarios, grid_topology, line_topology, perturbed_profile, policy_route,
                                random_map, route_value_vectors, scenarios_to_json, verify_scenario)
from qaexplain.valuation import evaluate, solve_optimal

TABLES = DomainTables.defaults()


def test_default_tables():
    assert TABLES.speeds == {"full": 1.0, "half": 0.5}
    assert TABLES.collision["full"] == {"none": 0.0, "sparse": 0.2, "dense": 0.4}
    assert set(TABLES.collision["half"].values()) == {0.0}
    assert TABLES.intrusiveness == {"public": 0.0, "semi-private": 1.0, "private": 3.0}
    assert TABLES.start_speed == "half"


def test_map_validation():
    locs = [Location("A", "public"), Location("B", "private")]
    with pytest.raises(UnknownLocation):
        BuildingMap(locs, [Edge("A", "C", 1.0)])
    with pytest.raises(ProblemError):
        BuildingMap(locs, [Edge("A", "B", 0.0)])
    with pytest.raises(ProblemError):
        BuildingMap(locs + [Location("A", "public")], [Edge("A", "B", 1.0)])
    with pytest.raises(ProblemError):
        BuildingMap(locs + [Location("C", "public")], [Edge("A", "B", 1.0)])


def test_unknown_start():
    with pytest.raises(UnknownLocation):
        build_problem(figure1_map(), "L99", "L7", TABLES, FIGURE1_PROFILE)


def test_map_json_round_trip():
    m = figure1_map()
    assert BuildingMap.from_json(json.loads(json.dumps(m.to_json()))).to_json() == m.to_json()


def test_figure1_route_values():
    fig = figure1_map()
    dashed = Route(FIGURE1_DASHED, ("full",) * 4).values(fig, TABLES)
    dotted = Route(FIGURE1_DOTTED, ("full",) * 2).values(fig, TABLES)
    assert dashed == (160.0, 0.0, 0.0)
    assert dotted[0] < dashed[0] and dotted[1] > 0 and dotted[2] > 0


def test_figure1_plan_is_dashed_route_and_matches_route_oracle():
    mdp = compile(figure1_instance())
    pol = solve_optimal(mdp)
    route = policy_route(mdp, pol)
    best, oracle_route = best_route_cost(figure1_map(), "L1", "L7", TABLES, FIGURE1_PROFILE)
    assert route.stops == FIGURE1_DASHED == oracle_route.stops
    assert evaluate(mdp, pol).scalarized_cost == pytest.approx(best)


def test_figure1_single_time_alternative():
    mdp = compile(figure1_instance())
    pol = solve_optimal(mdp)
    alts = generate_alternatives(mdp, None, pol)
    assert [r.target_name for r in alts.results] == [QA_TIME]
    r = alts.results[0]
    assert policy_route(mdp, r.policy).stops == FIGURE1_DOTTED
    assert set(r.losses) == {QA_COLLISION, QA_INTRUSION}
    assert set(alts.skipped) == {QA_COLLISION, QA_INTRUSION}


def test_mdp_costs_match_route_oracle_on_random_maps():
    rng = np.random.default_rng(21)
    topo = grid_topology(2, 3)
    for _ in range(10):
        building = random_map(rng, topo)
        prof = CostProfile(1.0, float(rng.uniform(20, 200)), float(rng.uniform(2, 20)))
        mdp = compile(build_problem(building, topo.start, topo.goal, TABLES, prof))
        pol = solve_optimal(mdp)
        best, _ = best_route_cost(building, topo.start, topo.goal, TABLES, prof)
        assert evaluate(mdp, pol).scalarized_cost == pytest.approx(best, rel=1e-9)
        assert prof.cost(policy_route(mdp, pol).values(building, TABLES)) == pytest.approx(best)


def test_route_values_equal_mdp_valuation():
    mdp = compile(figure1_instance())
    pol = solve_optimal(mdp)
    val = evaluate(mdp, pol)
    route = policy_route(mdp, pol)
    assert route.values(figure1_map(), TABLES) == pytest.approx(val.values)


def test_perturbed_profile_range():
    rng = np.random.default_rng(22)
    user = CostProfile(1.0, 100.0, 10.0)
    for _ in range(200):
        p = perturbed_profile(rng, user)
        for a, b in ((p.per_second, 1.0), (p.per_collision, 100.0), (p.per_intrusion, 10.0)):
            assert 0.1 * b * (1 - 1e-3) <= a <= 10 * b * (1 + 1e-3)


def test_cost_profile_positive():
    with pytest.raises(ValueError):
        CostProfile(0.0, 1.0, 1.0)


def test_topologies():
    g = grid_topology()
    assert len(g.locations) == 15 and (g.start, g.goal) == ("L1", "L15")
    line = line_topology()
    assert len(line.edges) == 3


def test_obstacle_free_line_has_single_front_member():
    rng = np.random.default_rng(23)
    line = line_topology()
    building = random_map(rng, line, obstacle_free=True)
    front = pareto_filter([(r, np.array(v)) for r, v in
                           route_value_vectors(building, line.start, line.goal, TABLES)])
    assert len(front.members) == 1


@pytest.fixture(scope="module")
def small_batch():
    return generate_scenarios(seed=3, count=4, profiles=2, easy=2)


def test_scenario_labels_and_verification(small_batch):
    labels = [s.label for s in small_batch]
    assert labels == [ALIGNED, MISALIGNED, ALIGNED, MISALIGNED, EASY_UNDOMINATED, EASY_SUBOPTIMAL]
    for sc in small_batch:
        assert verify_scenario(sc) == sc.label


def test_misaligned_plan_costs_user_more(small_batch):
    for sc in small_batch:
        best, _ = best_route_cost(sc.map, sc.start, sc.goal, sc.tables, sc.user_profile)
        cost = sc.user_profile.cost(sc.values)
        if sc.label == ALIGNED:
            assert cost == pytest.approx(best)
        elif sc.label == MISALIGNED:
            assert cost > best
        elif sc.label == EASY_SUBOPTIMAL:
            assert cost >= (1 + SEVERITY_MARGIN) * best - 1e-6


def test_treatment_bundles_have_alternatives(small_batch):
    for sc in small_batch:
        if sc.label in (ALIGNED, MISALIGNED):
            assert 1 <= len(sc.bundle["treatment"]["alternatives"]) <= 3
        assert sc.bundle["treatment"]["text"].startswith("My objectives are to:")
        assert "valuation" in sc.bundle["control"]


def test_profiles_shared_in_blocks(small_batch):
    users = [s.user_profile for s in small_batch[:4]]
    assert users[0] == users[1] and users[2] == users[3] and users[0] != users[2]


def test_scenario_json_round_trip(small_batch):
    d = json.loads(json.dumps(scenarios_to_json(small_batch, 3, "grid")))
    back = [Scenario.from_json(x) for x in d["items"]]
    assert [b.to_json() for b in back] == d["items"]


def test_tampered_label_detected(small_batch):
    sc = small_batch[0]
    fake = Scenario(sc.id, sc.map, sc.start, sc.goal, sc.tables, sc.robot_profile, sc.user_profile, MISALIGNED,
                    sc.route, sc.values, sc.bundle)
    assert verify_scenario(fake) == ALIGNED


def test_generation_is_seed_deterministic():
    a = scenarios_to_json(generate_scenarios(seed=5, count=2), 5, "grid")
    b = scenarios_to_json(generate_scenarios(seed=5, count=2), 5, "grid")
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_fork_map_is_severely_suboptimal_for_any_user():
    from qaexplain.robotnav import fork_map, random_profile
    rng = np.random.default_rng(24)
    for _ in range(200):
        user = random_profile(rng)
        building, robot = fork_map(rng, user, TABLES)
        best, user_route = best_route_cost(building, "L1", "L4", TABLES, user)
        _, robot_route = best_route_cost(building, "L1", "L4", TABLES, robot)
        assert robot_route.stops == ("L1", "L3", "L4") and user_route.stops == ("L1", "L2", "L4")
        assert user.cost(robot_route.values(building, TABLES)) >= (1 + SEVERITY_MARGIN) * best
