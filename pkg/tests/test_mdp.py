import copy
import json
from pathlib import Path

import numpy as np
import pytest

from qaexplain.mdp import (EVENT_COUNT, NONSTANDARD, InvalidTransition, ProblemError, ScalarizationProfile,
                           UndefinedAttribute, UnreachableGoal, compile, problem_from_dict, problem_to_dict,
                           scalarized_cost)
from qaexplain.robotnav import QA_COLLISION, figure1_instance, figure1_map

DOCS = Path(__file__).resolve().parents[1] / "docs" / "examples"


def corridor(step_prob: float = 1.0) -> dict:
    """a -> b -> g with a slow safe move and a fast risky jump from a."""
    return {
        "name": "corridor",
        "state_types": [{"name": "Cell", "attributes": [{"name": "hazard"}]}],
        "action_types": [{"name": "Step", "attributes": [{"name": "length"}]}],
        "state_vars": [{"name": "pos", "type": "Cell", "domain": ["a", "b", "g", "x"],
                        "values": {"a": {"hazard": 0.0}, "b": {"hazard": 0.5}, "g": {"hazard": 0.0},
                                   "x": {"hazard": 0.0}}}],
        "actions": [
            {"name": "walk", "type": "Step", "rules": [
                {"when": {"pos": "a"}, "attributes": {"length": 2.0},
                 "outcomes": [{"prob": step_prob, "set": {"pos": "b"}}]},
                {"when": {"pos": "b"}, "attributes": {"length": 3.0},
                 "outcomes": [{"prob": 1.0, "set": {"pos": "g"}}]}]},
            {"name": "jump", "type": "Step", "rules": [
                {"when": {"pos": "a"}, "attributes": {"length": 1.0},
                 "outcomes": [{"prob": 1.0, "set": {"pos": "g"}}]}]},
        ],
        "criterion": {"kind": "total", "initial": {"pos": "a"}, "goal": [{"pos": "g"}]},
        "qa": [
            {"name": "time", "kind": "standard", "value": {"expr": "action.length * 2"}, "unit": "s"},
            {"name": "falls", "kind": "event_count",
             "value": {"by_action_type": {"Step": {"table": {"keys": ["pos"], "entries": [
                 {"key": ["a"], "value": 0.0}, {"key": ["b"], "value": 0.1}], "default": 0.0}}}}},
        ],
        "scalarization": {"weights": {"time": 1.0, "falls": 5.0}},
    }


def test_compile_grounds_values_and_prunes_unreachable():
    mdp = compile(problem_from_dict(corridor()))
    names = [mdp.state_name(s) for s in range(mdp.num_states)]
    assert "pos=x" not in names  # never reached from the start
    assert mdp.num_states == 3
    by_label = {(mdp.state_name(int(mdp.pair_state[p])), mdp.pair_labels[p]): p for p in range(mdp.num_pairs)}
    assert mdp.qa[by_label[("pos=a", "walk")]].tolist() == [4.0, 0.0]
    assert mdp.qa[by_label[("pos=b", "walk")]].tolist() == [6.0, 0.1]
    assert mdp.qa[by_label[("pos=a", "jump")]].tolist() == [2.0, 0.0]
    goal = [s for s in range(mdp.num_states) if mdp.goal[s]]
    assert len(goal) == 1 and not mdp.state_pairs[goal[0]]


def test_transition_row_not_summing_to_one():
    with pytest.raises(InvalidTransition):
        compile(problem_from_dict(corridor(step_prob=0.95)))


def test_unreachable_goal():
    d = corridor()
    d["criterion"]["goal"] = [{"pos": "x"}]
    with pytest.raises(UnreachableGoal):
        compile(problem_from_dict(d))


def test_undefined_attribute_in_expression():
    d = corridor()
    d["qa"][0]["value"] = {"expr": "action.width"}
    with pytest.raises(UndefinedAttribute):
        compile(problem_from_dict(d))


def test_missing_field_is_a_problem_error():
    d = corridor()
    del d["actions"]
    with pytest.raises(ProblemError):
        problem_from_dict(d)


def test_nonpositive_weight_rejected():
    d = corridor()
    d["scalarization"]["weights"]["time"] = 0.0
    with pytest.raises(ProblemError):
        compile(problem_from_dict(d))


def test_compilation_is_deterministic():
    a = compile(problem_from_dict(corridor()))
    b = compile(problem_from_dict(corridor()))
    assert a.state_labels == b.state_labels and a.pair_labels == b.pair_labels
    assert (a.transitions != b.transitions).nnz == 0
    assert np.array_equal(a.qa, b.qa)


def test_minmax_normalizer_default():
    mdp = compile(problem_from_dict(corridor()))
    lo, hi = mdp.qa[:, 0].min(), mdp.qa[:, 0].max()
    assert mdp.profile.scales[0] == pytest.approx(1 / (hi - lo))
    assert mdp.profile.offsets[0] == pytest.approx(-lo / (hi - lo))
    costs = mdp.profile.pair_costs(mdp.qa)
    assert costs.min() >= -1e-12


def test_json_round_trip():
    p = figure1_instance()
    d = problem_to_dict(p)
    back = problem_to_dict(problem_from_dict(json.loads(json.dumps(d))))
    assert back == d


def test_shipped_example_matches_builder():
    shipped = json.loads((DOCS / "figure1.json").read_text())
    assert shipped == json.loads(json.dumps(problem_to_dict(figure1_instance())))


def test_robot_state_space_bounded_by_locations_times_speeds():
    mdp = compile(figure1_instance())
    assert mdp.num_states <= 2 * len(figure1_map().locations)


def test_collision_qa_matches_density_table():
    mdp = compile(figure1_instance())
    ci = mdp.qa_index(QA_COLLISION)
    fig = figure1_map()
    expect = {("full", "none"): 0.0, ("full", "sparse"): 0.2, ("full", "dense"): 0.4}
    checked = 0
    for p, lab in enumerate(mdp.pair_labels):
        if not lab.startswith("MoveTo"):
            continue
        loc, speed = mdp.state_labels[int(mdp.pair_state[p])]
        dest = lab[len("MoveTo("):-1]
        density = fig.edge(loc, dest).obstacle
        want = expect.get((speed, density), 0.0)
        assert mdp.qa[p, ci] == pytest.approx(want)
        checked += 1
    assert checked > 0


def test_event_count_above_one_rejected():
    d = corridor()
    d["qa"][1]["value"] = 2.0
    with pytest.raises(ProblemError):
        compile(problem_from_dict(d))


def test_nonstandard_penalties_must_increase():
    d = problem_to_dict(figure1_instance())
    nonstd = next(q for q in d["qa"] if q["kind"] == NONSTANDARD)
    nonstd["events"][2]["penalty"] = 0.5
    with pytest.raises(ProblemError):
        problem_from_dict(d)


def test_kind_constants():
    kinds = {q["kind"] for q in corridor()["qa"]}
    assert EVENT_COUNT in kinds


# ---------------------------------------------------------------- scalarization


def test_scalarized_single_identity():
    assert scalarized_cost(ScalarizationProfile.identity([1.0]), [7.0]) == 7.0


def test_scalarized_zero_vector():
    assert scalarized_cost(ScalarizationProfile.identity([2.0, 3.0]), [0.0, 0.0]) == 0.0


def test_scalarized_weighted_sum():
    assert scalarized_cost(ScalarizationProfile.identity([2.0, 3.0]), [1.0, 1.0]) == 5.0


def test_scalarized_with_normalizer():
    prof = ScalarizationProfile((2.0,), (0.5,), (1.0,))
    assert scalarized_cost(prof, [4.0]) == pytest.approx(2.0 * (0.5 * 4.0 + 1.0))


def test_scalarized_length_mismatch():
    with pytest.raises(ValueError):
        scalarized_cost(ScalarizationProfile.identity([1.0, 1.0]), [1.0])


@pytest.mark.parametrize("weights", [(0.0, 1.0), (1.0, -2.0)])
def test_profile_rejects_nonpositive_weight(weights):
    with pytest.raises(ProblemError):
        ScalarizationProfile.identity(weights)


def test_scalarized_strictly_monotone():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(1, 4))
        prof = ScalarizationProfile(tuple(rng.uniform(0.1, 3, n)), tuple(rng.uniform(0.1, 2, n)),
                                    tuple(rng.uniform(-1, 1, n)))
        q = rng.uniform(0, 5, n)
        for i in range(n):
            up = q.copy()
            up[i] += rng.uniform(0.01, 1)
            assert scalarized_cost(prof, up) > scalarized_cost(prof, q)


def test_explicit_model_is_read_only():
    mdp = compile(problem_from_dict(corridor()))
    with pytest.raises(ValueError):
        mdp.qa[0, 0] = 1.0
    assert copy.deepcopy(mdp).num_states == mdp.num_states
