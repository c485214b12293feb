import json

import pytest

from qaexplain.alternatives import AlternativeResult
from qaexplain.explain import (BEST_POSSIBLE, TRADED_OFF, MissingVocabulary, describe_objectives,
                               describe_valuation, explain, fmt, load_templates, policy_dot, policy_listing,
                               render_contrastive)
from qaexplain.mdp import compile
from qaexplain.robotnav import QA_COLLISION, QA_INTRUSION, QA_TIME, figure1_instance
from qaexplain.valuation import PolicyValuation, Policy, evaluate, solve_optimal


@pytest.fixture
def robot():
    mdp = compile(figure1_instance())
    vocab = {k: dict(v) for k, v in mdp.vocabulary.items()}
    vocab[QA_TIME]["unit"] = "minutes"
    return mdp, vocab


def valuation(specs, time, coll, counts):
    values = {QA_TIME: time, QA_COLLISION: coll,
              QA_INTRUSION: counts.get("somewhat-intrusive", 0) + 3 * counts.get("very-intrusive", 0)}
    ev = {QA_COLLISION: coll, "non-intrusive": 0.0, "somewhat-intrusive": 0.0, "very-intrusive": 0.0, **counts}
    return PolicyValuation("total", tuple(s.name for s in specs), tuple(values[s.name] for s in specs), ev, 0.0)


def result(specs, target, val, gains, losses):
    names = [s.name for s in specs]
    return AlternativeResult(names.index(target), target, Policy((), "total"), val, 0.0, gains, losses, 0.0)


@pytest.mark.parametrize("x,shown", [(10.0, "10"), (0.8, "0.8"), (0.25, "0.2"), (1.04, "1"), (-0.01, "0"),
                                     (12.35, "12.3")])
def test_fmt(x, shown):
    assert fmt(x) == shown


def test_table1_lines(robot):
    mdp, vocab = robot
    val = valuation(mdp.qa_specs, 10.0, 0.8, {"non-intrusive": 5.0, "somewhat-intrusive": 2.0})
    lines = describe_valuation(val, mdp.qa_specs, vocab)
    assert "the expected number of collisions is 0.8" in lines
    assert "the expected travel time is 10 minutes" in lines
    assert ("the robot is expected to be non-intrusive at 5 locations and somewhat intrusive at 2 locations"
            in lines)


def test_single_location_is_singular(robot):
    mdp, vocab = robot
    val = valuation(mdp.qa_specs, 1.0, 0.0, {"non-intrusive": 1.0})
    assert "the robot is expected to be non-intrusive at 1 location" in describe_valuation(val, mdp.qa_specs, vocab)


def test_objectives(robot):
    mdp, vocab = robot
    lines = describe_objectives(mdp.qa_specs, vocab)
    assert "minimize the expected number of collisions" in lines
    assert "minimize the expected travel time" in lines


def test_missing_vocabulary(robot):
    mdp, vocab = robot
    del vocab[QA_COLLISION]
    with pytest.raises(MissingVocabulary):
        describe_objectives(mdp.qa_specs, vocab)


def test_contrastive_paragraph(robot):
    mdp, vocab = robot
    specs = mdp.qa_specs
    sol = valuation(specs, 15.0, 0.4, {"non-intrusive": 5.0})
    alt = valuation(specs, 10.0, 0.8, {"non-intrusive": 5.0})
    r = result(specs, QA_TIME, alt, {QA_TIME: 5.0}, {QA_COLLISION: 0.4})
    exp = render_contrastive(sol, [r], specs, vocab, lower_bounds=[10.0, 0.0, 0.0])
    para = exp.tradeoffs[0].paragraph
    assert "being 5 minutes shorter is not worth the expected number of collisions being 0.4 higher" in para
    assert para.startswith("I could reduce the expected travel time by 5 minutes, by carrying out alternative A1")
    assert exp.verdict(QA_TIME).kind == TRADED_OFF and exp.verdict(QA_TIME).alternative == 0
    assert exp.verdict(QA_INTRUSION).kind == BEST_POSSIBLE
    assert "My plan is already the least intrusive navigation route." in exp.text


def test_gain_on_best_possible_qa_not_reported(robot):
    mdp, vocab = robot
    specs = mdp.qa_specs
    sol = valuation(specs, 15.0, 0.4, {})
    alt = valuation(specs, 10.0, 0.4, {})
    r = result(specs, QA_TIME, alt, {QA_TIME: 5.0, QA_COLLISION: 1e-3}, {})
    exp = render_contrastive(sol, [r], specs, vocab, lower_bounds=[0.0, 0.4, 0.0])
    assert [d.qa for d in exp.tradeoffs[0].improved] == [QA_TIME]
    assert "However" not in exp.tradeoffs[0].paragraph


def test_structured_record_matches_text(robot):
    mdp, vocab = robot
    pol = solve_optimal(mdp)
    val = evaluate(mdp, pol)
    exp = explain(mdp, pol, val, [], [0.0, 0.0, 0.0], vocabulary=vocab)
    for line in exp.consequences:
        assert line in exp.text
    assert json.loads(json.dumps(exp.to_json()))["values"] == exp.values


def test_alternatives_ordered_by_qa_declaration(robot):
    mdp, vocab = robot
    specs = mdp.qa_specs
    sol = valuation(specs, 15.0, 0.4, {"somewhat-intrusive": 2.0})
    a_int = result(specs, QA_INTRUSION, valuation(specs, 20.0, 0.4, {}), {QA_INTRUSION: 2.0}, {QA_TIME: 5.0})
    a_time = result(specs, QA_TIME, valuation(specs, 10.0, 0.8, {"somewhat-intrusive": 2.0}),
                    {QA_TIME: 5.0}, {QA_COLLISION: 0.4})
    exp = render_contrastive(sol, [a_int, a_time], specs, vocab, lower_bounds=[0.0, 0.0, 0.0])
    order = [s.name for s in specs]
    assert [t.target for t in exp.tradeoffs] == sorted([QA_TIME, QA_INTRUSION], key=order.index)
    assert [t.label for t in exp.tradeoffs] == ["A1", "A2"]


def test_custom_templates(robot):
    mdp, vocab = robot
    tpl = load_templates()
    tpl["value"]["event_count"] = "{noun}: {value}"
    val = valuation(mdp.qa_specs, 1.0, 0.5, {})
    assert "collisions: 0.5" in describe_valuation(val, mdp.qa_specs, vocab, tpl)


def test_policy_listing_and_dot(robot):
    mdp, _ = robot
    pol = solve_optimal(mdp)
    lines = policy_listing(mdp, pol)
    assert lines and all(" -> " in line for line in lines)
    dot = policy_dot(mdp, pol)
    assert dot.startswith('digraph "policy"') and "doublecircle" in dot
