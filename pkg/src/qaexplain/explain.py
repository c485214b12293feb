"""Quality-attribute based contrastive explanations of a chosen policy.

The structured :class:`Explanation` carries every number shown in the text
as an already formatted string, so the rendered sentences and the record
cannot disagree. Sentence shapes live in ``data/templates.json``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Any, Callable, Mapping, Sequence

from .alternatives import BOUND_TOL, AlternativeResult
from .mdp import EVENT_COUNT, NONSTANDARD, STANDARD, ExplicitMdp, QaSpec
from .valuation import Policy, PolicyValuation, reachable_states

BEST_POSSIBLE = "BestPossible"
TRADED_OFF = "TradedOff"
PRECISION = 1


class MissingVocabulary(KeyError):
    pass


@lru_cache(maxsize=None)
def _default_templates() -> str:
    return resources.files("qaexplain").joinpath("data/templates.json").read_text(encoding="utf-8")


def load_templates(path: str | None = None) -> dict[str, Any]:
    if path is None:
        return json.loads(_default_templates())
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def fmt(x: float, precision: int = PRECISION) -> str:
    """Round to ``precision`` decimals and drop a trailing ``.0``."""
    s = f"{round(x, precision):.{precision}f}"
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _join(items: Sequence[str], tpl: Mapping[str, Any]) -> str:
    items = list(items)
    if len(items) <= 1:
        return "".join(items)
    return tpl["list_join"].join(items[:-1]) + tpl["list_last"] + items[-1]


def _vocab(spec: QaSpec, vocabulary: Mapping[str, Mapping[str, Any]]) -> Mapping[str, Any]:
    entry = vocabulary.get(spec.name)
    if not entry or "noun" not in entry:
        raise MissingVocabulary(f"no vocabulary noun for QA {spec.name!r}")
    return entry


def _unit(entry: Mapping[str, Any], spec: QaSpec) -> str:
    unit = entry.get("unit", spec.unit)
    return f" {unit}" if unit else ""


def describe_objectives(qa_specs: Sequence[QaSpec], vocabulary: Mapping[str, Mapping[str, Any]],
                        templates: Mapping[str, Any] | None = None) -> list[str]:
    tpl = templates or load_templates()
    return [tpl["objective"][s.kind].format(noun=_vocab(s, vocabulary)["noun"]) for s in qa_specs]


def describe_valuation(valuation: PolicyValuation, qa_specs: Sequence[QaSpec],
                       vocabulary: Mapping[str, Mapping[str, Any]],
                       templates: Mapping[str, Any] | None = None, precision: int = PRECISION) -> list[str]:
    """One line per QA: value with unit, expected count, or qualitative levels."""
    tpl = templates or load_templates()
    lines = []
    for spec, value in zip(qa_specs, valuation.values):
        entry = _vocab(spec, vocabulary)
        noun = entry["noun"]
        if spec.kind == NONSTANDARD:
            labels = entry.get("labels", {})
            parts = []
            for ev in spec.events:
                count = valuation.event_counts.get(ev.name, 0.0)
                shown = fmt(count, precision)
                if shown == "0":
                    continue
                plural = entry.get("count_noun", "states")
                noun_n = entry.get("count_noun_one", plural) if shown == "1" else plural
                parts.append(tpl["level"].format(label=labels.get(ev.name, ev.label), count=shown,
                                                 count_noun=noun_n))
            subject = entry.get("subject", "the agent")
            if parts:
                lines.append(tpl["value"][NONSTANDARD].format(subject=subject,
                                                              levels=tpl["level_join"].join(parts)))
            else:
                lines.append(tpl["no_levels"].format(subject=subject, noun=noun))
        else:
            lines.append(tpl["value"][spec.kind].format(noun=noun, value=fmt(value, precision),
                                                        unit=_unit(entry, spec)))
    return lines


@dataclass
class Verdict:
    qa: str
    kind: str
    alternative: int | None = None  # index into Explanation.tradeoffs


@dataclass
class QaDelta:
    qa: str
    amount: float
    shown: str


@dataclass
class TradeoffRecord:
    label: str
    target: str
    improved: list[QaDelta]
    worsened: list[QaDelta]
    policy_phrase: str
    paragraph: str


@dataclass
class Explanation:
    objectives: list[str]
    consequences: list[str]
    verdicts: list[Verdict]
    tradeoffs: list[TradeoffRecord]
    best_possible: list[str]
    text: str = ""
    values: dict[str, str] = field(default_factory=dict)

    def verdict(self, qa: str) -> Verdict:
        return next(v for v in self.verdicts if v.qa == qa)

    def to_json(self) -> dict:
        return asdict(self)


def _delta_phrase(kind_tpl: Mapping[str, str], spec: QaSpec, entry: Mapping[str, Any], shown: str,
                  better: str = "") -> str:
    return kind_tpl[spec.kind].format(noun=entry["noun"], amount=shown, unit=_unit(entry, spec),
                                      better=better)


def render_contrastive(solution: PolicyValuation, alternatives: Sequence[AlternativeResult],
                       qa_specs: Sequence[QaSpec], vocabulary: Mapping[str, Mapping[str, Any]],
                       lower_bounds: Sequence[float],
                       describe_policy: Callable[[AlternativeResult, str], str] | None = None,
                       templates: Mapping[str, Any] | None = None, precision: int = PRECISION) -> Explanation:
    """Objectives, consequences, best-possible sentences and one paragraph per alternative.

    ``describe_policy(result, label)`` fills the policy slot; by default the
    alternative is referred to by its label (``A1``, ``A2``...).
    """
    tpl = templates or load_templates()
    specs = {s.name: s for s in qa_specs}
    objectives = describe_objectives(qa_specs, vocabulary, tpl)
    consequences = describe_valuation(solution, qa_specs, vocabulary, tpl, precision)

    best = set()
    for spec, d, lb in zip(qa_specs, solution.values, lower_bounds):
        if d - lb <= BOUND_TOL:
            best.add(spec.name)

    order = {s.name: i for i, s in enumerate(qa_specs)}
    alts = sorted(alternatives, key=lambda r: order[r.target_name])
    tradeoffs: list[TradeoffRecord] = []
    for k, alt in enumerate(alts, start=1):
        label = f"A{k}"
        improved = [QaDelta(n, alt.gains[n], fmt(alt.gains[n], precision))
                    for n in sorted(alt.gains, key=order.get) if n not in best]
        worsened = [QaDelta(n, alt.losses[n], fmt(alt.losses[n], precision))
                    for n in sorted(alt.losses, key=order.get)]
        phrase = describe_policy(alt, label) if describe_policy else tpl["policy"].format(label=label)
        gain_txt = _join([_delta_phrase(tpl["gain"], specs[g.qa], vocabulary[g.qa], g.shown) for g in improved], tpl)
        if worsened:
            loss_txt = _join([_delta_phrase(tpl["loss"], specs[w.qa], vocabulary[w.qa], w.shown)
                              for w in worsened], tpl)
            gain_r = _join([_delta_phrase(tpl["gain_reason"], specs[g.qa], vocabulary[g.qa], g.shown,
                                          vocabulary[g.qa].get("better", "lower")) for g in improved], tpl)
            loss_r = _join([_delta_phrase(tpl["loss_reason"], specs[w.qa], vocabulary[w.qa], w.shown)
                            for w in worsened], tpl)
            para = tpl["contrastive"].format(gains=gain_txt, policy=phrase, losses=loss_txt,
                                             gain_reasons=gain_r, loss_reasons=loss_r)
        else:
            para = tpl["contrastive_free"].format(gains=gain_txt, policy=phrase)
        tradeoffs.append(TradeoffRecord(label, alt.target_name, improved, worsened, phrase, para))

    verdicts, best_lines = [], []
    for spec in qa_specs:
        if spec.name in best:
            verdicts.append(Verdict(spec.name, BEST_POSSIBLE))
            entry = _vocab(spec, vocabulary)
            if "best" in entry:
                best_lines.append(tpl["best"].format(best=entry["best"]))
            else:
                best_lines.append(tpl["best_default"].format(noun=entry["noun"]))
        else:
            ref = next((i for i, t in enumerate(tradeoffs) if t.target == spec.name), None)
            verdicts.append(Verdict(spec.name, TRADED_OFF, ref))

    values = {s.name: fmt(v, precision) for s, v in zip(qa_specs, solution.values)}
    exp = Explanation(objectives, consequences, verdicts, tradeoffs, best_lines, values=values)
    exp.text = render_text(exp, tpl)
    return exp


def render_text(exp: Explanation, templates: Mapping[str, Any] | None = None) -> str:
    tpl = templates or load_templates()
    b = tpl["bullet"]
    out = [tpl["objectives_heading"]]
    out += [b + line for line in exp.objectives]
    out += ["", tpl["consequences_heading"]]
    out += [b + line for line in exp.consequences]
    if exp.best_possible:
        out += ["", " ".join(exp.best_possible)]
    for t in exp.tradeoffs:
        out += ["", t.paragraph]
    return "\n".join(out) + "\n"


def explain(mdp: ExplicitMdp, solution: Policy, solution_valuation: PolicyValuation,
            alternatives: Sequence[AlternativeResult], lower_bounds: Sequence[float],
            vocabulary: Mapping[str, Mapping[str, Any]] | None = None, **kw) -> Explanation:
    return render_contrastive(solution_valuation, alternatives, mdp.qa_specs,
                              vocabulary if vocabulary is not None else mdp.vocabulary, lower_bounds, **kw)


def policy_listing(mdp: ExplicitMdp, policy: Policy) -> list[str]:
    """``state -> action`` lines for the states the policy can reach."""
    reach = reachable_states(mdp, policy)
    return [f"{mdp.state_name(s)} -> {mdp.pair_labels[p]}"
            for s, p in enumerate(policy.choice) if p >= 0 and reach[s]]


def policy_dot(mdp: ExplicitMdp, policy: Policy, name: str = "policy") -> str:
    """Graphviz digraph of the policy's reachable chain."""
    reach = reachable_states(mdp, policy)
    T = mdp.transitions.tocsr()
    lines = [f'digraph "{name}" {{', "  rankdir=LR;"]
    for s in range(mdp.num_states):
        if reach[s]:
            shape = "doublecircle" if mdp.criterion == "total" and mdp.goal[s] else "ellipse"
            lines.append(f'  n{s} [label="{mdp.state_name(s)}", shape={shape}];')
    for s, p in enumerate(policy.choice):
        if p < 0 or not reach[s]:
            continue
        row = T.getrow(p)
        for t, pr in sorted(zip(row.indices, row.data)):
            lab = mdp.pair_labels[p].replace('"', "'")
            lines.append(f'  n{s} -> n{t} [label="{lab} ({fmt(pr, 3)})"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


__all__ = ["MissingVocabulary", "Explanation", "Verdict", "TradeoffRecord", "QaDelta", "BEST_POSSIBLE",
           "TRADED_OFF", "describe_objectives", "describe_valuation", "render_contrastive", "render_text",
           "explain", "policy_listing", "policy_dot", "load_templates", "fmt", "EVENT_COUNT", "STANDARD"]
