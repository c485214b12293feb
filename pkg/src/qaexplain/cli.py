"""Command-line entry point.

Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 scenario
label mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import __version__, milp
from .alternatives import (AlternativeError, AlternativeQuery, PenaltySpec, build_average_cost_milp,
                           build_total_cost_milp, default_penalty, generate_alternatives)
from .explain import MissingVocabulary, explain, policy_dot, policy_listing
from .mdp import (AVERAGE_COST, TOTAL_COST, Criterion, ExplainableProblem, ExplicitMdp, ProblemError,
                  compile, problem_from_dict)
from .valuation import EvaluationError, evaluate, per_qa_lower_bound, solve_optimal

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_MISMATCH = 0, 2, 3, 4

log = logging.getLogger("qaexplain")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    input: Path | None = None
    out: Path = Path("out")
    criterion: str | None = None
    deltas: dict[str, float] = field(default_factory=dict)
    penalty: str = "quadratic"
    kprime_ratio: float = 0.01
    seed: int = 0
    count: int = 48
    profiles: int | None = None
    easy: int = 0
    topology: str = "grid"
    export_lp: bool = False
    dot: bool = False
    qa: str | None = None
    verbosity: int = 0

    def check(self) -> None:
        if self.input is not None and not self.input.exists():
            raise CliError(EXIT_INVALID, f"input file {self.input} does not exist")
        if not 0 < self.kprime_ratio < 1:
            raise CliError(EXIT_INVALID, "--kprime-ratio must lie in (0, 1)")
        if any(not d > 0 for d in self.deltas.values()):
            raise CliError(EXIT_INVALID, "--delta values must be positive")
        if self.count < 2:
            raise CliError(EXIT_INVALID, "--count must be at least 2")
        if self.profiles is not None and self.profiles < 1:
            raise CliError(EXIT_INVALID, "--profiles must be positive")


def _dump(path: Path, obj: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _read_json(path: Path) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_INVALID, f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")
    except OSError as exc:
        raise CliError(EXIT_INVALID, f"{path}: {exc.strerror}")


def _problem(cfg: RunConfig) -> ExplainableProblem:
    if cfg.input is None:
        raise CliError(EXIT_INVALID, "--input is required")
    data = _read_json(cfg.input)
    try:
        problem = problem_from_dict(data)
    except (ProblemError, TypeError, ValueError) as exc:
        raise CliError(EXIT_INVALID, f"{type(exc).__name__}: {exc}")
    if cfg.criterion and cfg.criterion != problem.criterion.kind:
        crit = problem.criterion
        if cfg.criterion == TOTAL_COST:
            raise CliError(EXIT_INVALID, "cannot switch to total cost: the problem declares no goal set")
        problem.criterion = Criterion(AVERAGE_COST, crit.initial, [])
    return problem


def _compile(cfg: RunConfig) -> ExplicitMdp:
    problem = _problem(cfg)
    try:
        return compile(problem)
    except ProblemError as exc:
        raise CliError(EXIT_INVALID, f"{type(exc).__name__}: {exc}")


def _plan(mdp: ExplicitMdp):
    try:
        pol = solve_optimal(mdp)
        return pol, evaluate(mdp, pol)
    except EvaluationError as exc:
        raise CliError(EXIT_SOLVER, f"{type(exc).__name__}: {exc}")


def _route_describer(mdp: ExplicitMdp):
    if {"loc", "speed"} <= set(mdp.var_names) and any(lab.startswith("MoveTo") for lab in mdp.pair_labels):
        from .robotnav import policy_route
        return lambda r, label: policy_route(mdp, r.policy).describe()
    return None


def _delta_indices(mdp: ExplicitMdp, deltas: dict[str, float]) -> dict[int, float]:
    out = {}
    for name, v in deltas.items():
        try:
            out[mdp.qa_index(name)] = v
        except KeyError:
            raise CliError(EXIT_INVALID, f"--delta names unknown QA {name!r}") from None
    return out


def cmd_plan(cfg: RunConfig) -> int:
    mdp = _compile(cfg)
    pol, val = _plan(mdp)
    _dump(cfg.out / "policy.json", pol.to_json(mdp))
    _dump(cfg.out / "valuation.json", val.to_json())
    print(f"wrote {cfg.out / 'policy.json'} and {cfg.out / 'valuation.json'}")
    return EXIT_OK


def cmd_explain(cfg: RunConfig) -> int:
    mdp = _compile(cfg)
    pol, val = _plan(mdp)
    penalty = None if cfg.penalty == "hard" else cfg.penalty
    try:
        alts = generate_alternatives(mdp, None, pol, _delta_indices(mdp, cfg.deltas), cfg.kprime_ratio, penalty)
    except EvaluationError as exc:
        raise CliError(EXIT_SOLVER, f"{type(exc).__name__}: {exc}")
    for qa, msg in alts.failures.items():
        print(f"warning: no alternative for {qa}: {msg}", file=sys.stderr)
    try:
        exp = explain(mdp, pol, val, alts.results, alts.lower_bounds, describe_policy=_route_describer(mdp))
    except MissingVocabulary as exc:
        raise CliError(EXIT_INVALID, f"MissingVocabulary: {exc.args[0]}")
    out = cfg.out
    _dump(out / "policy.json", pol.to_json(mdp))
    _dump(out / "valuation.json", val.to_json())
    _write(out / "explanation.txt", exp.text)
    _dump(out / "explanation.json", {**exp.to_json(), "lower_bounds": dict(zip(val.qa_names, alts.lower_bounds)),
                                     "skipped": alts.skipped, "failures": alts.failures})
    for rec, alt in zip(exp.tradeoffs, sorted(alts.results, key=lambda r: r.target)):
        _dump(out / "alternatives" / f"{rec.label}.json", {**alt.to_json(mdp), "label": rec.label,
                                                           "listing": policy_listing(mdp, alt.policy)})
        if cfg.dot:
            _write(out / "dot" / f"{rec.label}.dot", policy_dot(mdp, alt.policy, rec.label))
    if cfg.export_lp:
        for qa, model in alts.models.items():
            _write(out / "lp" / f"{qa}.lp", milp.export_lp(model))
    if cfg.dot:
        _write(out / "dot" / "solution.dot", policy_dot(mdp, pol, "solution"))
    sys.stdout.write(exp.text)
    return EXIT_OK


def cmd_export_lp(cfg: RunConfig) -> int:
    mdp = _compile(cfg)
    query = None
    if cfg.qa is not None:
        pol, val = _plan(mdp)
        i = _delta_indices(mdp, {cfg.qa: 1.0}).popitem()[0]
        D = val.values[i]
        delta = cfg.deltas.get(cfg.qa) or max(0.1 * (D - per_qa_lower_bound(mdp, i)), 1e-6)
        pen: PenaltySpec | None = None
        if cfg.penalty != "hard":
            pen = default_penalty(mdp.profile, i, delta, cfg.penalty, val.scalarized_cost)
        query = AlternativeQuery(i, D, delta, cfg.kprime_ratio * mdp.profile.weights[i], pen)
    build = build_total_cost_milp if mdp.criterion == TOTAL_COST else build_average_cost_milp
    text = milp.export_lp(build(mdp, None, query).model)
    target = cfg.out if cfg.out.suffix == ".lp" else cfg.out / f"{cfg.qa or 'planner'}.lp"
    _write(target, text)
    print(f"wrote {target}")
    return EXIT_OK


def cmd_scenarios(cfg: RunConfig) -> int:
    from .robotnav import SamplingExhausted, generate_scenarios, scenarios_to_json
    try:
        items = generate_scenarios(cfg.seed, cfg.count, cfg.topology, cfg.profiles, cfg.easy)
    except SamplingExhausted as exc:
        raise CliError(EXIT_SOLVER, f"SamplingExhausted: {exc}")
    except (AlternativeError, EvaluationError) as exc:
        raise CliError(EXIT_SOLVER, f"{type(exc).__name__}: {exc}")
    target = cfg.out if cfg.out.suffix == ".json" else cfg.out / "scenarios.json"
    _dump(target, scenarios_to_json(items, cfg.seed, cfg.topology))
    print(f"wrote {len(items)} scenarios to {target}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    from .robotnav import Scenario, verify_scenario
    if cfg.input is None:
        raise CliError(EXIT_INVALID, "--input is required")
    data = _read_json(cfg.input)
    try:
        items = [Scenario.from_json(d) for d in data["items"]]
    except (KeyError, TypeError, ValueError, ProblemError) as exc:
        raise CliError(EXIT_INVALID, f"malformed scenario bundle: {exc}")
    bad = 0
    for sc in items:
        got = verify_scenario(sc)
        if got != sc.label:
            bad += 1
            print(f"{sc.id}: bundle says {sc.label}, recomputed {got}", file=sys.stderr)
    print(f"verified {len(items) - bad}/{len(items)} labels")
    return EXIT_MISMATCH if bad else EXIT_OK


COMMANDS = {"plan": cmd_plan, "explain": cmd_explain, "export-lp": cmd_export_lp,
            "scenarios": cmd_scenarios, "verify": cmd_verify}


def _parse_delta(text: str) -> tuple[str, float]:
    name, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected <qa>=<value>, got {text!r}")
    try:
        return name, float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qaexplain", description="Plan, find alternatives and explain tradeoffs.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", type=Path)
    common.add_argument("--out", type=Path)
    common.add_argument("--config", type=Path, help="JSON file whose keys override flag defaults")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name in ("plan", "explain", "export-lp"):
            sp.add_argument("--criterion", choices=[TOTAL_COST, AVERAGE_COST])
        if name in ("explain", "export-lp"):
            sp.add_argument("--delta", type=_parse_delta, action="append", default=None, metavar="QA=VALUE")
            sp.add_argument("--penalty", choices=["linear", "quadratic", "hard"])
            sp.add_argument("--kprime-ratio", type=float)
        if name == "explain":
            sp.add_argument("--export-lp", action="store_true", default=None)
            sp.add_argument("--dot", action="store_true", default=None)
        if name == "export-lp":
            sp.add_argument("--qa", help="target QA (omit for the planner's own program)")
        if name == "scenarios":
            sp.add_argument("--seed", type=int)
            sp.add_argument("--count", type=int)
            sp.add_argument("--profiles", type=int)
            sp.add_argument("--easy", type=int)
            sp.add_argument("--topology", choices=["grid", "line"])
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if ns.config is not None:
        data = _read_json(ns.config)
        if not isinstance(data, dict):
            raise CliError(EXIT_INVALID, "config file must hold a JSON object")
        for key, value in data.items():
            attr = key.replace("-", "_")
            if attr == "delta":
                attr = "deltas"
            if not hasattr(cfg, attr):
                raise CliError(EXIT_INVALID, f"unknown config key {key!r}")
            setattr(cfg, attr, value)
    for attr in ("input", "out", "criterion", "penalty", "kprime_ratio", "seed", "count", "profiles", "easy",
                 "topology", "export_lp", "dot", "qa"):
        v = getattr(ns, attr, None)
        if v is not None:
            setattr(cfg, attr, v)
    if getattr(ns, "delta", None):
        cfg.deltas = dict(cfg.deltas) | dict(ns.delta)
    for attr in ("input", "out"):
        if getattr(cfg, attr) is not None and not isinstance(getattr(cfg, attr), Path):
            setattr(cfg, attr, Path(getattr(cfg, attr)))
    cfg.deltas = {k: float(v) for k, v in cfg.deltas.items()}
    cfg.verbosity = ns.verbose
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = config_from_args(ns)
        cfg.check()
        logging.basicConfig(level=logging.WARNING - 10 * min(cfg.verbosity, 2), format="%(levelname)s %(message)s")
        return COMMANDS[ns.command](cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
