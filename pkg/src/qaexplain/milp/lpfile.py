"""CPLEX-style LP file export and a reader for the same dialect.

Layout written by :func:`export_lp` (sections always in this order, empty
sections omitted except the objective)::

    \\ Problem: <name>
    Minimize
     obj: <every variable, declaration order, zero coefficients kept>
    Subject To
     <name>: <terms> <sense> <rhs>
    Bounds
     <only bounds that differ from the LP default [0, +inf)>
    Binaries
     <binary variable names>
    End

Listing every variable in the objective pins the variable order, so a file
written here reads back into an identical model.
"""

from __future__ import annotations

import math
import re

from .model import MilpModel

_LINE_WIDTH = 255


def _num(v: float) -> str:
    if v == math.inf:
        return "+inf"
    if v == -math.inf:
        return "-inf"
    if v == 0:
        return "0"
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _terms(coeffs, model: MilpModel, keep_zero=False) -> list[str]:
    out = []
    for j, a in coeffs:
        if a == 0 and not keep_zero:
            continue
        sign = "-" if a < 0 or (a == 0 and math.copysign(1.0, a) < 0) else "+"
        out.append(f"{sign} {_num(abs(a))} {model.variables[j].name}")
    if out and out[0].startswith("+ "):
        out[0] = out[0][2:]
    return out


def _wrap(prefix: str, tokens: list[str]) -> list[str]:
    lines, cur = [], prefix
    for tok in tokens:
        if len(cur) + len(tok) + 1 > _LINE_WIDTH and cur.strip():
            lines.append(cur)
            cur = "   "
        cur += " " + tok
    lines.append(cur)
    return lines


def export_lp(model: MilpModel) -> str:
    model.validate()
    out = [f"\\ Problem: {model.name}", "Minimize"]
    obj = [(j, model.objective.get(j, 0.0)) for j in range(model.num_vars)]
    out += _wrap(" obj:", _terms(obj, model, keep_zero=True))
    if model.constraints:
        out.append("Subject To")
        for con in model.constraints:
            tokens = _terms(sorted(con.coeffs.items()), model) or [f"0 {model.variables[0].name}"]
            tokens += [con.sense, _num(con.rhs)]
            out += _wrap(f" {con.name}:", tokens)
    bounds = []
    for v in model.variables:
        if v.binary:
            continue
        if v.lo == 0.0 and v.hi == math.inf:
            continue
        if v.lo == -math.inf and v.hi == math.inf:
            bounds.append(f" {v.name} free")
        elif v.lo == v.hi:
            bounds.append(f" {v.name} = {_num(v.lo)}")
        elif v.hi == math.inf:
            bounds.append(f" {v.name} >= {_num(v.lo)}")
        else:
            bounds.append(f" {_num(v.lo)} <= {v.name} <= {_num(v.hi)}")
    if bounds:
        out.append("Bounds")
        out += bounds
    bins = [v.name for v in model.variables if v.binary]
    if bins:
        out.append("Binaries")
        out += _wrap("", bins)
    out.append("End")
    return "\n".join(out) + "\n"


class LpParseError(ValueError):
    pass


_SECTION = re.compile(
    r"^\s*(minimize|minimise|minimum|min|maximize|maximise|maximum|max|subject\s+to|such\s+that|s\.t\.|st|"
    r"bounds?|binary|binaries|bin|generals?|integers?|end)\s*$",
    re.IGNORECASE,
)
_TOKEN = re.compile(r"<=|>=|=<|=>|=|[+-]|[A-Za-z_][A-Za-z0-9_.\[\]()#]*|"
                    r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|inf(?:inity)?")


def _tokenize(text: str) -> list[str]:
    toks = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m:
            raise LpParseError(f"unexpected character {text[pos]!r} in {text!r}")
        toks.append(m.group(0))
        pos = m.end()
    return toks


def _is_number(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return tok.lower() in ("inf", "infinity")


def _parse_number(tok: str) -> float:
    return math.inf if tok.lower() in ("inf", "infinity") else float(tok)


def _parse_linear(tokens: list[str]) -> list[tuple[str, float]]:
    """Parse ``[+|-] [coef] name ...`` into (name, coef) pairs."""
    terms, i, sign, coef = [], 0, 1.0, None
    while i < len(tokens):
        t = tokens[i]
        if t in "+-":
            sign = -sign if t == "-" else sign
        elif _is_number(t):
            coef = _parse_number(t)
        else:
            terms.append((t, sign * (1.0 if coef is None else coef)))
            sign, coef = 1.0, None
        i += 1
    if coef is not None:
        raise LpParseError("dangling coefficient")
    return terms


def read_lp(text: str) -> MilpModel:
    """Parse LP text (the dialect :func:`export_lp` writes) into a model."""
    sections: dict[str, list[str]] = {}
    order: list[str] = []
    current = None
    name = "model"
    for raw in text.splitlines():
        if raw.lstrip().startswith("\\"):
            m = re.match(r"\\\s*Problem:\s*(\S+)", raw.strip())
            if m:
                name = m.group(1)
            continue
        line = raw.split("\\", 1)[0]
        if not line.strip():
            continue
        m = _SECTION.match(line)
        if m:
            key = m.group(1).lower().replace(" ", "")
            if key.startswith("max"):
                raise LpParseError("only minimization models are supported")
            key = {"minimise": "min", "minimize": "min", "minimum": "min", "subjectto": "st",
                   "suchthat": "st", "s.t.": "st", "bound": "bounds", "binary": "bin",
                   "binaries": "bin", "general": "gen", "generals": "gen", "integer": "gen",
                   "integers": "gen"}.get(key, key)
            if key == "end":
                break
            current = key
            sections.setdefault(current, [])
            order.append(current)
            continue
        if current is None:
            raise LpParseError(f"content before any section: {line!r}")
        sections[current].append(line)

    model = MilpModel(name)
    known: dict[str, int] = {}

    def var(vname: str) -> int:
        if vname not in known:
            known[vname] = model.add_var(vname)
        return known[vname]

    obj_text = " ".join(sections.get("min", []))
    obj_text = re.sub(r"^\s*[A-Za-z_][A-Za-z0-9_.]*\s*:", "", obj_text)
    objective: dict[int, float] = {}
    for vname, a in _parse_linear(_tokenize(obj_text)):
        j = var(vname)
        objective[j] = objective.get(j, 0.0) + a

    # constraints may wrap over lines: a new one starts with "name:"
    rows: list[str] = []
    for line in sections.get("st", []):
        if re.match(r"^\s*[A-Za-z_][A-Za-z0-9_.\[\]()#]*\s*:", line) or not rows:
            rows.append(line)
        else:
            rows[-1] += " " + line
    for k, row in enumerate(rows):
        m = re.match(r"^\s*([A-Za-z_][A-Za-z0-9_.\[\]()#]*)\s*:(.*)$", row)
        cname, body = (m.group(1), m.group(2)) if m else (f"c{k}", row)
        toks = _tokenize(body)
        sense_at = [i for i, t in enumerate(toks) if t in ("<=", ">=", "=<", "=>", "=")]
        if len(sense_at) != 1:
            raise LpParseError(f"constraint {cname} needs exactly one sense")
        s = sense_at[0]
        sense = {"=<": "<=", "=>": ">="}.get(toks[s], toks[s])
        rhs_toks = toks[s + 1:]
        rhs_sign = 1.0
        if rhs_toks and rhs_toks[0] in "+-":
            rhs_sign = -1.0 if rhs_toks[0] == "-" else 1.0
            rhs_toks = rhs_toks[1:]
        if len(rhs_toks) != 1 or not _is_number(rhs_toks[0]):
            raise LpParseError(f"constraint {cname} has a malformed right-hand side")
        coeffs: dict[int, float] = {}
        for vname, a in _parse_linear(toks[:s]):
            j = var(vname)
            coeffs[j] = coeffs.get(j, 0.0) + a
        model.constraints.append(_constraint(cname, coeffs, sense, rhs_sign * _parse_number(rhs_toks[0])))

    for line in sections.get("bounds", []):
        toks = _tokenize(line)
        _apply_bound(model, var, toks)

    for line in sections.get("bin", []):
        for vname in line.split():
            v = model.variables[var(vname)]
            v.binary = True
            v.lo, v.hi = 0.0, 1.0
    if sections.get("gen"):
        raise LpParseError("general integer variables are not supported")
    model.objective = {j: a for j, a in objective.items() if a != 0.0}
    model.validate()
    return model


def _constraint(name, coeffs, sense, rhs):
    from .model import Constraint
    return Constraint(name, {j: a for j, a in coeffs.items() if a != 0.0}, sense, rhs)


def _signed(toks: list[str], i: int) -> tuple[float, int]:
    sign = 1.0
    if toks[i] in "+-":
        sign = -1.0 if toks[i] == "-" else 1.0
        i += 1
    return sign * _parse_number(toks[i]), i + 1


def _apply_bound(model: MilpModel, var, toks: list[str]) -> None:
    if len(toks) == 2 and toks[1].lower() == "free":
        v = model.variables[var(toks[0])]
        v.lo, v.hi = -math.inf, math.inf
        return
    if toks[0] in "+-" or _is_number(toks[0]):
        lo, i = _signed(toks, 0)
        op1 = toks[i]
        v = model.variables[var(toks[i + 1])]
        if op1 in ("<=", "=<"):
            v.lo = lo
        elif op1 in (">=", "=>"):
            v.hi = lo
        else:
            v.lo = v.hi = lo
        i += 2
        if i < len(toks):
            val, _ = _signed(toks, i + 1)
            if toks[i] in ("<=", "=<"):
                v.hi = val
            else:
                v.lo = val
        return
    v = model.variables[var(toks[0])]
    val, _ = _signed(toks, 2)
    if toks[1] in ("<=", "=<"):
        v.hi = val
    elif toks[1] in (">=", "=>"):
        v.lo = val
    else:
        v.lo = v.hi = val
