"""Mixed-integer linear program container."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import numpy as np

SENSES = ("<=", "=", ">=")
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\[\]()#]*$")


class ModelError(ValueError):
    """Raised when a model violates its structural invariants."""


@dataclass
class Variable:
    name: str
    lo: float = 0.0
    hi: float = math.inf
    binary: bool = False
    tag: Any = None


@dataclass
class Constraint:
    name: str
    coeffs: dict[int, float]
    sense: str
    rhs: float


@dataclass
class MilpModel:
    """Minimization MILP: linear objective, linear rows, bounded variables.

    Variables are referenced by integer index everywhere; names exist for
    export and debugging. ``tag`` on a variable links it back to whatever
    the caller built it from, e.g. a ``("x", s, a)`` triple.
    """

    name: str = "model"
    variables: list[Variable] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    _by_name: dict[str, int] = field(default_factory=dict, repr=False)

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    @property
    def binary_indices(self) -> list[int]:
        return [j for j, v in enumerate(self.variables) if v.binary]

    def add_var(self, name: str, lo: float = 0.0, hi: float = math.inf,
                binary: bool = False, tag: Any = None) -> int:
        if not _NAME_RE.match(name):
            raise ModelError(f"illegal variable name {name!r}")
        if name in self._by_name:
            raise ModelError(f"duplicate variable {name!r}")
        if binary:
            lo, hi = max(0.0, float(lo)), min(1.0, float(hi))
        self.variables.append(Variable(name, float(lo), float(hi), binary, tag))
        self._by_name[name] = len(self.variables) - 1
        return len(self.variables) - 1

    def var_index(self, name: str) -> int:
        return self._by_name[name]

    def add_constraint(self, coeffs: Mapping[int, float], sense: str, rhs: float,
                       name: str | None = None) -> int:
        if sense not in SENSES:
            raise ModelError(f"unknown sense {sense!r}")
        name = name or f"c{len(self.constraints)}"
        if not _NAME_RE.match(name):
            raise ModelError(f"illegal constraint name {name!r}")
        row = {int(j): float(a) for j, a in coeffs.items() if a != 0.0}
        for j in row:
            if not 0 <= j < self.num_vars:
                raise ModelError(f"constraint {name} references unknown variable {j}")
        self.constraints.append(Constraint(name, row, sense, float(rhs)))
        return len(self.constraints) - 1

    def set_objective(self, coeffs: Mapping[int, float]) -> None:
        self.objective = {int(j): float(a) for j, a in coeffs.items() if a != 0.0}

    def add_objective_terms(self, coeffs: Mapping[int, float]) -> None:
        for j, a in coeffs.items():
            self.objective[int(j)] = self.objective.get(int(j), 0.0) + float(a)

    def validate(self) -> None:
        for v in self.variables:
            if v.lo > v.hi:
                raise ModelError(f"variable {v.name} has lo > hi")
            if v.binary and not (v.lo >= 0.0 and v.hi <= 1.0):
                raise ModelError(f"binary {v.name} must lie within [0, 1]")
            if math.isnan(v.lo) or math.isnan(v.hi):
                raise ModelError(f"variable {v.name} has NaN bound")
        for c in self.constraints:
            if any(not 0 <= j < self.num_vars for j in c.coeffs):
                raise ModelError(f"constraint {c.name} references unknown variable")
            if not math.isfinite(c.rhs):
                raise ModelError(f"constraint {c.name} has non-finite rhs")
        for j in self.objective:
            if not 0 <= j < self.num_vars:
                raise ModelError("objective references unknown variable")

    def copy(self) -> "MilpModel":
        m = MilpModel(self.name)
        for v in self.variables:
            m.add_var(v.name, v.lo, v.hi, v.binary, v.tag)
        for c in self.constraints:
            m.constraints.append(Constraint(c.name, dict(c.coeffs), c.sense, c.rhs))
        m.objective = dict(self.objective)
        return m

    def constraint_index(self, name: str) -> int:
        for i, c in enumerate(self.constraints):
            if c.name == name:
                return i
        raise KeyError(name)

    def dense(self) -> tuple[np.ndarray, np.ndarray, list[str], np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(c, A, senses, b, lo, hi)`` as dense arrays."""
        n, m = self.num_vars, self.num_constraints
        c = np.zeros(n)
        for j, a in self.objective.items():
            c[j] = a
        A = np.zeros((m, n))
        b = np.zeros(m)
        senses = []
        for i, con in enumerate(self.constraints):
            for j, a in con.coeffs.items():
                A[i, j] = a
            b[i] = con.rhs
            senses.append(con.sense)
        lo = np.array([v.lo for v in self.variables], dtype=float)
        hi = np.array([v.hi for v in self.variables], dtype=float)
        return c, A, senses, b, lo, hi

    def objective_value(self, x: Iterable[float]) -> float:
        x = np.asarray(list(x), dtype=float)
        return float(sum(a * x[j] for j, a in self.objective.items()))

    def max_violation(self, x: Iterable[float]) -> float:
        """Largest bound or row violation of assignment ``x`` (0 if feasible)."""
        x = np.asarray(list(x), dtype=float)
        worst = 0.0
        for j, v in enumerate(self.variables):
            worst = max(worst, v.lo - x[j], x[j] - v.hi)
        for con in self.constraints:
            lhs = sum(a * x[j] for j, a in con.coeffs.items())
            if con.sense == "<=":
                worst = max(worst, lhs - con.rhs)
            elif con.sense == ">=":
                worst = max(worst, con.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - con.rhs))
        return worst

    def same_program(self, other: "MilpModel") -> bool:
        """Structural equality, ignoring names of the model and variable tags."""
        if self.num_vars != other.num_vars or self.num_constraints != other.num_constraints:
            return False
        for a, b in zip(self.variables, other.variables):
            if (a.name, a.lo, a.hi, a.binary) != (b.name, b.lo, b.hi, b.binary):
                return False
        for a, b in zip(self.constraints, other.constraints):
            if (a.name, a.coeffs, a.sense, a.rhs) != (b.name, b.coeffs, b.sense, b.rhs):
                return False
        return self.objective == other.objective
