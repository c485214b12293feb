"""MILP modelling, branch-and-bound solving and LP-file export."""

from .lpfile import LpParseError, export_lp, read_lp
from .model import Constraint, MilpModel, ModelError, Variable
from .simplex import LpResult, solve_lp
from .solver import (INFEASIBLE, ITERATION_LIMIT, OPTIMAL, UNBOUNDED, MilpLimits,
                     MilpSolution, SolveStats, solve)

__all__ = [
    "Constraint", "MilpModel", "ModelError", "Variable",
    "LpResult", "solve_lp",
    "MilpLimits", "MilpSolution", "SolveStats", "solve",
    "OPTIMAL", "INFEASIBLE", "UNBOUNDED", "ITERATION_LIMIT",
    "export_lp", "read_lp", "LpParseError",
]
