"""Geometric programming: expression algebra, log transform and solver."""
from .algebra import (Constraint, GpError, GpModel, Monomial, Posynomial, VarSpec, Variable,
                      build_model, dump_model, eq, geq, leq, monomial_arith)
from .solver import (GpSolution, KKTResiduals, SolverError, SolverOptions, kkt_residuals,
                     sensitivities, solve, write_trace_csv)
from .transform import ConvexProgram, log_transform

__all__ = [
    "Constraint", "GpError", "GpModel", "Monomial", "Posynomial", "VarSpec", "Variable",
    "build_model", "dump_model", "eq", "geq", "leq", "monomial_arith",
    "GpSolution", "KKTResiduals", "SolverError", "SolverOptions", "kkt_residuals",
    "sensitivities", "solve", "write_trace_csv", "ConvexProgram", "log_transform", "solve_model",
]


def solve_model(model: GpModel, options: SolverOptions | None = None, x0=None) -> GpSolution:
    """Transform and solve a GP model in one call."""
    return solve(log_transform(model), options, x0)
