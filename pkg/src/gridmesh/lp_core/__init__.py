"""Mixed-integer linear modelling core: IR, PWL epigraphs, solvers, MPS."""

from .model import EQ, FEAS_TOL, GE, LE, Constraint, ModelError, ModelIR, Variable
from .mps import export_mps
from .pwl import (
    CENTERED,
    UNIFORM,
    add_pwl_quadratic,
    centered_points,
    pwl_envelope,
    tangent_cut,
    uniform_points,
)
from .qp import qp_available, solve_diag_qp
from .solvers import (
    BACKENDS,
    ENV_VAR,
    INFEASIBLE,
    LIMIT,
    OPTIMAL,
    UNBOUNDED,
    NodeBudgetExceeded,
    SolveResult,
    SolverError,
    backend_from_env,
    solve,
    solve_exact_mini,
)

__all__ = [
    "EQ", "GE", "LE", "FEAS_TOL", "Constraint", "ModelError", "ModelIR", "Variable",
    "export_mps", "CENTERED", "UNIFORM", "add_pwl_quadratic", "centered_points",
    "pwl_envelope", "tangent_cut", "uniform_points", "BACKENDS", "ENV_VAR", "INFEASIBLE",
    "LIMIT", "OPTIMAL", "UNBOUNDED", "NodeBudgetExceeded", "SolveResult", "SolverError",
    "backend_from_env", "solve", "solve_exact_mini", "qp_available", "solve_diag_qp",
]
