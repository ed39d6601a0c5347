"""Continuous QP with a diagonal Hessian, solved by HiGHS through highspy.

Used to polish a mixed-integer solution: integers are frozen at their values
and the continuous part is re-optimized against an exact quadratic term.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .model import ModelIR
from .solvers import INFEASIBLE, LIMIT, OPTIMAL, SolveResult, SolverError

try:  # optional at import time so the LP/MILP paths work without it
    import highspy
except ImportError:  # pragma: no cover - exercised only without highspy
    highspy = None


def qp_available() -> bool:
    return highspy is not None


def solve_diag_qp(model: ModelIR, quad: dict[int, float], fixed: np.ndarray | None = None) -> SolveResult:
    """Minimize ``model``'s linear objective plus ``sum(0.5 * q_i * x_i**2)``.

    Parameters
    ----------
    quad : dict
        Variable id to non-negative curvature ``q_i``.
    fixed : ndarray, optional
        A full solution vector; every integer variable is pinned to its rounded
        value. Required when the model has integer variables.
    """
    if highspy is None:
        raise SolverError("the QP polish needs the 'highspy' package")
    c, A, row_lb, row_ub, lb, ub, integrality = model.arrays()
    lb, ub = lb.copy(), ub.copy()
    ints = np.flatnonzero(integrality)
    if ints.size:
        if fixed is None:
            raise SolverError("integer variables must be fixed before a QP solve")
        vals = np.rint(np.asarray(fixed, dtype=float)[ints])
        lb[ints] = vals
        ub[ints] = vals
    n = c.size
    q = np.zeros(n)
    for vid, v in quad.items():
        if v < 0:
            raise SolverError("QP curvature must be non-negative")
        q[vid] += v

    inf = highspy.kHighsInf
    lp = highspy.HighsLp()
    lp.num_col_ = n
    lp.num_row_ = A.shape[0]
    lp.col_cost_ = c
    lp.col_lower_ = np.where(np.isfinite(lb), lb, -inf)
    lp.col_upper_ = np.where(np.isfinite(ub), ub, inf)
    lp.row_lower_ = np.where(np.isfinite(row_lb), row_lb, -inf)
    lp.row_upper_ = np.where(np.isfinite(row_ub), row_ub, inf)
    lp.offset_ = model.obj_constant
    csc = sparse.csc_matrix(A)
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.num_col_ = n
    lp.a_matrix_.num_row_ = A.shape[0]
    lp.a_matrix_.start_ = csc.indptr
    lp.a_matrix_.index_ = csc.indices
    lp.a_matrix_.value_ = csc.data

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.passModel(lp)
    nz = np.flatnonzero(q)
    if nz.size:
        hess = highspy.HighsHessian()
        hess.dim_ = n
        hess.format_ = highspy.HessianFormat.kTriangular
        counts = np.zeros(n, dtype=np.int32)
        counts[nz] = 1
        hess.start_ = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        hess.index_ = nz.astype(np.int32)
        hess.value_ = q[nz]
        h.passHessian(hess)
    h.run()
    status = h.getModelStatus()
    if status == highspy.HighsModelStatus.kOptimal:
        x = np.clip(np.array(h.getSolution().col_value), lb, ub)
        obj = float(c @ x + 0.5 * np.dot(q, x * x)) + model.obj_constant
        return SolveResult(OPTIMAL, obj, x, 0.0, "highs-qp")
    if status == highspy.HighsModelStatus.kInfeasible:
        return SolveResult(INFEASIBLE, backend="highs-qp")
    return SolveResult(LIMIT, backend="highs-qp")
