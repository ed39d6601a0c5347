"""Solver adapters: HiGHS (through scipy) and a miniature branch-and-bound."""

from __future__ import annotations

import heapq
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .model import ModelIR

log = logging.getLogger(__name__)

OPTIMAL, INFEASIBLE, UNBOUNDED, LIMIT = "optimal", "infeasible", "unbounded", "limit"

ENV_VAR = "GRIDMESH_SOLVER"
DEFAULT_BACKEND = "highs"
BACKENDS = ("highs", "mini")

INT_TOL = 1e-6
MINI_GAP = 1e-6
EXTERNAL_GAP = 1e-4


class SolverError(RuntimeError):
    """Backend missing, numerical failure, or search budget exhausted."""


class NodeBudgetExceeded(SolverError):
    pass


@dataclass
class SolveResult:
    status: str
    objective: float = math.nan
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gap: float = math.nan
    backend: str = ""
    nodes: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def value(self, vid: int) -> float:
        return float(self.x[vid])


def backend_from_env(default: str = DEFAULT_BACKEND) -> str:
    return os.environ.get(ENV_VAR, default) or default


def solve(model: ModelIR, backend: str | None = None, gap: float | None = None,
          time_limit: float | None = None, node_limit: int | None = None) -> SolveResult:
    """Solve ``model`` with the named backend (``GRIDMESH_SOLVER`` by default)."""
    backend = backend or backend_from_env()
    model.validate()
    if backend == "highs":
        return _solve_highs(model, EXTERNAL_GAP if gap is None else gap, time_limit)
    if backend == "mini":
        return solve_exact_mini(model, MINI_GAP if gap is None else gap,
                                node_limit=node_limit or 200_000)
    raise SolverError(f"solver backend {backend!r} is not available (choose from {BACKENDS})")


def _snap_integers(model: ModelIR, x: np.ndarray) -> np.ndarray:
    x = np.array(x, dtype=float)
    lb = np.array([v.lb for v in model.variables])
    ub = np.array([v.ub for v in model.variables])
    x = np.clip(x, lb, ub)  # drop solver bound slack
    for v in model.variables:
        if v.integer:
            x[v.id] = round(x[v.id])
    return x


def _solve_highs(model: ModelIR, gap: float, time_limit: float | None) -> SolveResult:
    c, A, row_lb, row_ub, lb, ub, integrality = model.arrays()
    options = {"disp": False, "mip_rel_gap": gap}
    if time_limit is not None:
        options["time_limit"] = time_limit
    constraints = LinearConstraint(A, row_lb, row_ub) if A.shape[0] else None
    res = milp(c, constraints=constraints, bounds=Bounds(lb, ub),
               integrality=integrality, options=options)
    got_gap = getattr(res, "mip_gap", None)
    got_gap = 0.0 if got_gap is None else float(got_gap)
    if res.status == 0:
        x = _snap_integers(model, res.x)
        return SolveResult(OPTIMAL, float(c @ x) + model.obj_constant, x, got_gap, "highs",
                           int(getattr(res, "mip_node_count", 0) or 0))
    if res.status == 1:
        if res.x is not None:
            x = _snap_integers(model, res.x)
            return SolveResult(LIMIT, float(c @ x) + model.obj_constant, x, got_gap, "highs")
        return SolveResult(LIMIT, backend="highs")
    if res.status == 2:
        return SolveResult(INFEASIBLE, backend="highs")
    if res.status == 3:
        return SolveResult(UNBOUNDED, backend="highs")
    raise SolverError(f"HiGHS failed: {res.message}")


# -- miniature branch and bound ----------------------------------------------

class _Relaxation:
    """LP relaxation of a model with per-node variable bounds."""

    def __init__(self, model: ModelIR):
        c, A, row_lb, row_ub, lb, ub, integrality = model.arrays()
        self.c = c
        self.lb = lb
        self.ub = ub
        self.int_ids = np.flatnonzero(integrality)
        eq = np.isfinite(row_lb) & np.isfinite(row_ub) & (row_lb == row_ub)
        up = np.isfinite(row_ub) & ~eq
        lo = np.isfinite(row_lb) & ~eq
        blocks, rhs = [], []
        if up.any():
            blocks.append(A[up])
            rhs.append(row_ub[up])
        if lo.any():
            blocks.append(-A[lo])
            rhs.append(-row_lb[lo])
        self.A_ub = sparse.vstack(blocks).tocsr() if blocks else None
        self.b_ub = np.concatenate(rhs) if rhs else None
        self.A_eq = A[eq] if eq.any() else None
        self.b_eq = row_lb[eq] if eq.any() else None

    def solve(self, lb: np.ndarray, ub: np.ndarray):
        bounds = list(zip(np.where(np.isfinite(lb), lb, None), np.where(np.isfinite(ub), ub, None)))
        if len(self.c) == 0:
            return 0, np.zeros(0), 0.0
        res = linprog(self.c, A_ub=self.A_ub, b_ub=self.b_ub, A_eq=self.A_eq, b_eq=self.b_eq,
                      bounds=bounds, method="highs")
        if res.status == 0:
            return 0, res.x, float(res.fun)
        return res.status, None, math.nan


def solve_exact_mini(model: ModelIR, gap: float = MINI_GAP,
                     node_limit: int = 200_000) -> SolveResult:
    """Best-bound branch and bound over LP relaxations.

    Branches on the most fractional integer variable (lowest id on ties).
    Meant for test-scale models; raises :class:`NodeBudgetExceeded` rather
    than returning an unproven incumbent.
    """
    model.validate()
    rel = _Relaxation(model)
    status, x, bound = rel.solve(rel.lb, rel.ub)
    if status == 2:
        return SolveResult(INFEASIBLE, backend="mini", nodes=1)
    if status == 3:
        return SolveResult(UNBOUNDED, backend="mini", nodes=1)
    if status != 0:
        raise SolverError(f"LP relaxation failed at the root (status {status})")

    incumbent, inc_x = math.inf, None
    heap = [(bound, 0, rel.lb.copy(), rel.ub.copy(), x)]
    seq, nodes = 1, 1
    best_bound = bound
    while heap:
        bound, _, lb, ub, x = heapq.heappop(heap)
        best_bound = bound
        if bound >= incumbent - _prune_tol(incumbent, gap):
            break  # best-bound order: nothing left can improve enough
        branch_var, best_score = -1, math.inf
        for vid in rel.int_ids:
            frac = x[vid] - math.floor(x[vid])
            if INT_TOL < frac < 1 - INT_TOL:
                score = abs(frac - 0.5)
                if score < best_score - 1e-12:
                    branch_var, best_score = vid, score
        if branch_var < 0:
            incumbent, inc_x = bound, x
            continue
        val = x[branch_var]
        for side in (0, 1):
            clb, cub = lb.copy(), ub.copy()
            if side == 0:
                cub[branch_var] = math.floor(val)
            else:
                clb[branch_var] = math.ceil(val)
            if clb[branch_var] > cub[branch_var]:
                continue
            nodes += 1
            if nodes > node_limit:
                raise NodeBudgetExceeded(f"node budget of {node_limit} exceeded")
            st, cx, cbound = rel.solve(clb, cub)
            if st == 2:
                continue
            if st != 0:
                raise SolverError(f"LP relaxation failed (status {st})")
            if cbound < incumbent - _prune_tol(incumbent, gap):
                heapq.heappush(heap, (cbound, seq, clb, cub, cx))
                seq += 1
    else:
        best_bound = incumbent

    if inc_x is None:
        return SolveResult(INFEASIBLE, backend="mini", nodes=nodes)
    xs = _snap_integers(model, inc_x)
    obj = float(rel.c @ xs) + model.obj_constant
    achieved = max(0.0, (incumbent - min(best_bound, incumbent)) / max(abs(incumbent), 1e-10))
    return SolveResult(OPTIMAL, obj, xs, achieved, "mini", nodes)


def _prune_tol(incumbent: float, gap: float) -> float:
    if not math.isfinite(incumbent):
        return 0.0
    return max(1e-9, gap * abs(incumbent))
