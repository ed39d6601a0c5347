"""Solver-agnostic mixed-integer linear model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

LE, EQ, GE = "<=", "==", ">="
SENSES = (LE, EQ, GE)

FEAS_TOL = 1e-6


class ModelError(ValueError):
    pass


@dataclass
class Variable:
    id: int
    name: str
    lb: float
    ub: float
    integer: bool = False

    @property
    def binary(self) -> bool:
        return self.integer and self.lb == 0.0 and self.ub == 1.0


@dataclass
class Constraint:
    id: int
    coefs: dict[int, float]
    sense: str
    rhs: float
    name: str = ""


@dataclass
class ModelIR:
    """Variables, linear rows and a linear objective (always minimized).

    Variables are addressed by integer id in declaration order. ``name`` is
    a human-readable label only; exports use ``x<id>`` / ``c<id>``.
    """

    name: str = "model"
    variables: list[Variable] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    obj_constant: float = 0.0

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf,
                integer: bool = False) -> int:
        if integer and not (math.isfinite(lb) and math.isfinite(ub)):
            raise ModelError(f"integer variable {name!r} needs finite bounds")
        if lb > ub:
            raise ModelError(f"variable {name!r}: lb {lb} > ub {ub}")
        vid = len(self.variables)
        self.variables.append(Variable(vid, name, float(lb), float(ub), integer))
        return vid

    def add_binary(self, name: str) -> int:
        return self.add_var(name, 0.0, 1.0, integer=True)

    def add_constraint(self, coefs: dict[int, float], sense: str, rhs: float,
                       name: str = "") -> int:
        if sense not in SENSES:
            raise ModelError(f"unknown sense {sense!r}")
        n = self.n_vars
        clean: dict[int, float] = {}
        for vid, a in coefs.items():
            if not 0 <= vid < n:
                raise ModelError(f"constraint {name!r} references undeclared variable {vid}")
            if a != 0.0:
                clean[vid] = clean.get(vid, 0.0) + float(a)
        cid = len(self.constraints)
        self.constraints.append(Constraint(cid, clean, sense, float(rhs), name))
        return cid

    def add_objective(self, coefs: dict[int, float], constant: float = 0.0) -> None:
        for vid, a in coefs.items():
            if not 0 <= vid < self.n_vars:
                raise ModelError(f"objective references undeclared variable {vid}")
            self.objective[vid] = self.objective.get(vid, 0.0) + float(a)
        self.obj_constant += float(constant)

    def set_bounds(self, vid: int, lb: float, ub: float) -> None:
        v = self.variables[vid]
        if lb > ub:
            raise ModelError(f"variable {v.name!r}: lb {lb} > ub {ub}")
        v.lb, v.ub = float(lb), float(ub)

    def copy(self) -> "ModelIR":
        m = ModelIR(self.name)
        m.variables = [Variable(v.id, v.name, v.lb, v.ub, v.integer) for v in self.variables]
        m.constraints = [Constraint(c.id, dict(c.coefs), c.sense, c.rhs, c.name)
                         for c in self.constraints]
        m.objective = dict(self.objective)
        m.obj_constant = self.obj_constant
        return m

    def validate(self) -> None:
        n = self.n_vars
        for v in self.variables:
            if v.integer and not (math.isfinite(v.lb) and math.isfinite(v.ub)):
                raise ModelError(f"integer variable {v.name!r} has infinite bounds")
        for c in self.constraints:
            if any(not 0 <= vid < n for vid in c.coefs):
                raise ModelError(f"constraint c{c.id} references an undeclared variable")

    # -- numeric views -----------------------------------------------------

    def arrays(self):
        """Return ``(c, A, row_lb, row_ub, lb, ub, integrality)``."""
        n = self.n_vars
        c = np.zeros(n)
        for vid, a in self.objective.items():
            c[vid] = a
        rows, cols, vals = [], [], []
        row_lb = np.empty(len(self.constraints))
        row_ub = np.empty(len(self.constraints))
        for i, con in enumerate(self.constraints):
            for vid, a in con.coefs.items():
                rows.append(i)
                cols.append(vid)
                vals.append(a)
            if con.sense == LE:
                row_lb[i], row_ub[i] = -np.inf, con.rhs
            elif con.sense == GE:
                row_lb[i], row_ub[i] = con.rhs, np.inf
            else:
                row_lb[i] = row_ub[i] = con.rhs
        A = sparse.csr_matrix((vals, (rows, cols)), shape=(len(self.constraints), n))
        lb = np.array([v.lb for v in self.variables])
        ub = np.array([v.ub for v in self.variables])
        integrality = np.array([1 if v.integer else 0 for v in self.variables], dtype=np.uint8)
        return c, A, row_lb, row_ub, lb, ub, integrality

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(sum(a * x[vid] for vid, a in self.objective.items()) + self.obj_constant)

    def max_violation(self, x) -> float:
        """Largest bound, row or integrality violation of point ``x``."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        for v in self.variables:
            worst = max(worst, v.lb - x[v.id], x[v.id] - v.ub)
            if v.integer:
                worst = max(worst, abs(x[v.id] - round(x[v.id])))
        for con in self.constraints:
            lhs = sum(a * x[vid] for vid, a in con.coefs.items())
            if con.sense == LE:
                worst = max(worst, lhs - con.rhs)
            elif con.sense == GE:
                worst = max(worst, con.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - con.rhs))
        return worst
