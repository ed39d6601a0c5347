"""Tangent-cut epigraph of a convex quadratic ``(x - c)**2``.

Every tangent of a convex function under-estimates it globally, so a set of
cuts ``z >= tangent_p(x)`` plus ``z >= 0`` (the tangent at the vertex) gives
an LP-representable lower envelope. Between two neighbouring tangent points
``a < b`` the envelope is exact at ``a`` and ``b`` and falls short by at most
``(b - a)**2 / 4`` at the midpoint.
"""

from __future__ import annotations

import math

import numpy as np

from .model import EQ, GE, ModelError, ModelIR

UNIFORM = "uniform"
CENTERED = "centered"


def uniform_points(lo: float, hi: float, k: int) -> np.ndarray:
    """``k`` equally spaced tangent points covering ``[lo, hi]``."""
    if k < 2:
        raise ModelError("need at least 2 tangent points")
    return lo + np.arange(k) * (hi - lo) / (k - 1)


def centered_points(c: float, lo: float, hi: float, k: int,
                    min_offset: float = 1e-3) -> np.ndarray:
    """Tangent points clustered geometrically around the vertex ``c``.

    ``k // 2`` offsets per side, ranging from ``min_offset`` out to the
    farthest bound. The envelope is flat only on ``|x - c| < min_offset / 2``,
    which keeps the penalty pulling toward ``c`` at every scale; the relative
    under-approximation stays bounded by the geometric ratio.
    """
    if k < 2:
        raise ModelError("need at least 2 tangent points")
    span = max(hi - c, c - lo, min_offset)
    per_side = k // 2
    if per_side == 1:
        offsets = np.array([span])
    else:
        offsets = np.geomspace(min_offset, span, per_side)
    pts = np.concatenate([c - offsets[::-1], c + offsets])
    if k % 2:
        pts = np.insert(pts, per_side, c)
    return pts


def tangent_cut(p: float, c: float) -> tuple[float, float]:
    """Slope and intercept of the tangent of ``(x - c)**2`` at ``x = p``."""
    slope = 2.0 * (p - c)
    intercept = (p - c) ** 2 - slope * p
    return slope, intercept


def pwl_envelope(x, c: float, points) -> np.ndarray:
    """Evaluate ``max(0, tangent_p(x) for p in points)`` elementwise."""
    x = np.asarray(x, dtype=float)
    env = np.zeros_like(x)
    for p in points:
        s, b = tangent_cut(p, c)
        env = np.maximum(env, s * x + b)
    return env


def envelope_segments(c: float, points) -> tuple[list, list]:
    """Slopes and lengths of the tangent envelope on each side of ``c``.

    The envelope of tangents at sorted points ``q`` (with ``c`` included) is
    the tangent at ``q_i`` between the midpoints ``(q_{i-1}+q_i)/2`` and
    ``(q_i+q_{i+1})/2``. Returned as ``(right, left)``; each a list of
    ``(slope, length)`` moving away from ``c`` with non-decreasing slope,
    the outermost length ``inf``.
    """
    pts = np.unique(np.append(np.asarray(points, dtype=float), c))
    sides = []
    for sign in (1.0, -1.0):
        q = np.sort(np.abs(pts[(pts - c) * sign >= 0] - c))  # distances, starting at 0
        segs = []
        for i, dist in enumerate(q):
            lo = 0.0 if i == 0 else (q[i - 1] + dist) / 2
            hi = (dist + q[i + 1]) / 2 if i + 1 < len(q) else math.inf
            segs.append((2.0 * dist, hi - lo))
        sides.append(segs)
    return sides[0], sides[1]


def add_pwl_quadratic(model: ModelIR, x: int, c: float, weight: float, k: int = 16,
                      spacing: str = UNIFORM, points=None,
                      min_offset: float = 1e-3, name: str = "",
                      form: str = "cuts") -> int | None:
    """Add ``weight * pwl((x - c)**2)`` to the objective of ``model``.

    Declares an epigraph variable ``z >= 0`` and one cut per tangent point.
    With ``spacing="uniform"`` the points are ``L + i (U - L) / (k - 1)``
    over the bounds of ``x``; ``"centered"`` clusters them around ``c``.
    Returns the id of ``z``, or ``None`` when ``weight == 0`` (nothing added).

    ``form="segments"`` encodes the same envelope with one bounded column
    per linear piece and a single row ``x - sum(right) + sum(left) = c``;
    it returns ``None`` since no epigraph variable exists. Fewer rows make
    the relaxations markedly cheaper inside branch and bound.
    """
    var = model.variables[x]
    if not (math.isfinite(var.lb) and math.isfinite(var.ub)):
        raise ModelError(f"PWL target {var.name!r} must have finite bounds")
    if weight < 0:
        raise ModelError("PWL weight must be non-negative")
    if k < 2:
        raise ModelError("need at least 2 tangent points")
    if weight == 0:
        return None
    if points is None:
        if spacing == UNIFORM:
            points = uniform_points(var.lb, var.ub, k)
        elif spacing == CENTERED:
            points = centered_points(c, var.lb, var.ub, k, min_offset)
        else:
            raise ModelError(f"unknown tangent spacing {spacing!r}")
    if form == "segments":
        _add_segments(model, x, c, weight, points, name or f"pwl[{var.name}]")
        return None
    if form != "cuts":
        raise ModelError(f"unknown PWL form {form!r}")
    z = model.add_var(name or f"pwl[{var.name}]", 0.0, math.inf)
    for p in points:
        slope, intercept = tangent_cut(float(p), c)
        if slope == 0.0:
            continue  # the vertex tangent is the bound z >= 0
        # z - slope * x >= intercept
        model.add_constraint({z: 1.0, x: -slope}, GE, intercept)
    model.add_objective({z: weight})
    return z


def _add_segments(model: ModelIR, x: int, c: float, weight: float, points, name: str) -> list[int]:
    var = model.variables[x]
    right, left = envelope_segments(c, points)
    row = {x: 1.0}
    obj = {}
    cols = []
    for sign, segs, room in ((1.0, right, var.ub - c), (-1.0, left, c - var.lb)):
        reach = 0.0
        for i, (slope, length) in enumerate(segs):
            if room <= reach:
                break
            length = min(length, room - reach)
            reach += length
            col = model.add_var(f"{name}{'+' if sign > 0 else '-'}{i}", 0.0, length)
            row[col] = -sign
            if slope:
                obj[col] = weight * slope
            cols.append(col)
    model.add_constraint(row, EQ, c)
    model.add_objective(obj)
    return cols
