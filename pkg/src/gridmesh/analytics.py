"""Convergence analytics, penalty sweeps and trace/report files.

Everything here produces plot-ready numbers; nothing is rendered.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .obadmm import AdmmConfig, AdmmResult, AdmmTrace, TraceEntry, run_obadmm, run_reference_admm
from .scenario import NetworkScenario

TRACE_COLUMNS = ("k", "objective", "normalized_objective", "epsilon", "max_abs_r",
                 "max_abs_s", "obj_rate_ma", "eps_ma", "stopped")
REFERENCE, FIXED_ITERS, OBADMM = "reference", "fixed_iters", "obadmm"
TRAILING = 100


def moving_average(series, w: int) -> np.ndarray:
    """Trailing mean over ``w`` samples; entry ``i`` covers ``series[i:i+w]``.

    Returns ``len(series) - w + 1`` values, or an empty array when the
    series is shorter than the window.
    """
    if w < 1:
        raise ValueError("window must be at least 1")
    x = np.asarray(series, dtype=float)
    if w > x.size:
        return np.empty(0)
    c = np.cumsum(np.insert(x, 0, 0.0))
    return (c[w:] - c[:-w]) / w


def normalized_objective(dem_obj: float, cem_obj: float) -> float:
    if cem_obj == 0:
        raise ValueError("reference objective is zero")
    return dem_obj / cem_obj


# -- penalty sweep -----------------------------------------------------------

@dataclass
class SweepRow:
    rho: float
    iterations: int
    converged: bool
    stop_reason: str
    objective: float
    normalized_objective: float
    final_epsilon: float
    trailing_eps_mean: float = math.nan
    error: str = ""


def _sweep_point(args) -> SweepRow:
    s, rho, mode, cfg, cem_objective = args
    cfg = replace(cfg, rho=rho)
    try:
        if mode == OBADMM:
            res = run_obadmm(s, cfg, keep_arrays=False)
        else:
            res = run_reference_admm(s, cfg, keep_arrays=False)
    except Exception as exc:  # noqa: BLE001 - failures are reported in-row
        return SweepRow(rho, 0, False, "error", math.nan, math.nan, math.nan, error=str(exc))
    eps = res.trace.epsilons
    tail = float(np.mean(eps[-TRAILING:])) if mode == FIXED_ITERS and eps.size else math.nan
    norm = normalized_objective(res.objective, cem_objective) if cem_objective else math.nan
    converged = res.converged if mode != FIXED_ITERS else True
    return SweepRow(rho, res.iterations, converged, res.stop_reason, res.objective, norm,
                    res.epsilon, tail)


def sweep_penalty(s: NetworkScenario, rhos, mode: str = REFERENCE, cfg: AdmmConfig | None = None,
                  cem_objective: float | None = None, epsilon_th: float | None = None,
                  iterations: int | None = None, workers: int = 1) -> list[SweepRow]:
    """One independent ADMM run per penalty value.

    Parameters
    ----------
    mode : {"reference", "fixed_iters", "obadmm"}
        ``reference`` stops on ``eps <= epsilon_th``; ``fixed_iters`` runs
        exactly ``iterations`` sweeps and adds the trailing-100 mean of eps;
        ``obadmm`` applies the objective-based rule.
    workers : int
        Process count; rows are identical whatever the value.
    """
    cfg = cfg or AdmmConfig()
    if mode == REFERENCE:
        if epsilon_th is not None:
            cfg = replace(cfg, epsilon_th=epsilon_th)
    elif mode == FIXED_ITERS:
        if not iterations:
            raise ValueError("fixed_iters mode needs an iteration count")
        # an unreachable threshold turns the reference loop into a fixed-length run
        cfg = replace(cfg, epsilon_th=-1.0, max_iters=iterations, k_s=min(cfg.k_s, iterations))
    elif mode != OBADMM:
        raise ValueError(f"unknown sweep mode {mode!r}")
    jobs = [(s, float(rho), mode, cfg, cem_objective) for rho in rhos]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_point, jobs))
    return [_sweep_point(j) for j in jobs]


def iteration_trend_exceptions(rows: list[SweepRow]) -> list[tuple[float, float]]:
    """Pairs of consecutive penalties (sorted ascending) where iterations went up.

    Non-converged rows count as exceptions against their successor.
    """
    rows = sorted(rows, key=lambda r: r.rho)
    out = []
    for a, b in zip(rows, rows[1:]):
        if not a.converged or not b.converged or b.iterations > a.iterations:
            out.append((a.rho, b.rho))
    return out


# -- files -------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)  # shortest exact round-trip form


def trace_rows(trace: AdmmTrace) -> list[list[str]]:
    rows = []
    for e in trace.entries:
        rows.append([_fmt(e.k), _fmt(e.objective), _fmt(e.normalized_objective), _fmt(e.epsilon),
                     _fmt(e.max_abs_r), _fmt(e.max_abs_s), _fmt(e.obj_rate_ma), _fmt(e.eps_ma),
                     _fmt(bool(e.stopped))])
    return rows


def emit_trace(trace: AdmmTrace, path) -> Path:
    """Write the per-iteration CSV; blank cells mark undefined values."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        w.writerows(trace_rows(trace))
    return path


def read_trace(path) -> AdmmTrace:
    def num(v):
        return float(v) if v != "" else math.nan

    trace = AdmmTrace(keep_arrays=False)
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            trace.entries.append(TraceEntry(
                k=int(row["k"]), objective=num(row["objective"]), epsilon=num(row["epsilon"]),
                max_abs_r=num(row["max_abs_r"]), max_abs_s=num(row["max_abs_s"]),
                obj_rate_ma=num(row["obj_rate_ma"]), eps_ma=num(row["eps_ma"]),
                stopped=row["stopped"] == "1",
                normalized_objective=num(row["normalized_objective"])))
    return trace


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return None if math.isnan(x) else x
    if isinstance(x, np.integer):
        return int(x)
    return x


def run_summary(result: AdmmResult, per_mg: dict[int, float],
                cem_objective: float | None = None, extra: dict | None = None) -> dict:
    """JSON-ready summary of an ADMM run; ``total`` is the sum of ``per_mg``."""
    total = float(sum(per_mg.values()))
    doc = {
        "stop_reason": result.stop_reason,
        "converged": result.converged,
        "iterations": result.iterations,
        "objective": result.objective,
        "epsilon": result.epsilon,
        "per_microgrid": {str(m): v for m, v in sorted(per_mg.items())},
        "total": total,
        "normalized_objective": normalized_objective(total, cem_objective) if cem_objective else None,
        "config": asdict(result.config),
    }
    if extra:
        doc.update(extra)
    return _jsonable(doc)


def emit_report(doc: dict, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
    return path


def sweep_table(rows: list[SweepRow]) -> list[dict]:
    return [_jsonable(asdict(r)) for r in rows]
