"""Acceptance criteria, one test (or parametrized group) per criterion.

Each test records a one-line PASS/FAIL verdict that is repeated in the
terminal summary. Long runs are cached so later criteria can inspect them.
"""

from __future__ import annotations

import dataclasses
import functools
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from gridmesh.analytics import REFERENCE, iteration_trend_exceptions, sweep_penalty
from gridmesh.lp_core import EQ, ModelIR, add_pwl_quadratic, pwl_envelope, solve, uniform_points
from gridmesh.microgrid_model import (ExchangeLedger, SubproblemContext, build_cem,
                                      build_subproblem, extract_all, microgrid_cost)
from gridmesh.obadmm import (STOP_EPSILON, STOP_OBJECTIVE, AdmmConfig, ExchangeEntry,
                             ExchangeMessage, public_view, run_obadmm, solution_quality,
                             stopping_decision)
from gridmesh.pea import apply_pea, apply_to_solutions, pea_objective_report
from gridmesh.scenario import bundled_case

from conftest import cem_objective, record_criterion, tiny_two_mg
from oracles import enumerate_two_mg_cem

CASES = (1, 2, 3)
DEM_BUDGET = 15 * 60  # seconds per case
SWEEP_RHOS = (1e-4, 1e-3, 1e-2, 0.1, 1.0)
SWEEP_BUDGET = 10 * 60  # seconds per penalty value

_verdicts: dict[int, dict] = {}


def _record_part(n: int, part, ok: bool, detail: str) -> None:
    parts = _verdicts.setdefault(n, {})
    parts[part] = (ok, detail)
    record_criterion(n, all(v[0] for v in parts.values()),
                     "; ".join(v[1] for _, v in sorted(parts.items(), key=lambda kv: str(kv[0]))))


@functools.lru_cache(maxsize=None)
def dem_run(case: int):
    """OB-ADMM with the reference settings followed by PEA; cached for later criteria."""
    s = bundled_case(case)
    cem = cem_objective(case)
    cfg = AdmmConfig(rho=0.001, beta=0.001, k_s=100, time_limit=DEM_BUDGET)
    t0 = time.monotonic()
    res = run_obadmm(s, cfg, cem_objective=cem)
    elapsed = time.monotonic() - t0
    after = apply_pea(res.ledger)
    sols = apply_to_solutions(res.solutions, after)
    total = sum(microgrid_cost(s.microgrid(d.mid), s, d) for d in sols)
    return res, after, total / cem, elapsed


# 1 -----------------------------------------------------------------------------

def test_c01_miniature_cem_oracle():
    t0 = time.monotonic()
    s = tiny_two_mg()
    truth, n_lps = enumerate_two_mg_cem(s)
    model = build_cem(s).model
    highs = solve(model, "highs", gap=0.0).objective
    mini = solve(model, "mini").objective
    elapsed = time.monotonic() - t0
    ok = abs(highs - truth) <= 1e-6 and abs(mini - truth) <= 1e-6 and elapsed < 60
    record_criterion(1, ok, f"enumeration {truth:.6f} over {n_lps} LPs, highs {highs:.6f}, "
                            f"mini {mini:.6f}, {elapsed:.1f}s")
    assert ok


# 2 -----------------------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.parametrize("case", CASES)
def test_c02_dem_vs_cem(case):
    res, _, norm, elapsed = dem_run(case)
    checks = {"stopped by objective rule": res.stop_reason == STOP_OBJECTIVE,
              "normalized <= 1.0005": norm <= 1.0005,
              "eps <= 0.04": res.epsilon <= 0.04,
              "within budget": elapsed <= DEM_BUDGET}
    failed = [k for k, v in checks.items() if not v]
    _record_part(2, case, not failed,
                 f"case {case}: {res.stop_reason} k={res.iterations} normalized {norm:.6f} "
                 f"eps {res.epsilon:.4g} {elapsed:.0f}s" + (f" [failed: {', '.join(failed)}]"
                                                             if failed else ""))
    assert not failed, failed


# 3 -----------------------------------------------------------------------------

def _structural_pea_checks(before: ExchangeLedger, after: ExchangeLedger) -> list[str]:
    bad = []
    if not np.array_equal(after.imp, after.exp.transpose(1, 0, 2)):
        bad.append("bilateral")
    if np.max(np.abs(np.abs(after.net_exchange) - np.abs(before.net_exchange))) > 1e-9:
        bad.append("|P_E|")
    # exactly rounded sums, so the check does not depend on summation order
    for t in range(after.imp.shape[2]):
        if math.fsum(after.imp[:, :, t].ravel()) != math.fsum(after.exp[:, :, t].ravel()):
            bad.append("flow conservation")
            break
    return bad


@pytest.mark.parametrize("case", CASES)
def test_c03_pea_invariants_cem(case):
    s = bundled_case(case)
    built = build_cem(s)
    res = solve(built.model)
    sols = extract_all(built, res)
    before = ExchangeLedger.from_dispatch(sols)
    after = apply_pea(before)
    bad = _structural_pea_checks(before, after)
    rep = pea_objective_report(s, sols, before, after, strict=False)
    diff = abs(rep.total_after - rep.total_before)
    if diff > 1e-6:
        bad.append("objective")
    _record_part(3, f"cem{case}", not bad,
                 f"CEM case {case}: totals {rep.total_before:.6f}/{rep.total_after:.6f}"
                 + (f" [failed: {', '.join(bad)}]" if bad else ""))
    assert not bad


@pytest.mark.slow
@pytest.mark.parametrize("case", CASES)
def test_c03_pea_invariants_dem(case):
    res, after, _, _ = dem_run(case)
    bad = _structural_pea_checks(res.ledger, after)
    _record_part(3, f"dem{case}", not bad,
                 f"DEM case {case}: structure" + (f" [failed: {', '.join(bad)}]" if bad else " ok"))
    assert not bad


# 4 -----------------------------------------------------------------------------

@pytest.mark.slow
def test_c04_dual_identity():
    res, _, _, _ = dem_run(2)
    cfg, tr = res.config, res.trace
    assert len(tr.y) >= 100, "run too short to check 100 iterations"
    worst = 0.0
    prev = np.zeros_like(tr.y[0])
    for k in range(100):
        step = tr.y[k] - prev
        scale = np.maximum(np.abs(tr.y[k]), np.abs(prev))
        # one rounding in y + rho*r and one in the difference
        tol = 2 * np.spacing(np.maximum(scale, np.finfo(float).tiny))
        err = np.abs(step - cfg.rho * tr.r[k])
        worst = max(worst, float(np.max(err / tol)))
        prev = tr.y[k]
    ok = worst <= 1.0
    record_criterion(4, ok, f"100 iterations on case 2, worst error {worst:.2f} of the ulp bound")
    assert ok


# 5 -----------------------------------------------------------------------------

def test_c05_epsilon_definition(tiny3):
    from gridmesh.obadmm import run_reference_admm
    examples = solution_quality([3.0], [4.0]) == 5.0 and solution_quality([0.0], [0.0]) == 0.0
    res = run_reference_admm(tiny3, AdmmConfig(rho=0.05, epsilon_th=-1, k_s=3, max_iters=6))
    direct = [float(np.sqrt(np.sum(r ** 2) + np.sum(s ** 2))) for r, s in zip(res.trace.r,
                                                                                res.trace.s)]
    traced = np.allclose(direct, res.trace.epsilons, rtol=1e-12, atol=0)
    ok = examples and traced
    record_criterion(5, ok, "r=[3], s=[4] -> 5; zeros -> 0; trace matches the norm of (r, s)")
    assert ok


# 6 -----------------------------------------------------------------------------

def _lp_gap(points, x0: float) -> float:
    """Gap at ``x0`` measured by minimizing the PWL block in an LP."""
    m = ModelIR()
    x = m.add_var("x", 0.0, 1.0)
    m.add_constraint({x: 1.0}, EQ, x0)
    add_pwl_quadratic(m, x, 0.0, 1.0, points=points, form="cuts")
    return x0 * x0 - solve(m).objective


def test_c06_pwl_error_bound():
    parts = []
    ok = True
    grid = np.linspace(0.0, 1.0, 100001)
    for k in (2, 5, 16):
        pts = uniform_points(0.0, 1.0, k)
        h = 1.0 / (k - 1)
        gap = float(np.max(grid ** 2 - pwl_envelope(grid, 0.0, pts)))
        mids = (pts[:-1] + pts[1:]) / 2
        lp = max(_lp_gap(pts, float(x)) for x in mids)
        ok &= gap <= h * h / 4 + 1e-12 and abs(lp - h * h / 4) <= 1e-9
        parts.append(f"K={k} gap {gap:.6g} (bound {h * h / 4:.6g})")
    ok &= abs(float(np.max(grid ** 2 - pwl_envelope(grid, 0.0, uniform_points(0, 1, 2)))) - 0.25) < 1e-12
    record_criterion(6, ok, ", ".join(parts))
    assert ok


# 7 -----------------------------------------------------------------------------

def test_c07_stopping_rule_branches():
    flat = [100.0] * 8
    eps_valley = [5.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0, 1.0]
    eps_peak = [1.0] * 7 + [6.0]
    stop = stopping_decision(flat, eps_valley, 8, 1e-3, 4)
    window = not stopping_decision(flat, eps_valley, 4, 1e-3, 4)
    above = not stopping_decision(flat, eps_peak, 8, 1e-3, 4)
    ok = stop and window and above
    record_criterion(7, ok, f"stop {stop}, window-not-full continue {window}, "
                            f"eps-above-mean continue {above}")
    assert ok


# 8 -----------------------------------------------------------------------------

@pytest.mark.slow
def test_c08_penalty_sweep():
    s = bundled_case(1)
    cfg = AdmmConfig(time_limit=SWEEP_BUDGET)
    rows = sweep_penalty(s, SWEEP_RHOS, REFERENCE, cfg, cem_objective=cem_objective(1),
                         epsilon_th=0.1)
    rows = sorted(rows, key=lambda r: r.rho)
    terminated = all(r.stop_reason == STOP_EPSILON for r in rows)
    exceptions = iteration_trend_exceptions(rows)
    table = ", ".join(f"rho={r.rho:g}: k={r.iterations} {r.stop_reason} eps {r.final_epsilon:.3g}"
                      for r in rows)
    note = f"; trend exceptions {exceptions}" if exceptions else "; iterations non-increasing"
    record_criterion(8, terminated, table + note)
    # the monotone trend is a soft check: exceptions are reported, not failed
    assert terminated, [r for r in rows if r.stop_reason != STOP_EPSILON]


# 9 -----------------------------------------------------------------------------

def test_c09_privacy_structure():
    t0 = time.monotonic()
    problems = []
    for case in CASES:
        s = bundled_case(case)
        z = np.zeros((s.n, s.horizon))
        for mg in s.microgrids:
            m = mg.id
            view = public_view(s, m)
            for other in view.microgrids:
                if other.id != m and (other.generators or other.storage or any(other.net_load)):
                    problems.append(f"case {case}: view of {m} leaks {other.id}")
            b = build_subproblem(SubproblemContext(m, z, z, z, z, 0.001), view)
            if b.index.owners() != {m}:
                problems.append(f"case {case}: subproblem {m} owns {b.index.owners()}")
            for v in b.model.variables:
                owner = int(v.name.split("[", 2)[-1].split(",")[1])
                if owner != m:
                    problems.append(f"case {case}: subproblem {m} has {v.name}")
    entry_fields = [f.name for f in dataclasses.fields(ExchangeEntry)]
    msg_fields = [f.name for f in dataclasses.fields(ExchangeMessage)]
    if entry_fields != ["direction", "sender", "counterpart", "t", "value"]:
        problems.append(f"entry fields {entry_fields}")
    if msg_fields != ["sender", "iteration", "entries"]:
        problems.append(f"message fields {msg_fields}")
    elapsed = time.monotonic() - t0
    ok = not problems and elapsed < 1.0
    record_criterion(9, ok, f"{sum(b.n for b in map(bundled_case, CASES))} subproblems audited "
                            f"in {elapsed:.2f}s" + (f" {problems[:3]}" if problems else ""))
    assert ok


# 10 ----------------------------------------------------------------------------

def test_c10_compare_determinism(tmp_path):
    from gridmesh.scenario import bundled_case_path
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        proc = subprocess.run(
            [sys.executable, "-m", "gridmesh.cli", "compare", str(bundled_case_path(2)),
             "--ks", "3", "--max-iters", "5", "--out", str(out)],
            capture_output=True, text=True, check=False)
        assert proc.returncode in (0, 5), proc.stderr
        outs.append((out / "trace.csv").read_bytes())
    ok = outs[0] == outs[1] and len(outs[0].splitlines()) == 6
    record_criterion(10, ok, f"two compare runs on case 2: trace.csv identical ({len(outs[0])} bytes)")
    assert ok
