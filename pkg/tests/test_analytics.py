import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridmesh.analytics import (FIXED_ITERS, OBADMM, REFERENCE, TRACE_COLUMNS, SweepRow,
                                emit_report, emit_trace, iteration_trend_exceptions,
                                moving_average, normalized_objective, read_trace, run_summary,
                                sweep_penalty, sweep_table)
from gridmesh.obadmm import AdmmConfig, AdmmTrace, run_reference_admm


def test_moving_average_examples():
    assert moving_average([1, 2, 3, 4], 2).tolist() == [1.5, 2.5, 3.5]
    assert moving_average([7.0] * 5, 3).tolist() == [7.0, 7.0, 7.0]
    assert moving_average([1, 2, 6], 3).tolist() == [3.0]
    assert moving_average([1, 2], 3).size == 0
    with pytest.raises(ValueError):
        moving_average([1, 2], 0)


@settings(max_examples=80)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40), st.integers(1, 10),
       st.floats(-1e3, 1e3))
def test_moving_average_properties(xs, w, shift):
    ma = moving_average(xs, w)
    if w > len(xs):
        assert ma.size == 0
        return
    x = np.array(xs)
    assert ma.size == len(xs) - w + 1
    for i, v in enumerate(ma):
        win = x[i:i + w]
        assert win.min() - 1e-6 <= v <= win.max() + 1e-6
    np.testing.assert_allclose(moving_average(x + shift, w), ma + shift, atol=1e-6)


def test_normalized_objective():
    assert normalized_objective(5.0, 5.0) == 1.0
    assert normalized_objective(10.2076, 10.0) == pytest.approx(1.02076)
    with pytest.raises(ValueError):
        normalized_objective(1.0, 0.0)


def test_trend_exceptions():
    rows = [SweepRow(r, k, True, "epsilon_threshold", 1.0, 1.0, 0.0)
            for r, k in ((1.0, 3), (0.1, 4), (0.01, 9), (0.001, 8))]
    assert iteration_trend_exceptions(rows) == [(0.001, 0.01)]
    rows[0].converged = False
    assert (0.1, 1.0) in iteration_trend_exceptions(rows)


def test_sweep_single_point_equals_direct_run(tiny3):
    cfg = AdmmConfig(rho=0.03, epsilon_th=0.01, k_s=5, max_iters=80)
    rows = sweep_penalty(tiny3, [0.03], REFERENCE, cfg, cem_objective=15.2136)
    res = run_reference_admm(tiny3, cfg)
    assert rows[0].iterations == res.iterations
    assert rows[0].objective == res.objective
    assert rows[0].normalized_objective == pytest.approx(res.objective / 15.2136)


def test_sweep_rows_order_independent(tiny3):
    cfg = AdmmConfig(k_s=5, max_iters=30)
    a = sweep_penalty(tiny3, [0.1, 0.01], REFERENCE, cfg, epsilon_th=0.05)
    b = sweep_penalty(tiny3, [0.01, 0.1], REFERENCE, cfg, epsilon_th=0.05)
    assert sorted(sweep_table(a), key=lambda r: r["rho"]) == sorted(sweep_table(b),
                                                                     key=lambda r: r["rho"])


def test_sweep_fixed_iterations(tiny3):
    rows = sweep_penalty(tiny3, [0.1], FIXED_ITERS, AdmmConfig(k_s=5), iterations=12)
    assert rows[0].iterations == 12
    assert rows[0].stop_reason == "max_iters" and rows[0].converged
    assert not math.isnan(rows[0].trailing_eps_mean)
    with pytest.raises(ValueError):
        sweep_penalty(tiny3, [0.1], FIXED_ITERS)
    with pytest.raises(ValueError):
        sweep_penalty(tiny3, [0.1], "bogus")


def test_sweep_records_errors_in_row(tiny3):
    rows = sweep_penalty(tiny3, [0.1], OBADMM, AdmmConfig(k_s=5, max_iters=10, backend="nope"))
    assert rows[0].stop_reason == "error" and rows[0].error


def test_trace_round_trip(tmp_path, tiny3):
    res = run_reference_admm(tiny3, AdmmConfig(rho=0.05, epsilon_th=-1, k_s=3, max_iters=8),
                             cem_objective=15.2136, keep_arrays=False)
    path = emit_trace(res.trace, tmp_path / "trace.csv")
    assert path.read_text().splitlines()[0] == ",".join(TRACE_COLUMNS)
    back = read_trace(path)
    assert len(back) == len(res.trace)
    for a, b in zip(res.trace.entries, back.entries):
        for f in ("k", "objective", "epsilon", "max_abs_r", "max_abs_s", "stopped"):
            assert getattr(a, f) == getattr(b, f)
        for f in ("obj_rate_ma", "eps_ma", "normalized_objective"):
            x, y = getattr(a, f), getattr(b, f)
            assert (math.isnan(x) and math.isnan(y)) or x == y


def test_empty_trace_is_header_only(tmp_path):
    path = emit_trace(AdmmTrace(), tmp_path / "t.csv")
    assert path.read_text() == ",".join(TRACE_COLUMNS) + "\n"


def test_summary_totals(tmp_path, tiny3):
    res = run_reference_admm(tiny3, AdmmConfig(rho=0.05, epsilon_th=0.1, k_s=3, max_iters=50))
    per_mg = {1: 1.5, 2: -0.25, 3: 4.0}
    doc = run_summary(res, per_mg, cem_objective=10.5)
    assert doc["total"] == 5.25 and doc["normalized_objective"] == 0.5
    path = emit_report(doc, tmp_path / "s.json")
    again = json.loads(path.read_text())
    assert again["total"] == sum(again["per_microgrid"].values())
    assert again["config"]["rho"] == 0.05
