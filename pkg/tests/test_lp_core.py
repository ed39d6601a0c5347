import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridmesh.lp_core import (EQ, GE, LE, ModelError, ModelIR, SolverError, add_pwl_quadratic,
                              centered_points, export_mps, pwl_envelope, solve, solve_exact_mini,
                              tangent_cut, uniform_points)
from gridmesh.lp_core.pwl import envelope_segments
from gridmesh.lp_core.qp import qp_available, solve_diag_qp

from oracles import dense_envelope_gap, knapsack_bruteforce


def knapsack_model(values, weights, cap):
    m = ModelIR("knap")
    xs = [m.add_binary(f"x{i}") for i in range(len(values))]
    m.add_constraint(dict(zip(xs, weights)), LE, cap)
    m.add_objective({x: -v for x, v in zip(xs, values)})
    return m


# -- model IR -----------------------------------------------------------------

def test_model_rejects_bad_input():
    m = ModelIR()
    x = m.add_var("x", 0, 1)
    with pytest.raises(ModelError):
        m.add_var("y", 2, 1)
    with pytest.raises(ModelError):
        m.add_var("z", 0, math.inf, integer=True)
    with pytest.raises(ModelError):
        m.add_constraint({x: 1.0}, "<>", 0)
    with pytest.raises(ModelError):
        m.add_constraint({x + 5: 1.0}, LE, 0)
    with pytest.raises(ModelError):
        m.add_objective({7: 1.0})


def test_arrays_and_evaluate():
    m = ModelIR()
    x, y = m.add_var("x", 0, 4), m.add_var("y", -1, 1)
    m.add_constraint({x: 1, y: 2}, LE, 3)
    m.add_constraint({x: 1, y: -1}, GE, -2)
    m.add_constraint({x: 1, y: 1}, EQ, 1)
    m.add_objective({x: 2.0, y: -1.0}, 0.5)
    c, A, rlb, rub, lb, ub, integ = m.arrays()
    assert c.tolist() == [2.0, -1.0]
    assert A.toarray().tolist() == [[1, 2], [1, -1], [1, 1]]
    assert rlb.tolist() == [-np.inf, -2, 1] and rub.tolist() == [3, np.inf, 1]
    assert m.evaluate([1.0, 0.0]) == 2.5
    assert m.max_violation([1.0, 0.0]) == 0.0
    assert m.max_violation([5.0, 0.0]) > 0


# -- solvers ------------------------------------------------------------------

@pytest.mark.parametrize("backend", ["highs", "mini"])
def test_knapsack_matches_bruteforce(backend):
    values, weights, cap = [6.0, 10.0, 12.0], [1.0, 2.0, 3.0], 5.0
    res = solve(knapsack_model(values, weights, cap), backend)
    assert res.optimal
    assert -res.objective == pytest.approx(knapsack_bruteforce(values, weights, cap)) == 22.0


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 20), st.integers(1, 9)), min_size=1, max_size=7),
       st.integers(0, 25))
def test_backends_agree_on_random_knapsacks(items, cap):
    values = [float(v) for v, _ in items]
    weights = [float(w) for _, w in items]
    truth = knapsack_bruteforce(values, weights, cap)
    for backend in ("highs", "mini"):
        res = solve(knapsack_model(values, weights, cap), backend, gap=0.0)
        assert -res.objective == pytest.approx(truth, abs=1e-7)


def test_infeasible_and_unknown_backend():
    m = ModelIR()
    x = m.add_var("x", 0, 1)
    m.add_constraint({x: 1}, GE, 2)
    assert solve(m, "highs").status == "infeasible"
    assert solve(m, "mini").status == "infeasible"
    with pytest.raises(SolverError):
        solve(m, "cplex")


def test_solution_snapped_to_bounds():
    m = knapsack_model([3.0, 4.0], [2.0, 2.0], 3.0)
    res = solve(m)
    assert set(res.x.tolist()) <= {0.0, 1.0}
    assert m.max_violation(res.x) <= 1e-9


def test_mini_node_budget():
    from gridmesh.lp_core import NodeBudgetExceeded
    rng = np.random.default_rng(3)
    values = rng.integers(10, 30, 14).astype(float)
    weights = values + rng.random(14)
    with pytest.raises(NodeBudgetExceeded):
        solve_exact_mini(knapsack_model(values, weights, weights.sum() / 2), gap=0.0, node_limit=3)


# -- PWL ----------------------------------------------------------------------

def test_tangent_cut_touches():
    s, b = tangent_cut(3.0, 1.0)
    assert s == 4.0 and s * 3.0 + b == 4.0


def test_uniform_k2_gap_is_quarter():
    pts = uniform_points(0.0, 1.0, 2)
    x = np.linspace(0, 1, 1001)
    gap = np.max(x ** 2 - pwl_envelope(x, 0.0, pts))
    assert gap == pytest.approx(0.25)
    assert dense_envelope_gap(0.0, pts, 0.0, 1.0) == pytest.approx(0.25)


@pytest.mark.parametrize("k,expected", [(2, 0.25), (5, 0.015625), (16, 1 / 900)])
def test_uniform_gap_equals_bound(k, expected):
    pts = uniform_points(0.0, 1.0, k)
    assert dense_envelope_gap(0.0, pts, 0.0, 1.0) == pytest.approx(expected, rel=1e-6)


def test_centered_points_cluster_at_vertex():
    pts = centered_points(3.0, 0.0, 10.0, 8, min_offset=0.01)
    assert len(pts) == 8
    assert np.all(np.diff(pts) > 0)
    assert min(abs(pts - 3.0)) == pytest.approx(0.01)
    assert max(pts) == pytest.approx(10.0)
    assert len(centered_points(3.0, 0.0, 10.0, 7)) == 7


def test_envelope_segments_reproduce_envelope():
    pts = centered_points(2.0, 0.0, 9.0, 10, 0.05)
    right, left = envelope_segments(2.0, pts)
    assert math.isinf(right[-1][1]) and math.isinf(left[-1][1])

    def walk(segs, d):
        val = 0.0
        for slope, length in segs:
            step = min(d, length)
            val += slope * step
            d -= step
            if d <= 0:
                break
        return val

    for x in np.linspace(0.0, 9.0, 301):
        seg = walk(right, x - 2.0) if x >= 2.0 else walk(left, 2.0 - x)
        assert seg == pytest.approx(float(pwl_envelope(x, 2.0, pts)), abs=1e-9)


def _pwl_min(form, c, target, k=9):
    """Penalty value of a PWL block with ``x`` pinned at ``target``."""
    m = ModelIR()
    x = m.add_var("x", 0.0, 10.0)
    m.add_constraint({x: 1.0}, EQ, target)
    add_pwl_quadratic(m, x, c, 0.7, k, spacing="centered", form=form)
    return solve(m).objective


@pytest.mark.parametrize("target", [0.0, 1.3, 2.0, 2.01, 5.5, 10.0])
def test_pwl_forms_agree_with_envelope(target):
    pts = centered_points(2.0, 0.0, 10.0, 9)
    expected = 0.7 * float(pwl_envelope(target, 2.0, pts))
    assert _pwl_min("cuts", 2.0, target) == pytest.approx(expected, abs=1e-7)
    assert _pwl_min("segments", 2.0, target) == pytest.approx(expected, abs=1e-7)


def test_pwl_zero_weight_and_errors():
    m = ModelIR()
    x = m.add_var("x", 0.0, 1.0)
    assert add_pwl_quadratic(m, x, 0.5, 0.0) is None and m.n_vars == 1
    with pytest.raises(ModelError):
        add_pwl_quadratic(m, x, 0.5, -1.0)
    with pytest.raises(ModelError):
        add_pwl_quadratic(m, x, 0.5, 1.0, form="spline")
    free = m.add_var("f", 0.0)
    with pytest.raises(ModelError):
        add_pwl_quadratic(m, free, 0.5, 1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10), st.integers(2, 12), st.floats(-3, 3))
def test_pwl_forms_equivalent_in_optimization(c, a, k, lin):
    vals = []
    for form in ("cuts", "segments"):
        m = ModelIR()
        x = m.add_var("x", 0.0, 10.0)
        m.add_objective({x: lin})
        add_pwl_quadratic(m, x, c, 1.0, k, spacing="uniform", form=form)
        m.add_constraint({x: 1.0}, GE, min(a, 10.0) / 2)
        vals.append(solve(m).objective)
    assert vals[0] == pytest.approx(vals[1], abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(0.01, 4), st.integers(2, 20))
def test_envelope_is_underestimator(c, width, k):
    pts = uniform_points(c - width, c + width, k)
    x = np.linspace(c - 2 * width, c + 2 * width, 401)
    env = pwl_envelope(x, c, pts)
    assert np.all(env <= (x - c) ** 2 + 1e-9)
    h = 2 * width / (k - 1)
    inside = np.abs(x - c) <= width
    assert np.max(((x - c) ** 2 - env)[inside]) <= h * h / 4 + 1e-9


# -- QP polish ----------------------------------------------------------------

@pytest.mark.skipif(not qp_available(), reason="highspy missing")
def test_diag_qp_matches_closed_form():
    m = ModelIR()
    x, y = m.add_var("x", 0.0, 10.0), m.add_var("y", 0.0, 10.0)
    b = m.add_binary("b")
    m.add_constraint({x: 1.0, y: 1.0}, EQ, 4.0)
    m.add_constraint({y: 1.0, b: -10.0}, LE, 0.0)
    # min (x-3)^2 + (y-3)^2 with x + y = 4 -> x = y = 2, when b = 1
    m.add_objective({x: -6.0, y: -6.0}, 18.0)
    res = solve_diag_qp(m, {x: 2.0, y: 2.0}, fixed=np.array([0.0, 0.0, 1.0]))
    assert res.optimal
    assert res.x[:2] == pytest.approx([2.0, 2.0], abs=1e-6)
    assert res.objective == pytest.approx(2.0, abs=1e-6)
    res0 = solve_diag_qp(m, {x: 2.0, y: 2.0}, fixed=np.array([0.0, 0.0, 0.0]))
    assert res0.x[:2] == pytest.approx([4.0, 0.0], abs=1e-6)
    with pytest.raises(SolverError):
        solve_diag_qp(m, {x: 1.0})
    with pytest.raises(SolverError):
        solve_diag_qp(m, {x: -1.0}, fixed=np.zeros(3))


# -- MPS ----------------------------------------------------------------------

def test_mps_structure():
    m = knapsack_model([6.0, 10.0], [1.0, 2.0], 2.0)
    text = export_mps(m)
    for section in ("NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"):
        assert section in text
    assert "MARKER" in text
    assert export_mps(m) == text


@pytest.mark.skipif(not qp_available(), reason="highspy missing")
def test_mps_round_trip_through_highs(tmp_path, tiny):
    import highspy

    from gridmesh.microgrid_model import build_cem
    model = build_cem(tiny).model
    path = tmp_path / "cem.mps"
    path.write_text(export_mps(model))
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", 0.0)
    h.readModel(str(path))
    h.run()
    assert h.getInfo().objective_function_value == pytest.approx(solve(model).objective, abs=1e-7)
