"""Chart values, exact linear maps, and the symmetry operations."""
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bklcone import (
    Chart,
    PhasePoint,
    ScaleFactors,
    Velocity,
    charts,
    constraint_residual,
    convert,
    exact_state,
    scale_map,
    time_reverse,
)

EPS = np.finfo(float).eps

coord = st.floats(min_value=-100.0, max_value=100.0, allow_nan=False)
triple = st.tuples(coord, coord, coord)
log_chart_tag = st.sampled_from([Chart.LOG, Chart.DIAG, Chart.RATIO])


def phase_point(chart, pos, vel, t=0.0):
    position = charts.position_from_array(chart, np.asarray(pos, dtype=float))
    return PhasePoint(t, position, Velocity(chart, *vel))


def assert_close_ulp(got, want, n_ulp):
    """Per-component closeness scaled by the vector magnitude (linear maps
    cannot do better than a few ulp of the largest component)."""
    got = np.asarray(got, dtype=float)
    want = np.asarray(want, dtype=float)
    scale = max(np.max(np.abs(want)), 1e-300)
    assert np.all(np.abs(got - want) <= n_ulp * EPS * scale), (got, want)


# ---------------------------------------------------------------------------
# worked chart values
# ---------------------------------------------------------------------------


def test_origin_is_fixed_by_linear_maps():
    p = phase_point(Chart.LOG, (0.0, 0.0, 0.0), (0.0, 0.0, 0.0))
    u = convert(p, Chart.DIAG)
    assert u.position.as_array().tolist() == [0.0, 0.0, 0.0]
    assert u.velocity.as_array().tolist() == [0.0, 0.0, 0.0]


def test_scale_factors_to_diag_worked_value():
    """a=3, b=30, c=120 lands on (ln(10800)/3, ln(40)/2, ln(5/2)/6)."""
    p = PhasePoint(0.0, ScaleFactors(3.0, 30.0, 120.0), Velocity(Chart.SCALE, 0.0, 0.0, 0.0))
    u = convert(p, Chart.DIAG).position.as_array()
    want = (math.log(10800.0) / 3.0, math.log(40.0) / 2.0, math.log(2.5) / 6.0)
    np.testing.assert_allclose(u, want, rtol=1e-14)


def test_scale_factors_to_ratio_worked_value():
    p = PhasePoint(0.0, ScaleFactors(3.0, 30.0, 120.0), Velocity(Chart.SCALE, 0.0, 0.0, 0.0))
    y = convert(p, Chart.RATIO).position.as_array()
    np.testing.assert_allclose(y, (math.log(9.0), math.log(10.0), math.log(4.0)), rtol=1e-14)


def test_chart_parse_accepts_tags_and_rejects_junk():
    assert Chart.parse("diag") is Chart.DIAG
    assert Chart.parse(Chart.SCALE) is Chart.SCALE
    with pytest.raises(ValueError):
        Chart.parse("euler")


# ---------------------------------------------------------------------------
# exact matrices
# ---------------------------------------------------------------------------


def test_coupling_matrix_is_exactly_invertible():
    m = charts.COUPLING
    assert m.determinant_exact() == 2
    prod = [
        [sum(m.exact[i][k] * m.inverse_exact[k][j] for k in range(3)) for j in range(3)]
        for i in range(3)
    ]
    assert prod == [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
    assert all(isinstance(v, Fraction) for row in prod for v in row)


@pytest.mark.parametrize(
    "fwd, back",
    [
        (charts.LOG_TO_DIAG, charts.DIAG_TO_LOG),
        (charts.LOG_TO_RATIO, charts.RATIO_TO_LOG),
        (charts.DIAG_TO_RATIO, charts.RATIO_TO_DIAG),
    ],
)
def test_chart_matrices_are_exact_inverse_pairs(fwd, back):
    prod = [
        [sum(fwd[i][k] * back[k][j] for k in range(3)) for j in range(3)] for i in range(3)
    ]
    assert prod == [[1, 0, 0], [0, 1, 0], [0, 0, 1]]


# ---------------------------------------------------------------------------
# round trips
# ---------------------------------------------------------------------------


@settings(max_examples=200)
@given(pos=triple, vel=triple, a=log_chart_tag, b=log_chart_tag)
def test_log_type_round_trip_within_4_ulp(pos, vel, a, b):
    p = phase_point(a, pos, vel)
    rt = convert(convert(p, b), a)
    assert_close_ulp(rt.position.as_array(), np.asarray(pos), 4)
    assert_close_ulp(rt.velocity.as_array(), np.asarray(vel), 4)


@settings(max_examples=100)
@given(pos=st.tuples(*[st.floats(min_value=-20.0, max_value=20.0, allow_nan=False)] * 3), vel=triple)
def test_scale_chart_round_trip(pos, vel):
    p = phase_point(Chart.LOG, pos, vel)
    rt = convert(convert(p, Chart.SCALE), Chart.LOG)
    np.testing.assert_allclose(rt.position.as_array(), pos, rtol=0, atol=4 * EPS * (np.max(np.abs(pos)) + 1))
    np.testing.assert_allclose(rt.velocity.as_array(), vel, rtol=4 * EPS, atol=4 * EPS * (np.max(np.abs(vel)) + 1))


def test_u1_is_third_of_log_volume():
    rng = np.random.default_rng(7)
    for _ in range(50):
        a, b, c = np.exp(rng.uniform(-5, 5, size=3))
        p = PhasePoint(0.0, ScaleFactors(a, b, c), Velocity(Chart.SCALE, 0.0, 0.0, 0.0))
        u1 = convert(p, Chart.DIAG).position.u1
        want = math.log(a * b * c) / 3.0
        assert abs(u1 - want) <= 4 * EPS * max(abs(want), 1.0)


# ---------------------------------------------------------------------------
# error paths
# ---------------------------------------------------------------------------


def test_velocity_tag_must_match_position():
    with pytest.raises(charts.ChartMismatchError):
        PhasePoint(0.0, charts.DiagChart(0.0, 0.0, 0.0), Velocity(Chart.LOG, 0.0, 0.0, 0.0))


def test_non_positive_scale_factor_rejected():
    with pytest.raises(charts.NonPositiveScaleFactorError):
        ScaleFactors(1.0, -2.0, 3.0)


def test_exp_overflow_is_reported_not_saturated():
    p = phase_point(Chart.LOG, (800.0, 0.0, 0.0), (0.0, 0.0, 0.0))
    with pytest.raises(charts.ChartOverflowError):
        convert(p, Chart.SCALE)


# ---------------------------------------------------------------------------
# scaling symmetry and time reversal
# ---------------------------------------------------------------------------


def test_scale_map_identity_at_lambda_one():
    p = exact_state(1.0)
    q = scale_map(p, 1.0)
    assert q.t == p.t
    np.testing.assert_array_equal(q.position.as_array(), p.position.as_array())
    np.testing.assert_array_equal(q.velocity.as_array(), p.velocity.as_array())


def test_scale_map_sends_exact_solution_to_itself():
    """Self-similarity: scaling the tau=1 state by lambda=2 gives the tau=2 state."""
    p = exact_state(1.0, chart=Chart.SCALE)
    q = scale_map(p, 2.0)
    want = exact_state(2.0, chart=Chart.SCALE)
    assert q.t == want.t == 2.0
    np.testing.assert_allclose(q.position.as_array(), want.position.as_array(), rtol=1e-15)
    np.testing.assert_allclose(q.velocity.as_array(), want.velocity.as_array(), rtol=1e-15)


@settings(max_examples=100)
@given(pos=triple, vel=triple, lam=st.floats(min_value=0.01, max_value=100.0, allow_nan=False))
def test_scale_map_group_inverse(pos, vel, lam):
    p = phase_point(Chart.DIAG, pos, vel, t=1.0)
    rt = scale_map(scale_map(p, lam), 1.0 / lam)
    # positions pick up shifts of up to 5*ln(lam); ln(1/lam) is not the exact
    # float negation of ln(lam), so the residual scales with |ln lam| too
    atol = 8 * EPS * (np.max(np.abs(pos)) + 6 * (1.0 + abs(math.log(lam))))
    np.testing.assert_allclose(rt.position.as_array(), pos, rtol=0, atol=atol)
    assert_close_ulp(rt.velocity.as_array(), np.asarray(vel), 8)
    assert abs(rt.t - 1.0) <= 8 * EPS


def test_scale_map_rejects_non_positive_lambda():
    with pytest.raises(ValueError):
        scale_map(exact_state(1.0), 0.0)
    with pytest.raises(ValueError):
        scale_map(exact_state(1.0), -2.0)


def test_time_reverse_negates_t_and_velocities_only():
    p = exact_state(3.0)
    r = time_reverse(p)
    assert r.t == -3.0
    np.testing.assert_array_equal(r.position.as_array(), p.position.as_array())
    np.testing.assert_array_equal(r.velocity.as_array(), -p.velocity.as_array())


def test_time_reverse_is_an_involution():
    p = exact_state(2.5)
    rr = time_reverse(time_reverse(p))
    assert rr.t == p.t
    np.testing.assert_array_equal(rr.position.as_array(), p.position.as_array())
    np.testing.assert_array_equal(rr.velocity.as_array(), p.velocity.as_array())


def test_time_reverse_preserves_constraint_residual_exactly():
    p = exact_state(1.0)
    assert constraint_residual(time_reverse(p)).total == constraint_residual(p).total
