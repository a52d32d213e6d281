"""Kasner exponents, epoch segmentation, and tail-limit estimation."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bklcone import (
    Chart,
    IntegratorParams,
    KasnerTriple,
    charts,
    epoch_segments,
    epochs,
    exact_state,
    integrate,
    kasner_exponents,
    limit_estimates,
)

EPS = np.finfo(float).eps

velocity_component = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)
# scale-invariance claims hold in the normal float range; a subnormal component
# loses bits when multiplied by k < 1
normal_component = st.one_of(
    st.just(0.0),
    st.floats(min_value=1e-6, max_value=10.0),
    st.floats(min_value=-10.0, max_value=-1e-6),
)


# ---------------------------------------------------------------------------
# Kasner exponents
# ---------------------------------------------------------------------------


def test_canonical_kasner_point():
    triple = kasner_exponents((-1.0, 2.0, 2.0))
    np.testing.assert_allclose(triple.as_array(), (-1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0), rtol=1e-15)
    assert triple.quadratic_residual <= 1e-15


def test_degenerate_kasner_point():
    for k in (0.5, -3.0):
        triple = kasner_exponents((0.0, 0.0, k))
        assert triple.as_array().tolist() == [0.0, 0.0, 1.0]
        assert triple.quadratic_residual == 0.0


def test_cone_point_from_diag_velocity():
    """g = (-1, -sqrt(3), 0) lies on the cone; its log-chart image gives
    exponents satisfying both Kasner conditions."""
    s3 = math.sqrt(3.0)
    xdot = charts.linear_map(Chart.DIAG, Chart.LOG) @ np.array([-1.0, -s3, 0.0])
    np.testing.assert_allclose(xdot, (s3 - 1.0, -1.0, -1.0 - s3), rtol=1e-15)
    triple = kasner_exponents(xdot)
    want = ((1.0 - s3) / 3.0, 1.0 / 3.0, (1.0 + s3) / 3.0)
    np.testing.assert_allclose(triple.as_array(), want, rtol=1e-14)
    assert triple.as_array().sum() == pytest.approx(1.0, abs=1e-15)
    assert triple.quadratic_residual <= 1e-12


@settings(max_examples=200)
@given(xdot=st.tuples(velocity_component, velocity_component, velocity_component))
def test_exponents_sum_to_one(xdot):
    s = (xdot[0] + xdot[1]) + xdot[2]
    if abs(s) <= 1e-12 * (abs(xdot[0]) + abs(xdot[1]) + abs(xdot[2])) or s == 0.0:
        with pytest.raises(epochs.DegenerateVelocityError):
            kasner_exponents(xdot)
        return
    p = kasner_exponents(xdot).as_array()
    if abs(p[2]) <= 1.0:
        # spacing of the p3 grid is fine enough here that an exactly-summing
        # p3 always exists, and from_raw must land on it
        assert (p[0] + p[1]) + p[2] == 1.0
    else:
        scale = max(1.0, float(np.max(np.abs(p))))
        assert abs((p[0] + p[1]) + p[2] - 1.0) <= 4.0 * EPS * scale


@settings(max_examples=100)
@given(xdot=st.tuples(normal_component, normal_component, normal_component))
def test_scale_invariance_for_binary_factors(xdot):
    """Powers of two commute with every float operation involved."""
    s = (xdot[0] + xdot[1]) + xdot[2]
    if abs(s) <= 1e-6:
        return
    base = kasner_exponents(xdot).as_array()
    for k in (0.25, 2.0, 1024.0, -0.5):
        scaled = kasner_exponents(tuple(k * x for x in xdot)).as_array()
        np.testing.assert_array_equal(scaled, base)


@settings(max_examples=100)
@given(
    xdot=st.tuples(normal_component, normal_component, normal_component),
    k=st.floats(min_value=0.1, max_value=10.0, allow_nan=False),
)
def test_scale_invariance_for_generic_factors(xdot, k):
    s = (xdot[0] + xdot[1]) + xdot[2]
    if abs(s) <= 1e-6 or k == 0.0:
        return
    base = kasner_exponents(xdot).as_array()
    scaled = kasner_exponents(tuple(k * x for x in xdot)).as_array()
    # each k*x rounds once; a cancelling sum amplifies those rounding errors
    # by sum|x| / |sum x| before they reach the quotient
    cond = (abs(xdot[0]) + abs(xdot[1]) + abs(xdot[2])) / abs(s)
    tol = 8.0 * EPS * cond * np.maximum(np.abs(base), 1.0)
    assert np.all(np.abs(scaled - base) <= tol)


def test_vanishing_sum_is_degenerate():
    with pytest.raises(epochs.DegenerateVelocityError):
        kasner_exponents((1.0, -1.0, 0.0))


def test_triple_normalization_is_enforced():
    with pytest.raises(ValueError):
        KasnerTriple(0.5, 0.2, 0.2)


# ---------------------------------------------------------------------------
# epoch segmentation
# ---------------------------------------------------------------------------


def test_exact_trajectory_has_no_epochs(exact_traj):
    """Cone-closeness sits at 23/27 for the whole run, far above delta."""
    assert epoch_segments(exact_traj, [], delta=0.01) == []
    closeness = epochs.cone_closeness(exact_traj.dense_state_diag[:, 3:])
    np.testing.assert_allclose(closeness, 23.0 / 27.0, rtol=1e-8)


def test_generic_epochs_satisfy_kasner_conditions(generic_records):
    assert len(generic_records) >= 1
    for rec in generic_records:
        assert rec.t_start < rec.t_end
        assert rec.kasner_quadratic_residual < 1e-2
        assert rec.triple.negative_count == 1
        assert rec.eps_entry > 0 and rec.eps_exit > 0
        assert rec.mean_closeness < 0.01


def test_delta_one_covers_interreflection_intervals(generic_traj, generic_events):
    """Inside the cone closeness < 1 always, so delta=1 epochs span each
    interval between consecutive reflections entirely (an epoch needs a
    bounding reflection on both sides for its entry/exit labels)."""
    records = epoch_segments(generic_traj, generic_events, delta=1.0)
    assert len(records) == len(generic_events) - 1
    dt = generic_traj.params.dense_sample_dt
    for rec, ev_in, ev_out in zip(records, generic_events[:-1], generic_events[1:]):
        assert abs(rec.t_start - ev_in.t) <= 2 * dt
        assert abs(rec.t_end - ev_out.t) <= 2 * dt
        assert rec.eps_entry == ev_in.epsilon
        assert rec.eps_exit == ev_out.epsilon


def test_generic_epochs_match_fine_grid_refit(generic_config, generic_records):
    """Oracle: re-integrate with 10x denser sampling and re-fit the epochs."""
    params = generic_config.params
    fine = integrate(
        generic_config.ic,
        IntegratorParams(
            t_end=params.t_end,
            rel_tol=params.rel_tol,
            abs_tol=params.abs_tol,
            dense_sample_dt=params.dense_sample_dt / 10.0,
        ),
    )
    from bklcone import detect_reflections

    fine_records = epoch_segments(fine, detect_reflections(fine), delta=0.01)
    assert len(fine_records) == len(generic_records)
    for coarse, refit in zip(generic_records, fine_records):
        np.testing.assert_allclose(
            coarse.triple.as_array(), refit.triple.as_array(), atol=1e-4
        )
        assert refit.kasner_quadratic_residual < 1e-2


# ---------------------------------------------------------------------------
# limit estimates
# ---------------------------------------------------------------------------


def test_exact_limits_head_for_the_apex(exact_traj):
    rep = limit_estimates(exact_traj, tail_fraction=0.2)
    # u' = (-3,-2,0)/tau: over the tail window the means are O(1/horizon)
    assert np.max(np.abs(rep.g)) < 0.05
    assert abs(rep.g[1] / rep.g[0] - 2.0 / 3.0) < 1e-6
    assert rep.classification == "apex-trending"
    for verdict in rep.monotone.values():
        assert verdict.ok


def test_limit_report_velocity_bounds(generic_traj):
    rep = limit_estimates(generic_traj, tail_fraction=0.5)
    g1, g2, g3 = rep.g
    slack = 1e-6 + 0.05 * abs(g1)
    assert abs(g2) <= math.sqrt(3.0) * abs(g1) + slack
    assert abs(g3) <= abs(g1) + slack


def test_generic_gammas_shrink_toward_zero(generic_traj):
    rep = limit_estimates(generic_traj, tail_fraction=0.5)
    w = np.abs(np.asarray(rep.gamma_windows))
    # gamma_1, gamma_2 window magnitudes decrease window-over-window
    assert np.all(np.diff(w[:, 0]) < 0)
    assert np.all(np.diff(w[:, 1]) < 0)
    # the third combination stays non-positive while trending up to 0
    assert rep.gamma[2] <= 0.0
    assert w[-1, 2] <= w[0, 2]


def test_short_tail_is_rejected():
    traj = integrate(exact_state(1.0), IntegratorParams(t_end=3.0, dense_sample_dt=0.02))
    with pytest.raises(epochs.InsufficientSamplesError):
        limit_estimates(traj, tail_fraction=0.5)
