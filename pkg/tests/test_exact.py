"""Closed-form solution, its variational dynamics, and the instability fits."""
import math

import numpy as np
import pytest

from bklcone import (
    Chart,
    ExactParams,
    IntegratorParams,
    apex_asymptotics,
    constraint_residual,
    convert,
    dynamics,
    exact,
    exact_state,
    integrate,
    perturbation_run,
    rhs_abc,
    time_reverse,
    variational_matrix,
)

# Position block of the log-time variational system, frozen by hand from the
# wall terms (9, 10, 4)/tau^2 of the reference solution.  Its eigenvalues
# -24 +/- 6*sqrt(6) carry the oscillation frequencies; the remaining
# eigenvalue 2 belongs to the constraint-violating direction.
K_BLOCK = np.array(
    [
        [6.0, -6.0, -6.0],
        [18.0, -25.0, -27.0],
        [6.0, -9.0, -27.0],
    ]
)

SEED = 1e-20 * np.array([1.0, -1.0, 2.0, 1.0, 3.0, -2.0])


@pytest.fixture(scope="module")
def pert():
    return perturbation_run(SEED, horizon=67.0)


# ---------------------------------------------------------------------------
# closed form
# ---------------------------------------------------------------------------


def test_scale_factors_at_unit_time():
    p = exact_state(1.0, chart=Chart.SCALE)
    np.testing.assert_allclose(p.position.as_array(), (3.0, 30.0, 120.0), rtol=1e-15)


def test_scale_factors_at_two():
    p = exact_state(2.0, chart=Chart.SCALE)
    np.testing.assert_allclose(p.position.as_array(), (1.5, 3.75, 3.75), rtol=1e-15)


@pytest.mark.parametrize("tau", [0.1, 1.0, 10.0, 100.0])
def test_constraint_residual_vanishes_along_the_solution(tau):
    split = constraint_residual(exact_state(tau))
    assert abs(split.total) <= 1e-14 * split.kinetic


@pytest.mark.parametrize("tau", [0.1, 1.0, 10.0, 100.0])
def test_rhs_residuals_match_worked_values(tau):
    """d^2 ln(a,b,c)/dt^2 = (1,3,5)/tau^2 along the closed form."""
    sf = exact_state(tau, chart=Chart.SCALE).position
    got = np.asarray(rhs_abc(sf).accel)
    want = np.array([1.0, 3.0, 5.0]) / tau**2
    np.testing.assert_allclose(got, want, rtol=1e-13)


def test_velocities_scale_inversely_with_time():
    for tau in (1.0, 5.0):
        du = exact_state(tau).velocity.as_array()
        np.testing.assert_allclose(du, np.array([-3.0, -2.0, 0.0]) / tau, rtol=1e-15, atol=5e-16)


def test_time_shift_parameter():
    shifted = exact_state(3.0, ExactParams(t0=2.0))
    base = exact_state(1.0)
    assert shifted.t == 3.0
    np.testing.assert_array_equal(shifted.position.as_array(), base.position.as_array())
    np.testing.assert_array_equal(shifted.velocity.as_array(), base.velocity.as_array())


def test_singular_time_is_rejected():
    with pytest.raises(exact.SingularTimeError):
        exact_state(2.0, ExactParams(t0=2.0))


# ---------------------------------------------------------------------------
# variational matrix
# ---------------------------------------------------------------------------


def test_variational_block_structure():
    a = variational_matrix(1.7)
    assert a.shape == (6, 6)
    np.testing.assert_array_equal(a[:3, :3], np.zeros((3, 3)))
    np.testing.assert_array_equal(a[:3, 3:], np.eye(3))
    np.testing.assert_array_equal(a[3:, 3:], np.zeros((3, 3)))


def test_variational_position_block_matches_finite_differences():
    """Central-difference oracle at 20 random times, 1e-6 relative."""
    rng = np.random.default_rng(2024)
    h = 1e-6
    for tau in rng.uniform(0.5, 50.0, size=20):
        u0 = exact_state(float(tau)).position.as_array()
        block = variational_matrix(float(tau))[3:, :3]
        fd = np.empty((3, 3))
        for j in range(3):
            up = u0.copy(); up[j] += h
            dn = u0.copy(); dn[j] -= h
            from bklcone.charts import DiagChart
            fp = np.asarray(dynamics.rhs_u(DiagChart(*up)).accel)
            fm = np.asarray(dynamics.rhs_u(DiagChart(*dn)).accel)
            fd[:, j] = (fp - fm) / (2.0 * h)
        scale = np.max(np.abs(block))
        assert np.max(np.abs(block - fd)) <= 1e-6 * scale, tau


def test_diagonal_derivative_identities():
    """d(u1'')/du1 = 2 u1'' = 6/tau^2 and d(u1'')/du2 = -2 u1''."""
    for tau in (1.0, 3.0, 12.5):
        block = variational_matrix(tau)[3:, :3]
        assert block[0, 0] == pytest.approx(6.0 / tau**2, rel=1e-12)
        assert block[0, 1] == pytest.approx(-6.0 / tau**2, rel=1e-12)


def test_log_time_position_block_is_the_frozen_literal():
    np.testing.assert_allclose(variational_matrix(1.0)[3:, :3], K_BLOCK, rtol=1e-12)
    mu = np.sort(np.linalg.eigvals(K_BLOCK).real)
    want = np.sort([2.0, -24.0 + 6.0 * math.sqrt(6.0), -24.0 - 6.0 * math.sqrt(6.0)])
    np.testing.assert_allclose(mu, want, rtol=1e-12)


# ---------------------------------------------------------------------------
# perturbation run
# ---------------------------------------------------------------------------


def test_zero_seed_stays_identically_zero():
    run = perturbation_run((0.0,) * 6, horizon=67.0)
    assert not run.fitted
    assert np.all(run.deviation == 0.0)
    assert math.isnan(run.omega1)


def test_fitted_frequencies_match_the_eigenvalue_oracle(pert):
    """omega = sqrt(-mu - 1/4) for the two oscillatory eigenvalues of K."""
    mu = np.sort(np.linalg.eigvals(K_BLOCK).real)[:2]
    w_want = np.sqrt(-mu - 0.25)[::-1]  # ascending frequencies
    assert pert.fitted
    assert pert.omega1 == pytest.approx(w_want[0], rel=1e-4)
    assert pert.omega2 == pytest.approx(w_want[1], rel=1e-4)


def test_frequency_ratio_and_growth_exponent(pert):
    assert pert.omega_ratio == pytest.approx(2.06, abs=0.05)
    assert pert.growth_exponent == pytest.approx(0.5, abs=0.1)
    assert pert.periods_spanned >= 30.0


def test_amplitudes_decay_while_relative_ratio_grows(pert):
    """The two facts measured on the same run: oscillation amplitudes shrink,
    yet the deviation grows against the collapsing background."""
    assert pert.amplitude_decay_exponent == pytest.approx(-0.5, abs=0.1)
    assert pert.growth_exponent > 0.0
    assert pert.max_relative_ratio <= pert.linear_cap


def test_linearity_cap_is_enforced():
    with pytest.raises(exact.LinearityCapError):
        perturbation_run(SEED, horizon=67.0, linear_cap=1e-25)


# ---------------------------------------------------------------------------
# apex asymptotics
# ---------------------------------------------------------------------------


def test_exact_trajectory_reaches_the_asymptote(exact_traj):
    rep = apex_asymptotics(exact_traj, tail_fraction=0.2)
    assert rep.asymptote == (math.log(10.0 / 9.0), math.log(4.0 / 9.0), -0.5)
    assert max(rep.asymptote_distance) <= 1e-6
    assert rep.du2_over_du1 == pytest.approx(2.0 / 3.0, abs=1e-8)
    assert rep.du3_over_du1 == pytest.approx(0.0, abs=1e-8)
    assert rep.direction_converged


def test_generic_run_directions_do_not_converge(generic_traj):
    rep = apex_asymptotics(generic_traj)
    assert not rep.direction_converged


def test_expanding_trajectory_is_not_apex_approaching():
    traj = integrate(time_reverse(exact_state(4.0)), IntegratorParams(t_end=-1.0))
    with pytest.raises(exact.NotApexApproachingError):
        apex_asymptotics(traj)
