"""The closed-form collapse solution, the linearised dynamics around it,
and the apex asymptotics it anchors.

The exact solution is, up to a time shift t0,

    a = 3/|tau|,  b = 30/|tau|^3,  c = 120/|tau|^5,   tau = t - t0,

the unique differentiable path into the apex of the kinetic-energy cone
(velocities u' = (-3, -2, 0)/tau -> 0).  Its wall terms are
(9, 10, 4)/tau^2 and its kinetic energy 23/tau^2.

Linearising the DIAG equations of motion around it and switching to
log-time s = ln tau turns the variational system into a
constant-coefficient one, w' = C w with w = (du, tau*du'); the
oscillatory eigenmodes of C carry the two instability frequencies and
the universal tau^{1/2} relative growth that perturbation_run measures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.signal import find_peaks

from . import dynamics
from .charts import Chart, DiagChart, PhasePoint, Velocity, convert, linear_map
from .integrator import Trajectory

__all__ = [
    "ExactParams",
    "PerturbationRun",
    "ApexReport",
    "SingularTimeError",
    "LinearityCapError",
    "FitFailureError",
    "NotApexApproachingError",
    "exact_state",
    "variational_matrix",
    "log_time_matrix",
    "perturbation_run",
    "apex_asymptotics",
    "WALL_COEFFS",
    "EXACT_KINETIC_COEFF",
    "APEX_LIMITS",
]

#: wall terms on the exact solution are WALL_COEFFS / tau^2
WALL_COEFFS = (9.0, 10.0, 4.0)
#: kinetic energy on the exact solution is EXACT_KINETIC_COEFF / tau^2
EXACT_KINETIC_COEFF = 23.0
#: asymptotic targets (y2 - y1, y3 - y1, d(1/y1')/dt) on the exact solution
APEX_LIMITS = (math.log(10.0 / 9.0), math.log(4.0 / 9.0), -0.5)


class SingularTimeError(ValueError):
    """Evaluation at or across the singular time t0."""


class LinearityCapError(RuntimeError):
    """The perturbation's relative size left the configured linear regime."""


class FitFailureError(RuntimeError):
    """The deviation spectrum has no two distinct peaks to fit."""


class NotApexApproachingError(ValueError):
    """apex_asymptotics needs a collapse-directed (kinetic-energy
    decaying) trajectory."""


@dataclass(frozen=True)
class ExactParams:
    """Singular time and which side of it is being evaluated."""

    t0: float = 0.0
    branch: int = 1

    def __post_init__(self):
        if self.branch not in (-1, 1):
            raise ValueError(f"branch must be +1 or -1, got {self.branch!r}")

    def tau(self, t: float) -> float:
        tau = t - self.t0
        if tau == 0.0:
            raise SingularTimeError(f"t = t0 = {self.t0!r} is singular")
        if tau * self.branch < 0.0:
            raise SingularTimeError(
                f"t={t!r} lies on the wrong side of t0={self.t0!r} "
                f"for branch {self.branch:+d}"
            )
        return tau


def exact_state(
    t: float, params: ExactParams = ExactParams(), chart: Chart | str = Chart.DIAG
) -> PhasePoint:
    """Closed-form state at time t, in the requested chart."""
    chart = Chart.parse(chart)
    tau = params.tau(t)
    s = abs(tau)
    ls = math.log(s)
    # LOG-chart closed form; velocities are (-1,-3,-5)/tau
    x = np.array([math.log(3.0) - ls, math.log(30.0) - 3.0 * ls,
                  math.log(120.0) - 5.0 * ls])
    dx = np.array([-1.0, -3.0, -5.0]) / tau
    point = PhasePoint(
        t=float(t),
        position=DiagChart(*(linear_map(Chart.LOG, Chart.DIAG) @ x)),
        velocity=Velocity(Chart.DIAG, *(linear_map(Chart.LOG, Chart.DIAG) @ dx)),
    )
    return convert(point, chart)


def variational_matrix(t: float, params: ExactParams = ExactParams()) -> np.ndarray:
    """Jacobian of the first-order DIAG system along the exact solution.

    Block structure [[0, I], [P(tau), 0]] with P the position-derivative
    of the accelerations; the state ordering is (u, u').
    """
    u = exact_state(t, params).position  # validates t against t0/branch
    jac = np.zeros((6, 6))
    jac[:3, 3:] = np.eye(3)
    jac[3:, :3] = dynamics.accel_u_jacobian(u)
    return jac


def log_time_matrix() -> np.ndarray:
    """Constant matrix C of the log-time variational system w' = C w.

    With s = ln tau and w = (du, tau*du'), C = [[0, I], [K, I]] where
    K = tau^2 * P(tau) is tau-independent.
    """
    k = variational_matrix(1.0)[3:, :3]  # tau = 1, so K = P
    c = np.zeros((6, 6))
    c[:3, 3:] = np.eye(3)
    c[3:, :3] = k
    c[3:, 3:] = np.eye(3)
    return c


# The linearised constraint: dH = g.(w1 + w2) / tau^2 with g as below.
# Modes with eigenvalue != 2 satisfy dH = 0 identically, so the single
# constraint-violating direction is the eigenvalue-2 eigenvector; roundoff
# feeds it at every step and it would otherwise grow as tau^2.
_G_CONSTRAINT = np.array([-18.0, 4.0, 0.0])


def _constraint_functional(w: np.ndarray) -> float:
    return float(_G_CONSTRAINT @ (w[:3] + w[3:]))


def _bad_mode() -> np.ndarray:
    c = log_time_matrix()
    vals, vecs = np.linalg.eig(c)
    i = int(np.argmin(np.abs(vals - 2.0)))
    v = np.real(vecs[:, i])
    return v / _constraint_functional(v)


def _shift_mode_projector() -> np.ndarray:
    """Oblique projector removing the time-shift eigenmode (eigenvalue -1)."""
    c = log_time_matrix()
    vals, vecs = np.linalg.eig(c)
    lvals, lvecs = np.linalg.eig(c.T)
    i = int(np.argmin(np.abs(vals + 1.0)))
    j = int(np.argmin(np.abs(lvals + 1.0)))
    r = np.real(vecs[:, i])
    l = np.real(lvecs[:, j])
    return np.eye(6) - np.outer(r, l) / float(l @ r)


@dataclass
class PerturbationRun:
    """Sampled linearised deviation around the exact solution plus the
    fitted instability numbers.

    ``deviation`` rows are physical (du, du') DIAG deviations on the
    uniform log-time grid ``s`` (tau = t0 + e^s side of the branch).
    ``omega1 < omega2`` are the two dominant log-time angular
    frequencies; ``growth_exponent`` is the fitted slope of
    ln(|du'| / |u'|) against ln tau (the tau^{1/2} law gives 0.5) and
    ``amplitude_decay_exponent`` the slope of ln |du'| itself (-0.5:
    the oscillation amplitudes die even though their relative size
    grows).
    """

    s: np.ndarray
    deviation: np.ndarray
    omega1: float
    omega2: float
    omega_ratio: float
    growth_exponent: float
    amplitude_decay_exponent: float
    periods_spanned: float
    max_relative_ratio: float
    linear_cap: float
    fitted: bool


_VEL_SCALE = math.sqrt(9.0 + 4.0 + 0.0)  # |tau * u'| on the exact solution


def _fit_two_frequencies(s: np.ndarray, series: np.ndarray) -> tuple[float, float]:
    """Two dominant angular frequencies of a multicomponent series on a
    uniform grid, by Hann-windowed periodogram with parabolic peak
    interpolation."""
    n = len(s)
    ds = s[1] - s[0]
    win = np.hanning(n)
    detr = series - series.mean(axis=0)
    spec = np.zeros(4 * n + 1)
    for k in range(series.shape[1]):
        f = np.fft.rfft(detr[:, k] * win, n=8 * n)
        spec += np.abs(f) ** 2
    omega = 2.0 * np.pi * np.fft.rfftfreq(8 * n, d=ds)

    # ignore the window main lobe around DC
    lo = int(np.searchsorted(omega, 2.0 * np.pi / (n * ds) * 4.0))
    peaks, props = find_peaks(spec[lo:], height=spec.max() * 1e-6)
    if len(peaks) < 2:
        raise FitFailureError(
            f"found {len(peaks)} spectral peak(s); need two distinct ones"
        )
    order = np.argsort(props["peak_heights"])[::-1]
    picked = sorted(int(peaks[i]) + lo for i in order[:2])

    out = []
    for p in picked:
        # parabolic interpolation on log power
        y0, y1, y2 = np.log(spec[p - 1: p + 2])
        d = 0.5 * (y0 - y2) / (y0 - 2.0 * y1 + y2)
        out.append(float(omega[p] + d * (omega[1] - omega[0])))
    return out[0], out[1]


def perturbation_run(
    seed,
    horizon: float,
    params: ExactParams = ExactParams(),
    *,
    linear_cap: float = 1e-3,
    n_samples: int = 4096,
    transient_fraction: float = 0.05,
) -> PerturbationRun:
    """Propagate a (du, du') perturbation seeded at tau = 1 through the
    linearised dynamics over ``horizon`` units of log-time.

    The linear system is propagated exactly (matrix exponential of the
    constant log-time matrix per grid step), with the single
    constraint-violating direction projected out after every step so
    that roundoff cannot excite the unphysical tau^2 mode.  The seed's
    norm is the physical perturbation size: the run fails if the
    relative deviation |du'|/|u'| would exceed ``linear_cap`` anywhere
    on the horizon.
    """
    seed = np.asarray(seed, dtype=float).reshape(6)
    if not (horizon > 0 and math.isfinite(horizon)):
        raise ValueError(f"horizon must be positive, got {horizon!r}")
    del params  # the log-time system is t0-independent

    n = int(n_samples)
    s = np.linspace(0.0, horizon, n)
    ds = s[1] - s[0]

    amplitude = float(np.linalg.norm(seed))
    if amplitude == 0.0:
        return PerturbationRun(
            s=s, deviation=np.zeros((n, 6)),
            omega1=math.nan, omega2=math.nan, omega_ratio=math.nan,
            growth_exponent=math.nan, amplitude_decay_exponent=math.nan,
            periods_spanned=0.0, max_relative_ratio=0.0,
            linear_cap=linear_cap, fitted=False,
        )

    bad = _bad_mode()
    w0 = seed / amplitude
    w0 = w0 - _constraint_functional(w0) * bad

    step = expm(log_time_matrix() * ds)
    w = np.empty((n, 6))
    w[0] = w0
    for i in range(1, n):
        v = step @ w[i - 1]
        w[i] = v - _constraint_functional(v) * bad

    # physical deviations: du = w1, du' = w2 / tau = w2 * e^{-s}
    deviation = np.empty_like(w)
    deviation[:, :3] = amplitude * w[:, :3]
    deviation[:, 3:] = amplitude * w[:, 3:] * np.exp(-s)[:, np.newaxis]

    # relative size against the unperturbed velocities (|tau u'| = sqrt(13))
    rel = amplitude * np.linalg.norm(w[:, 3:], axis=1) / _VEL_SCALE
    max_rel = float(rel.max())
    if max_rel > linear_cap:
        raise LinearityCapError(
            f"relative deviation reaches {max_rel:.3e} > cap {linear_cap:.3e}; "
            "shrink the seed or the horizon"
        )

    # fits are done past the initial transient, on the detrended series
    i0 = int(transient_fraction * n)
    clean = w @ _shift_mode_projector().T
    detrended = clean[i0:] * np.exp(-0.5 * s[i0:])[:, np.newaxis]
    omega1, omega2 = _fit_two_frequencies(s[i0:], detrended)

    lnrel = np.log(rel[i0:])
    growth = float(np.polyfit(s[i0:], lnrel, 1)[0])
    lnamp = np.log(amplitude * np.linalg.norm(w[i0:, 3:], axis=1)) - s[i0:]
    decay = float(np.polyfit(s[i0:], lnamp, 1)[0])

    return PerturbationRun(
        s=s,
        deviation=deviation,
        omega1=omega1,
        omega2=omega2,
        omega_ratio=omega2 / omega1,
        growth_exponent=growth,
        amplitude_decay_exponent=decay,
        periods_spanned=horizon * omega1 / (2.0 * math.pi),
        max_relative_ratio=max_rel,
        linear_cap=linear_cap,
        fitted=True,
    )


# --- apex asymptotics -----------------------------------------------------

@dataclass
class ApexReport:
    """Tail estimates of the apex-approach observables.

    ``y2_minus_y1``, ``y3_minus_y1`` and ``d_inv_dy1_dt`` estimate the
    quantities whose exact-solution limits are ``asymptote``;
    ``asymptote_distance`` is the componentwise gap.  The direction
    ratios y2''/y1'' and y3''/y1'' settle to constants only on an
    apex-converging path; ``direction_converged`` says whether their
    oscillation amplitude stayed below threshold in every tail window.
    """

    y2_minus_y1: float
    y3_minus_y1: float
    d_inv_dy1_dt: float
    asymptote: tuple
    asymptote_distance: tuple
    du2_over_du1: float
    du3_over_du1: float
    direction_converged: bool
    ratio_window_amplitude: np.ndarray
    converge_threshold: float
    tail_t_start: float


def _lstsq_slope(t: np.ndarray, v: np.ndarray) -> float:
    tm = t - t.mean()
    return float((tm @ (v - v.mean())) / (tm @ tm))


def apex_asymptotics(
    traj: Trajectory,
    tail_fraction: float = 0.5,
    *,
    n_windows: int = 4,
    converge_threshold: float = 1e-3,
) -> ApexReport:
    """Estimate the apex-approach observables from a trajectory's tail.

    The trajectory must be collapse-directed: its kinetic energy must
    have decayed between the leading and trailing tenth of the run
    (velocities heading toward the apex), otherwise the asymptotic
    quantities have no meaning and NotApexApproachingError is raised.

    The default tail is the trailing half of the run: a convergence
    verdict needs a window long enough to span epoch transitions, not a
    single quasi-Kasner plateau on which the direction ratios are
    momentarily steady anyway.
    """
    if not 0.0 < tail_fraction < 1.0:
        raise ValueError(f"tail_fraction must be in (0,1), got {tail_fraction!r}")
    n = len(traj.dense_t)
    tenth = max(n // 10, 1)
    if not (np.mean(traj.dense_kinetic[-tenth:]) < np.mean(traj.dense_kinetic[:tenth])):
        raise NotApexApproachingError(
            "kinetic energy does not decay over this run; "
            "not a collapse-directed trajectory"
        )

    k = max(int(math.ceil(tail_fraction * n)), 2)
    t = traj.dense_t[-k:]
    states = traj.dense_state_diag[-k:]
    m = linear_map(Chart.DIAG, Chart.RATIO)
    y = states[:, :3] @ m.T
    dy = states[:, 3:] @ m.T
    du = states[:, 3:]

    walls = np.stack([
        np.exp(2.0 * (states[:, 0] - states[:, 1] - states[:, 2])),
        np.exp(states[:, 1] + 3.0 * states[:, 2]),
        np.exp(states[:, 1] - 3.0 * states[:, 2]),
    ], axis=1)
    ddy = walls @ dynamics.COUPLING.matrix.T

    est = (
        float(np.mean(y[:, 1] - y[:, 0])),
        float(np.mean(y[:, 2] - y[:, 0])),
        _lstsq_slope(t, 1.0 / dy[:, 0]),
    )

    ratios = ddy[:, 1:] / ddy[:, :1]
    bounds = np.linspace(0, k, n_windows + 1).astype(int)
    amp = np.array([
        np.max(ratios[a:b], axis=0) - np.min(ratios[a:b], axis=0)
        for a, b in zip(bounds[:-1], bounds[1:])
    ])
    converged = bool(np.all(amp < converge_threshold))

    return ApexReport(
        y2_minus_y1=est[0],
        y3_minus_y1=est[1],
        d_inv_dy1_dt=est[2],
        asymptote=APEX_LIMITS,
        asymptote_distance=tuple(abs(e - a) for e, a in zip(est, APEX_LIMITS)),
        du2_over_du1=float(np.mean(du[:, 1] / du[:, 0])),
        du3_over_du1=float(np.mean(du[:, 2] / du[:, 0])),
        direction_converged=converged,
        ratio_window_amplitude=amp,
        converge_threshold=converge_threshold,
        tail_t_start=float(t[0]),
    )
