"""Right-hand sides of the collapse equations in each chart, the
kinetic/potential energy split, and the residual diagnostics that the
integrator and the verification suite monitor.

In the DIAG chart the equations of motion are

    u1'' = E1/3
    u2'' = E1 - (E2 + E3)/2        ( = E1 - e^{u2} cosh(3 u3) )
    u3'' = E1/3 - (E2 - E3)/2      ( = E1/3 - e^{u2} sinh(3 u3) )

with the three wall terms

    E1 = e^{2(u1 - u2 - u3)} = a^2,   E2 = e^{u2 + 3 u3} = b/a,
    E3 = e^{u2 - 3 u3} = c/b,

all strictly positive.  The conserved first integral splits as

    H = E_kin - E_pot_sum,   E_kin = 3 u1'^2 - u2'^2 - 3 u3'^2,

and E_kin > 0 (with u1' < 0 for collapse) confines the velocity to the
lower interior of the kinetic-energy cone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .charts import (
    COUPLING,
    Chart,
    ChartError,
    DiagChart,
    PhasePoint,
    RatioChart,
    ScaleFactors,
    convert,
)

__all__ = [
    "EXP_GUARD",
    "OverflowGuardError",
    "IndeterminateError",
    "EnergySplit",
    "RhsResult",
    "rhs_u",
    "rhs_y",
    "rhs_abc",
    "constraint_residual",
    "acceleration_identity_residual",
    "third_equation_residual",
]

# exp() arguments beyond this abort the integration instead of producing inf
EXP_GUARD = 700.0


class OverflowGuardError(FloatingPointError):
    """A wall-term exponent exceeded the overflow guard.

    Raised by the RHS operators; the integrator turns this into an
    abort-with-partial-results, it is never silently swallowed.
    """

    def __init__(self, exponents):
        self.exponents = tuple(float(v) for v in exponents)
        super().__init__(
            f"wall-term exponent beyond guard ({EXP_GUARD:g}): {self.exponents}"
        )


class IndeterminateError(ArithmeticError):
    """The reconstructed third equation is degenerate at this point."""


@dataclass(frozen=True)
class EnergySplit:
    """Kinetic and potential parts of the first integral.

    ``total`` is kinetic + potential by construction; on an exact
    solution it vanishes, and its drift is the integration-quality
    monitor.  ``potential`` is minus the sum of the three wall terms,
    so it is always negative and ``kinetic`` is positive on
    constrained states.
    """

    kinetic: float
    potential: float

    @property
    def total(self) -> float:
        return self.kinetic + self.potential

    @property
    def drift_ratio(self) -> float:
        """|H| relative to the kinetic energy."""
        return abs(self.total) / self.kinetic


@dataclass(frozen=True)
class RhsResult:
    """Accelerations plus the wall terms they were built from.

    ``exp_terms`` are the three strictly positive exponentials
    (a^2, b/a, c/b); exposing them lets callers reuse them for energy
    bookkeeping without re-exponentiating.
    """

    accel: tuple
    exp_terms: tuple


def _wall_terms_u(u1: float, u2: float, u3: float) -> tuple:
    args = (2.0 * (u1 - u2 - u3), u2 + 3.0 * u3, u2 - 3.0 * u3)
    if max(args) > EXP_GUARD:
        raise OverflowGuardError(args)
    return (math.exp(args[0]), math.exp(args[1]), math.exp(args[2]))


def _accel_u(e1: float, e2: float, e3: float) -> tuple:
    # cosh/sinh of 3*u3 assembled from the two wall exponentials
    ch = 0.5 * (e2 + e3)
    sh = 0.5 * (e2 - e3)
    return (e1 / 3.0, e1 - ch, e1 / 3.0 - sh)


def rhs_u(u: DiagChart) -> RhsResult:
    """Second derivatives of the DIAG coordinates."""
    e1, e2, e3 = _wall_terms_u(u.u1, u.u2, u.u3)
    return RhsResult(accel=_accel_u(e1, e2, e3), exp_terms=(e1, e2, e3))


def rhs_y(y: RatioChart) -> RhsResult:
    """Second derivatives of the RATIO coordinates: M @ (e^y1, e^y2, e^y3)."""
    args = (y.y1, y.y2, y.y3)
    if max(args) > EXP_GUARD:
        raise OverflowGuardError(args)
    e = (math.exp(y.y1), math.exp(y.y2), math.exp(y.y3))
    m = COUPLING.rows
    accel = tuple(
        m[i][0] * e[0] + m[i][1] * e[1] + m[i][2] * e[2] for i in range(3)
    )
    return RhsResult(accel=accel, exp_terms=e)


def rhs_abc(sf: ScaleFactors) -> RhsResult:
    """Second derivatives of (ln a, ln b, ln c) given the scale factors."""
    a2 = sf.a * sf.a
    ba = sf.b / sf.a
    cb = sf.c / sf.b
    if not all(map(math.isfinite, (a2, ba, cb))):
        la, lb, lc = math.log(sf.a), math.log(sf.b), math.log(sf.c)
        raise OverflowGuardError((2.0 * la, lb - la, lc - lb))
    return RhsResult(
        accel=(ba - a2, a2 - ba + cb, a2 - cb),
        exp_terms=(a2, ba, cb),
    )


def accel_u_jacobian(u) -> np.ndarray:
    """Derivative of the DIAG accelerations with respect to the positions.

    Row i is the gradient of u_i'' in (u1, u2, u3).  All entries are
    integer combinations of the wall terms; e.g. the (1,1) entry is
    2 E1/3 = 2 u1''.
    """
    arr = u.as_array() if hasattr(u, "as_array") else np.asarray(u, dtype=float)
    e1, e2, e3 = _wall_terms_u(arr[0], arr[1], arr[2])
    ch = 0.5 * (e2 + e3)
    sh = 0.5 * (e2 - e3)
    t1 = 2.0 * e1 / 3.0
    return np.array([
        [t1, -t1, -t1],
        [2.0 * e1, -2.0 * e1 - ch, -2.0 * e1 - 3.0 * sh],
        [t1, -t1 - sh, -t1 - 3.0 * ch],
    ])


# --- raw-array fast paths used by the integrator --------------------------

def wall_terms_u_arr(u: np.ndarray) -> tuple:
    return _wall_terms_u(u[0], u[1], u[2])


def accel_u_arr(u: np.ndarray) -> np.ndarray:
    return np.array(_accel_u(*_wall_terms_u(u[0], u[1], u[2])))


def energy_split_arr(u: np.ndarray, du: np.ndarray) -> EnergySplit:
    e1, e2, e3 = _wall_terms_u(u[0], u[1], u[2])
    kin = 3.0 * du[0] ** 2 - du[1] ** 2 - 3.0 * du[2] ** 2
    return EnergySplit(kinetic=kin, potential=-(e1 + e2 + e3))


def kinetic_arr(du) -> np.ndarray:
    du = np.asarray(du)
    return 3.0 * du[..., 0] ** 2 - du[..., 1] ** 2 - 3.0 * du[..., 2] ** 2


# --- residual diagnostics -------------------------------------------------

def constraint_residual(point: PhasePoint) -> EnergySplit:
    """Kinetic/potential split of the first integral at a phase point.

    Works in any chart (converts to DIAG internally); ``total`` is the
    constraint residual H.
    """
    p = convert(point, Chart.DIAG)
    return energy_split_arr(p.position.as_array(), p.velocity.as_array())


def acceleration_identity_residual(point: PhasePoint) -> float:
    """Residual of the identity 2 u2'' - 9 u1'' + E_kin = H.

    On a constrained state (H = 0) the combination 9 u1'' - 2 u2''
    reproduces the kinetic energy exactly; the returned value is
    2 u2'' - 9 u1'' + E_kin, which equals H identically in exact
    arithmetic whether or not the point is constrained.
    """
    p = convert(point, Chart.DIAG)
    r = rhs_u(p.position)
    kin = kinetic_arr(p.velocity.as_array())
    return 2.0 * r.accel[1] - 9.0 * r.accel[0] + float(kin)


def acceleration_identity_scale(point: PhasePoint) -> float:
    """Magnitude scale of the terms entering the acceleration identity.

    Used to turn the raw residual into a relative one: the natural
    yardstick is the sum of the magnitudes of everything that was
    added, |2 u2''| + |9 u1''| + 3 u1'^2 + u2'^2 + 3 u3'^2.
    """
    p = convert(point, Chart.DIAG)
    r = rhs_u(p.position)
    du = p.velocity.as_array()
    return (
        abs(2.0 * r.accel[1])
        + abs(9.0 * r.accel[0])
        + 3.0 * du[0] ** 2
        + du[1] ** 2
        + 3.0 * du[2] ** 2
    )


#: |x1' + x2'| below this multiple of the velocity scale counts as degenerate
THIRD_EQ_DEGENERACY_TOL = 1e-8


def third_equation_residual(point: PhasePoint) -> float:
    """Consistency of the third equation with the first two plus the
    differentiated constraint.

    Differentiating the first integral in the LOG chart and substituting
    the first two equations of motion solves for x3''; the residual is
    that reconstruction minus the direct right-hand side a^2 - c/b.  The
    solve divides by x1' + x2', so points where that sum (relative to
    the velocity scale) is negligible are reported as indeterminate
    rather than returning a garbage ratio.
    """
    p = convert(point, Chart.LOG)
    dx = p.velocity.as_array()
    sf = convert(point, Chart.SCALE).position
    r = rhs_abc(sf)
    a2, ba, cb = r.exp_terms

    denom = dx[0] + dx[1]
    scale = abs(dx[0]) + abs(dx[1]) + abs(dx[2])
    if abs(denom) <= THIRD_EQ_DEGENERACY_TOL * max(scale, 1.0):
        raise IndeterminateError(
            f"x1' + x2' = {denom:.3e} is degenerate relative to the "
            f"velocity scale {scale:.3e}; third equation not reconstructible here"
        )

    # d/dt of the potential side a^2 + b/a + c/b
    dpot = 2.0 * dx[0] * a2 + (dx[1] - dx[0]) * ba + (dx[2] - dx[1]) * cb
    # d/dt of the kinetic side x1'x2' + x1'x3' + x2'x3'
    ddx1, ddx2 = r.accel[0], r.accel[1]
    x3dd_implied = (dpot - ddx1 * (dx[1] + dx[2]) - ddx2 * (dx[0] + dx[2])) / denom
    return float(x3dd_implied - r.accel[2])
