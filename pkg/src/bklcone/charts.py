"""Coordinate charts for the anisotropic collapse system and the exact maps between them.

Four charts describe the same state:

* ``SCALE`` -- the directional scale factors ``(a, b, c)`` themselves;
* ``LOG``   -- their logarithms ``x_i = ln a, ln b, ln c``;
* ``DIAG``  -- the diagonalising combination ``u1 = ln(abc)/3``,
  ``u2 = ln(c/a)/2``, ``u3 = ln(b^2/(ac))/6`` that separates the volume
  scale (u1) from the shape degrees of freedom and makes the kinetic
  form of the dynamics diagonal;
* ``RATIO`` -- ``y1 = ln a^2``, ``y2 = ln(b/a)``, ``y3 = ln(c/b)``, the
  arguments of the three exponential wall terms.

All maps between the log-type charts (LOG, DIAG, RATIO) are exact
small-integer/rational linear transforms; only the exp/log step to and
from SCALE introduces rounding.  Chart tags are part of every value and
mixing charts raises ``ChartMismatchError`` rather than silently
producing nonsense.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "Chart",
    "ScaleFactors",
    "LogChart",
    "DiagChart",
    "RatioChart",
    "Velocity",
    "PhasePoint",
    "CouplingMatrix",
    "COUPLING",
    "ChartError",
    "ChartMismatchError",
    "ChartOverflowError",
    "NonPositiveScaleFactorError",
    "convert",
    "scale_map",
    "time_reverse",
]


class ChartError(ValueError):
    """Base class for chart conversion errors."""


class ChartMismatchError(ChartError, TypeError):
    """Position and velocity (or requested operation) disagree on the chart."""


class ChartOverflowError(ChartError, OverflowError):
    """exp() overflowed while converting into the scale-factor chart."""


class NonPositiveScaleFactorError(ChartError):
    """Log extraction requested for a non-positive scale factor."""


class Chart(enum.Enum):
    SCALE = "scale"
    LOG = "log"
    DIAG = "diag"
    RATIO = "ratio"

    @classmethod
    def parse(cls, tag: "Chart | str") -> "Chart":
        if isinstance(tag, cls):
            return tag
        try:
            return cls(str(tag).lower())
        except ValueError:
            raise ChartError(f"unknown chart tag {tag!r}") from None


def _require_finite(name: str, values) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ChartError(f"{name} has non-finite component {v!r}")


@dataclass(frozen=True)
class ScaleFactors:
    """Directional scale factors; all strictly positive."""

    a: float
    b: float
    c: float
    chart = Chart.SCALE

    def __post_init__(self):
        _require_finite("ScaleFactors", (self.a, self.b, self.c))
        if not (self.a > 0 and self.b > 0 and self.c > 0):
            raise NonPositiveScaleFactorError(
                f"scale factors must be positive, got {(self.a, self.b, self.c)}"
            )

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c])


@dataclass(frozen=True)
class LogChart:
    """Logarithms of the scale factors."""

    x1: float
    x2: float
    x3: float
    chart = Chart.LOG

    def __post_init__(self):
        _require_finite("LogChart", (self.x1, self.x2, self.x3))

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.x3])


@dataclass(frozen=True)
class DiagChart:
    """Volume/shape split: u1 is one third of the log volume."""

    u1: float
    u2: float
    u3: float
    chart = Chart.DIAG

    def __post_init__(self):
        _require_finite("DiagChart", (self.u1, self.u2, self.u3))

    def as_array(self) -> np.ndarray:
        return np.array([self.u1, self.u2, self.u3])


@dataclass(frozen=True)
class RatioChart:
    """Wall-term exponents y1 = ln a^2, y2 = ln(b/a), y3 = ln(c/b)."""

    y1: float
    y2: float
    y3: float
    chart = Chart.RATIO

    def __post_init__(self):
        _require_finite("RatioChart", (self.y1, self.y2, self.y3))

    def as_array(self) -> np.ndarray:
        return np.array([self.y1, self.y2, self.y3])


_POSITION_CLS = {
    Chart.SCALE: ScaleFactors,
    Chart.LOG: LogChart,
    Chart.DIAG: DiagChart,
    Chart.RATIO: RatioChart,
}

Position = ScaleFactors | LogChart | DiagChart | RatioChart


def position_from_array(chart: Chart, arr) -> Position:
    return _POSITION_CLS[Chart.parse(chart)](*(float(v) for v in arr))


@dataclass(frozen=True)
class Velocity:
    """Time derivatives of the chart coordinates, tagged with their chart."""

    chart: Chart
    d1: float
    d2: float
    d3: float

    def __post_init__(self):
        object.__setattr__(self, "chart", Chart.parse(self.chart))
        _require_finite("Velocity", (self.d1, self.d2, self.d3))

    def as_array(self) -> np.ndarray:
        return np.array([self.d1, self.d2, self.d3])


@dataclass(frozen=True)
class PhasePoint:
    """Time plus position and velocity in one chart.

    The time variable is the volume-rescaled time in which the
    singularity sits at t -> +infinity for a collapsing solution.
    """

    t: float
    position: Position
    velocity: Velocity

    def __post_init__(self):
        if not math.isfinite(self.t):
            raise ChartError(f"non-finite time {self.t!r}")
        if self.position.chart is not self.velocity.chart:
            raise ChartMismatchError(
                f"position chart {self.position.chart} != velocity chart "
                f"{self.velocity.chart}"
            )

    @property
    def chart(self) -> Chart:
        return self.position.chart


# --- exact rational transforms between the log-type charts ----------------
#
# Conventions (row i of a matrix gives coordinate i of the target chart):
#   x -> u:  u1 = (x1+x2+x3)/3,  u2 = (x3-x1)/2,  u3 = (2*x2-x1-x3)/6
#   u -> x:  x1 = u1-u2-u3,      x2 = u1+2*u3,    x3 = u1+u2-u3
#   x -> y:  y1 = 2*x1,          y2 = x2-x1,      y3 = x3-x2
#   y -> x:  x1 = y1/2,          x2 = y1/2+y2,    x3 = y1/2+y2+y3
# The same matrices transport velocities (the maps are constant linear).

def _frac_matrix(rows):
    return tuple(tuple(Fraction(v) for v in row) for row in rows)


LOG_TO_DIAG = _frac_matrix([
    [Fraction(1, 3), Fraction(1, 3), Fraction(1, 3)],
    [Fraction(-1, 2), 0, Fraction(1, 2)],
    [Fraction(-1, 6), Fraction(1, 3), Fraction(-1, 6)],
])
DIAG_TO_LOG = _frac_matrix([
    [1, -1, -1],
    [1, 0, 2],
    [1, 1, -1],
])
LOG_TO_RATIO = _frac_matrix([
    [2, 0, 0],
    [-1, 1, 0],
    [0, -1, 1],
])
RATIO_TO_LOG = _frac_matrix([
    [Fraction(1, 2), 0, 0],
    [Fraction(1, 2), 1, 0],
    [Fraction(1, 2), 1, 1],
])


def _compose(a, b):
    """Exact product of two rational 3x3 matrices."""
    return tuple(
        tuple(sum(a[i][k] * b[k][j] for k in range(3)) for j in range(3))
        for i in range(3)
    )


DIAG_TO_RATIO = _compose(LOG_TO_RATIO, DIAG_TO_LOG)
RATIO_TO_DIAG = _compose(LOG_TO_DIAG, RATIO_TO_LOG)

_LINEAR_MAPS = {
    (Chart.LOG, Chart.DIAG): LOG_TO_DIAG,
    (Chart.DIAG, Chart.LOG): DIAG_TO_LOG,
    (Chart.LOG, Chart.RATIO): LOG_TO_RATIO,
    (Chart.RATIO, Chart.LOG): RATIO_TO_LOG,
    (Chart.DIAG, Chart.RATIO): DIAG_TO_RATIO,
    (Chart.RATIO, Chart.DIAG): RATIO_TO_DIAG,
}
# float versions used at runtime; the Fraction originals stay exact for tests
_LINEAR_MAPS_F = {
    key: np.array([[float(v) for v in row] for row in mat])
    for key, mat in _LINEAR_MAPS.items()
}


def linear_map(source: Chart, target: Chart) -> np.ndarray:
    """Float 3x3 matrix of the exact linear map between two log-type charts."""
    return _LINEAR_MAPS_F[(Chart.parse(source), Chart.parse(target))]


def linear_map_exact(source: Chart, target: Chart):
    """The same map as a tuple-of-tuples of Fractions."""
    return _LINEAR_MAPS[(Chart.parse(source), Chart.parse(target))]


@dataclass(frozen=True)
class CouplingMatrix:
    """Integer coupling matrix of the wall-exponent accelerations and its
    exact rational inverse.

    The second derivatives of the RATIO coordinates are M applied to the
    vector of wall terms (e^{y1}, e^{y2}, e^{y3}).
    """

    rows: tuple = (
        (-2, 2, 0),
        (2, -2, 1),
        (0, 1, -2),
    )

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.rows, dtype=float)

    @property
    def exact(self):
        return _frac_matrix(self.rows)

    @property
    def inverse_exact(self):
        # hand-solved inverse; verified exactly by the determinant/product
        # invariants below and in the tests
        return _frac_matrix([
            [Fraction(3, 2), 2, 1],
            [2, 2, 1],
            [1, 1, 0],
        ])

    @property
    def inverse(self) -> np.ndarray:
        return np.array(
            [[float(v) for v in row] for row in self.inverse_exact]
        )

    def determinant_exact(self) -> Fraction:
        m = self.exact
        return (
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        )


COUPLING = CouplingMatrix()

_IDENTITY_EXACT = _frac_matrix([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
assert _compose(COUPLING.exact, COUPLING.inverse_exact) == _IDENTITY_EXACT
assert COUPLING.determinant_exact() == 2


# --- conversions ----------------------------------------------------------

def _to_log_arrays(point: PhasePoint) -> tuple[np.ndarray, np.ndarray]:
    """Position and velocity of ``point`` expressed in the LOG chart."""
    chart = point.chart
    pos = point.position.as_array()
    vel = point.velocity.as_array()
    if chart is Chart.LOG:
        return pos, vel
    if chart is Chart.SCALE:
        # velocities in SCALE are (da/dt, db/dt, dc/dt); d(ln a)/dt = adot/a
        return np.log(pos), vel / pos
    m = _LINEAR_MAPS_F[(chart, Chart.LOG)]
    return m @ pos, m @ vel


def convert(point: PhasePoint, target: Chart | str) -> PhasePoint:
    """Re-express a phase point in another chart.

    Between log-type charts this is the exact linear map applied to the
    position and the velocity together.  Conversion to SCALE
    exponentiates (total, but may overflow -- reported, never
    saturated); conversion out of SCALE requires positive factors.
    """
    target = Chart.parse(target)
    source = point.chart
    if target is source:
        return point

    if source is not Chart.SCALE and target is not Chart.SCALE:
        m = _LINEAR_MAPS_F[(source, target)]
        pos = m @ point.position.as_array()
        vel = m @ point.velocity.as_array()
    else:
        xpos, xvel = _to_log_arrays(point)
        if target is Chart.SCALE:
            with np.errstate(over="raise"):
                try:
                    pos = np.exp(xpos)
                except FloatingPointError:
                    raise ChartOverflowError(
                        f"exp overflow converting to scale factors: ln-values {xpos}"
                    ) from None
            if not np.all(np.isfinite(pos)):
                raise ChartOverflowError(
                    f"exp overflow converting to scale factors: ln-values {xpos}"
                )
            vel = pos * xvel  # da/dt = a * d(ln a)/dt
        else:
            m = _LINEAR_MAPS_F[(Chart.LOG, target)] if target is not Chart.LOG else np.eye(3)
            pos = m @ xpos
            vel = m @ xvel

    return PhasePoint(
        t=point.t,
        position=position_from_array(target, pos),
        velocity=Velocity(target, *(float(v) for v in vel)),
    )


# Per-chart position shifts of the scaling symmetry, as multiples of ln(lambda):
#   a -> a/l, b -> b/l^3, c -> c/l^5  =>  x -> x - ln(l)*(1,3,5)
_SCALING_SHIFT = {
    Chart.LOG: np.array([1.0, 3.0, 5.0]),
    Chart.DIAG: np.array([3.0, 2.0, 0.0]),
    Chart.RATIO: np.array([2.0, 2.0, 2.0]),
}


def scale_map(point: PhasePoint, lam: float) -> PhasePoint:
    """Apply the scaling symmetry t -> lam*t, a -> a/lam, b -> b/lam^3,
    c -> c/lam^5 (velocities pick up the chain-rule 1/lam on top)."""
    lam = float(lam)
    if not (lam > 0 and math.isfinite(lam)):
        raise ChartError(f"scaling parameter must be positive and finite, got {lam!r}")
    chart = point.chart
    if chart is Chart.SCALE:
        p = point.position
        v = point.velocity
        l2, l3 = lam * lam, lam * lam * lam
        l4, l5, l6 = l2 * l2, l2 * l3, l3 * l3
        pos = ScaleFactors(p.a / lam, p.b / l3, p.c / l5)
        vel = Velocity(Chart.SCALE, v.d1 / l2, v.d2 / l4, v.d3 / l6)
    else:
        shift = _SCALING_SHIFT[chart] * math.log(lam)
        pos = position_from_array(chart, point.position.as_array() - shift)
        vel = Velocity(chart, *(point.velocity.as_array() / lam))
    return PhasePoint(t=lam * point.t, position=pos, velocity=vel)


def time_reverse(point: PhasePoint) -> PhasePoint:
    """t -> -t with velocities negated; positions untouched."""
    v = point.velocity
    return PhasePoint(
        t=-point.t,
        position=point.position,
        velocity=Velocity(v.chart, -v.d1, -v.d2, -v.d3),
    )
