"""Kasner-epoch segmentation and asymptotic-limit estimation.

Between two reflections the trajectory hugs the surface of the
kinetic-energy cone and the velocities sit nearly still; normalising
the LOG-chart velocities by their sum gives exponents p_i that nearly
satisfy both Kasner conditions (sum 1 and sum of squares 1).  The
closeness to the cone surface, E_k / (3 u1'^2), is the segmentation
criterion -- exactly on the surface the quadratic Kasner condition
holds identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .charts import Chart, Velocity, linear_map
from .integrator import ReflectionEvent, Trajectory, monotone_report

__all__ = [
    "KasnerTriple",
    "EpochRecord",
    "LimitReport",
    "DegenerateVelocityError",
    "InsufficientSamplesError",
    "kasner_exponents",
    "epoch_segments",
    "limit_estimates",
    "cone_closeness",
]

#: |sum of log-velocities| below this multiple of their magnitude scale is
#: treated as a vanishing sum (exponents undefined)
SUM_DEGENERACY_TOL = 1e-12


class DegenerateVelocityError(ZeroDivisionError):
    """Kasner exponents are undefined when the velocity sum vanishes."""


class InsufficientSamplesError(ValueError):
    """The requested tail window holds too few samples to estimate from."""


@dataclass(frozen=True)
class KasnerTriple:
    """Normalised expansion exponents with p1 + p2 + p3 = 1.

    Construct via :meth:`from_raw`, which drives the left-associated
    float sum to exactly 1.0 whenever a representable p3 exists (always
    the case for quasi-Kasner magnitudes, where p1 + p2 lies in [-1, 1]).
    The direct constructor tolerates at most a few ulp of residual, so a
    KasnerTriple can never silently carry an unnormalised triple.
    """

    p1: float
    p2: float
    p3: float

    def __post_init__(self):
        scale = max(1.0, abs(self.p1), abs(self.p2), abs(self.p3))
        if not abs((self.p1 + self.p2) + self.p3 - 1.0) <= 4.0 * np.finfo(float).eps * scale:
            raise ValueError(
                f"triple {(self.p1, self.p2, self.p3)} is not normalised; "
                "use KasnerTriple.from_raw"
            )

    @classmethod
    def from_raw(cls, q1: float, q2: float, q3: float) -> "KasnerTriple":
        """Normalise an arbitrary triple by its sum.

        p3 starts from 1 - (p1 + p2) and is nudged by at most one ulp so
        that the left-associated sum rounds to exactly 1.0.  For
        |p1 + p2| <= 1 an exact p3 always exists; for wildly unbalanced
        triples (components of order 1/tolerance) none may, and the
        constructor's few-ulp allowance covers the remainder.
        """
        s = (q1 + q2) + q3
        if s == 0.0 or not math.isfinite(s):
            raise DegenerateVelocityError(
                f"cannot normalise triple with sum {s!r}"
            )
        p1 = q1 / s
        p2 = q2 / s
        s12 = p1 + p2
        p3 = 1.0 - s12
        for _ in range(4):
            excess = (s12 + p3) - 1.0
            if excess == 0.0:
                break
            corrected = p3 - excess
            if corrected == p3:  # sub-ulp excess: step to the adjacent float
                corrected = math.nextafter(p3, -math.inf if excess > 0.0 else math.inf)
            p3 = corrected
        return cls(p1, p2, p3)

    def as_array(self) -> np.ndarray:
        return np.array([self.p1, self.p2, self.p3])

    @property
    def quadratic_residual(self) -> float:
        """|p1^2 + p2^2 + p3^2 - 1|; zero iff the triple is exactly Kasner."""
        return abs((self.p1 * self.p1 + self.p2 * self.p2) + self.p3 * self.p3 - 1.0)

    @property
    def negative_count(self) -> int:
        return sum(1 for p in (self.p1, self.p2, self.p3) if p < 0.0)


def kasner_exponents(xdot) -> KasnerTriple:
    """Kasner exponents of a LOG-chart velocity: p_i = x_i' / sum x_j'.

    ``xdot`` may be a Velocity tagged LOG or a plain 3-vector of
    (ln a)', (ln b)', (ln c)'.  The sum must not vanish relative to the
    component magnitudes.
    """
    if isinstance(xdot, Velocity):
        if xdot.chart is not Chart.LOG:
            raise TypeError(
                f"kasner_exponents expects a LOG-chart velocity, got {xdot.chart}"
            )
        v = xdot.as_array()
    else:
        v = np.asarray(xdot, dtype=float).reshape(3)
    s = (v[0] + v[1]) + v[2]
    scale = abs(v[0]) + abs(v[1]) + abs(v[2])
    if abs(s) <= SUM_DEGENERACY_TOL * scale or s == 0.0:
        raise DegenerateVelocityError(
            f"velocity sum {s:.3e} vanishes relative to scale {scale:.3e}; "
            "exponents undefined"
        )
    return KasnerTriple.from_raw(float(v[0]), float(v[1]), float(v[2]))


def cone_closeness(du: np.ndarray) -> np.ndarray:
    """E_k / (3 u1'^2): 1 at the cone axis, 0 on its surface."""
    du = np.asarray(du)
    ek = 3.0 * du[..., 0] ** 2 - du[..., 1] ** 2 - 3.0 * du[..., 2] ** 2
    return ek / (3.0 * du[..., 0] ** 2)


@dataclass(frozen=True)
class EpochRecord:
    """One quasi-Kasner interval between two reflections."""

    t_start: float
    t_end: float
    triple: KasnerTriple
    kasner_quadratic_residual: float
    eps_entry: float
    eps_exit: float
    mean_closeness: float

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError(
                f"epoch must have t_start < t_end, got [{self.t_start}, {self.t_end}]"
            )
        if not (self.eps_entry > 0.0 and self.eps_exit > 0.0):
            raise ValueError(
                f"reflection depths must be positive, got "
                f"{(self.eps_entry, self.eps_exit)}"
            )


def _longest_true_run(mask: np.ndarray) -> tuple[int, int] | None:
    """(start, stop) of the longest contiguous True run, stop exclusive."""
    if not mask.any():
        return None
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(int)))
    starts, stops = edges[::2], edges[1::2]
    i = int(np.argmax(stops - starts))
    return int(starts[i]), int(stops[i])


def epoch_segments(
    traj: Trajectory, events: list[ReflectionEvent], delta: float = 0.01
) -> list[EpochRecord]:
    """Quasi-Kasner epochs between consecutive reflections.

    Within each inter-reflection interval, the longest contiguous dense
    sub-interval with cone-closeness below ``delta`` becomes the epoch;
    its exponents come from the time-averaged LOG velocities over that
    sub-interval.  Fewer than two reflections means no epochs.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must be in (0, 1], got {delta!r}")
    if len(events) < 2:
        return []

    dstates = traj.dense_state_diag
    close = cone_closeness(dstates[:, 3:])
    to_log = linear_map(Chart.DIAG, Chart.LOG)

    records = []
    for left, right in zip(events[:-1], events[1:]):
        sel = (traj.dense_t >= left.t) & (traj.dense_t <= right.t)
        idx = np.flatnonzero(sel)
        if len(idx) < 2:
            continue
        run = _longest_true_run(close[idx] < delta)
        if run is None or run[1] - run[0] < 2:
            continue
        seg = idx[run[0]: run[1]]
        xdot_mean = dstates[seg, 3:].mean(axis=0) @ to_log.T
        triple = kasner_exponents(xdot_mean)
        records.append(EpochRecord(
            t_start=float(traj.dense_t[seg[0]]),
            t_end=float(traj.dense_t[seg[-1]]),
            triple=triple,
            kasner_quadratic_residual=triple.quadratic_residual,
            eps_entry=left.epsilon,
            eps_exit=right.epsilon,
            mean_closeness=float(close[seg].mean()),
        ))
    return records


@dataclass
class LimitReport:
    """Tail-window estimates of the velocity limits g = lim u' and
    gamma = lim y'.

    ``*_windows`` hold the per-window means (windows in time order), so
    trends over the tail are visible; ``monotone`` carries the
    strict-increase verdicts for u1', 4u1'-u2'-u3' and 2u1'-u2'+u3'
    evaluated on the accepted steps.  ``classification`` is
    "apex-trending" only when every |u_i'| window mean decreases
    window-over-window; otherwise "undetermined at this horizon" -- a
    finite run never proves apex convergence.
    """

    g: np.ndarray
    g_slope: np.ndarray
    gamma: np.ndarray
    gamma_slope: np.ndarray
    g_windows: np.ndarray
    gamma_windows: np.ndarray
    monotone: dict
    classification: str
    tail_t_start: float
    n_tail: int
    n_windows: int

    @property
    def monotone_all_ok(self) -> bool:
        return all(v.ok for v in self.monotone.values())


def limit_estimates(
    traj: Trajectory, tail_fraction: float, *, n_windows: int = 3
) -> LimitReport:
    """Estimate the asymptotic velocity limits from the trajectory tail.

    ``tail_fraction`` of the dense samples (at least 100 of them) form
    the estimation window, which is further split into ``n_windows``
    equal sub-windows for the trend reporting.
    """
    if not 0.0 < tail_fraction < 1.0:
        raise ValueError(f"tail_fraction must be in (0,1), got {tail_fraction!r}")
    if n_windows < 2:
        raise ValueError(f"need at least 2 windows, got {n_windows!r}")
    n = len(traj.dense_t)
    k = int(math.ceil(tail_fraction * n))
    if k < 100:
        raise InsufficientSamplesError(
            f"tail holds {k} samples (< 100); lengthen the run or "
            "raise tail_fraction"
        )

    t = traj.dense_t[-k:]
    du = traj.dense_state_diag[-k:, 3:]
    dy = du @ linear_map(Chart.DIAG, Chart.RATIO).T

    tm = t - t.mean()
    denom = float(tm @ tm)

    def slopes(v):
        return (tm @ (v - v.mean(axis=0))) / denom

    bounds = np.linspace(0, k, n_windows + 1).astype(int)
    g_windows = np.array([du[a:b].mean(axis=0) for a, b in zip(bounds[:-1], bounds[1:])])
    gamma_windows = np.array([dy[a:b].mean(axis=0) for a, b in zip(bounds[:-1], bounds[1:])])

    # a component whose window means sit below the float resolution of the
    # run's velocity scale (e.g. an identically-zero u3' on the closed-form
    # solution, kept at ~eps by cancelling O(1) terms) carries no trend
    # information and counts as settled
    absw = np.abs(g_windows)
    floor = 4.0 * np.finfo(float).eps * float(
        np.max(np.abs(traj.dense_state_diag[:, 3:]))
    )
    apex_trending = bool(np.all((absw[1:] < absw[:-1]) | (absw[1:] <= floor)))

    return LimitReport(
        g=du.mean(axis=0),
        g_slope=slopes(du),
        gamma=dy.mean(axis=0),
        gamma_slope=slopes(dy),
        g_windows=g_windows,
        gamma_windows=gamma_windows,
        monotone=monotone_report(traj),
        classification=(
            "apex-trending" if apex_trending else "undetermined at this horizon"
        ),
        tail_t_start=float(t[0]),
        n_tail=k,
        n_windows=n_windows,
    )
