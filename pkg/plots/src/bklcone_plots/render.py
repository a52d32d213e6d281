"""Render the simulator's CSV outputs into static figures.

Three figure kinds, all driven by a :class:`PlotSpec`:

* ``cone3d``         -- the kinetic-energy cone ``3 v1^2 = v2^2 + 3 v3^2``
  (lower half, ``v1 < 0``) with the trajectory's velocity path drawn
  inside it;
* ``velocities``     -- the three velocity components against time;
* ``kinetic-energy`` -- paired linear/log panels of ``E_k(t)`` with a
  vertical marker at every reflection time from the events CSV.

Rendering is read-only over its inputs and validates them completely
before opening the output file, so a failed render never leaves a
partial image behind.  Re-running a spec overwrites its output.

This package never computes dynamics: everything drawn is a column the
simulator already emitted.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "KINDS",
    "PlotSpec",
    "RenderResult",
    "PlotError",
    "SpecError",
    "EmptyInputError",
    "MissingColumnsError",
    "render",
]

KINDS = ("cone3d", "velocities", "kinetic-energy")

#: trajectory columns each figure kind draws from (events are separate)
_REQUIRED = {
    "cone3d": ("t", "du1", "du2", "du3"),
    "velocities": ("t", "du1", "du2", "du3"),
    "kinetic-energy": ("t", "E_k"),
}

_EVENT_COLUMNS = ("n", "t_n", "epsilon_n")


class PlotError(ValueError):
    """Base class for everything this package raises on purpose."""


class SpecError(PlotError):
    """Unusable plot spec; the message names the offending field."""


class EmptyInputError(PlotError):
    """An input CSV has no data to draw."""


class MissingColumnsError(PlotError):
    """An input CSV lacks columns the figure kind needs."""


_SPEC_FIELDS = (
    "kind", "trajectory", "output", "events",
    "title", "t_min", "t_max", "log_floor", "dpi",
)


@dataclass(frozen=True)
class PlotSpec:
    """One figure: which kind, which input CSVs, where the image goes.

    ``events`` is required for the kinetic-energy kind (that is where the
    reflection markers come from) and ignored by the others.  ``t_min`` /
    ``t_max`` window every kind by the trajectory's time column;
    ``log_floor`` clips the bottom of the log panel.
    """

    kind: str
    trajectory: str
    output: str
    events: str | None = None
    title: str | None = None
    t_min: float | None = None
    t_max: float | None = None
    log_floor: float | None = None
    dpi: int = 150

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(
                f"field 'kind' must be one of {', '.join(KINDS)}; got {self.kind!r}"
            )
        if self.kind == "kinetic-energy" and not self.events:
            raise SpecError(
                "field 'events' is required for the kinetic-energy kind"
            )
        if not isinstance(self.dpi, int) or isinstance(self.dpi, bool) or self.dpi <= 0:
            raise SpecError(f"field 'dpi' must be a positive integer, got {self.dpi!r}")
        for name in ("t_min", "t_max", "log_floor"):
            v = getattr(self, name)
            if v is not None and not isinstance(v, (int, float)):
                raise SpecError(f"field {name!r} must be a number, got {v!r}")
        if (
            self.t_min is not None and self.t_max is not None
            and not self.t_min < self.t_max
        ):
            raise SpecError(
                f"field 't_min' ({self.t_min!r}) must be below 't_max' ({self.t_max!r})"
            )
        if self.log_floor is not None and not self.log_floor > 0.0:
            raise SpecError(
                f"field 'log_floor' must be positive, got {self.log_floor!r}"
            )

    @classmethod
    def from_doc(cls, doc) -> "PlotSpec":
        """Build a spec from a parsed JSON document, rejecting unknown keys."""
        if not isinstance(doc, dict):
            raise SpecError("plot spec must be a JSON object")
        unknown = sorted(set(doc) - set(_SPEC_FIELDS))
        if unknown:
            raise SpecError(f"unknown spec fields: {', '.join(unknown)}")
        for name in ("kind", "trajectory", "output"):
            if name not in doc:
                raise SpecError(f"missing required spec field {name!r}")
            if not isinstance(doc[name], str):
                raise SpecError(f"field {name!r} must be a string, got {doc[name]!r}")
        return cls(**doc)


@dataclass(frozen=True)
class RenderResult:
    """What was drawn: the image path, sample count and marker count."""

    output: str
    kind: str
    n_samples: int
    n_markers: int


def load_table(path: str, required, *, allow_empty: bool = False) -> dict:
    """Parse one simulator CSV into ``{column: float array}``.

    ``allow_empty`` accepts a header-only file (a run with no reflections
    writes exactly that for its events CSV); without it, a file with no
    data rows raises :class:`EmptyInputError`.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if any(cell.strip() for cell in r)]
    if not rows:
        raise EmptyInputError(f"{path}: no header row")
    header = rows[0]
    missing = [c for c in required if c not in header]
    if missing:
        raise MissingColumnsError(
            f"{path}: missing column(s) {', '.join(missing)} "
            f"(found: {', '.join(header)})"
        )
    body = rows[1:]
    if not body:
        if not allow_empty:
            raise EmptyInputError(f"{path}: no data rows")
        return {name: np.empty(0) for name in header}
    try:
        data = np.array([[float(v) for v in r] for r in body])
    except ValueError as e:
        raise PlotError(f"{path}: non-numeric cell ({e})") from None
    if data.shape[1] != len(header):
        raise PlotError(
            f"{path}: row width {data.shape[1]} != header width {len(header)}"
        )
    return {name: data[:, i] for i, name in enumerate(header)}


def _window(cols: dict, spec: PlotSpec) -> dict:
    t = cols["t"]
    sel = np.ones(len(t), dtype=bool)
    if spec.t_min is not None:
        sel &= t >= spec.t_min
    if spec.t_max is not None:
        sel &= t <= spec.t_max
    if not np.any(sel):
        raise EmptyInputError(
            f"time window [{spec.t_min}, {spec.t_max}] leaves no samples"
        )
    return {name: v[sel] for name, v in cols.items()}


def _draw_cone3d(cols: dict, spec: PlotSpec):
    d1, d2, d3 = cols["du1"], cols["du2"], cols["du3"]
    fig = plt.figure(figsize=(7.0, 6.0))
    ax = fig.add_subplot(projection="3d")

    # lower half of 3 v1^2 = v2^2 + 3 v3^2, apex at the origin
    depth = 1.05 * float(np.max(np.abs(d1)))
    v1 = np.linspace(-depth, 0.0, 40)
    th = np.linspace(0.0, 2.0 * np.pi, 72)
    v1g, thg = np.meshgrid(v1, th)
    v2g = np.sqrt(3.0) * np.abs(v1g) * np.cos(thg)
    v3g = np.abs(v1g) * np.sin(thg)
    ax.plot_surface(
        v2g, v3g, v1g, alpha=0.15, color="tab:gray",
        linewidth=0, antialiased=True,
    )
    ax.plot(d2, d3, d1, color="tab:blue", lw=1.5)
    ax.scatter([d2[0]], [d3[0]], [d1[0]], color="tab:blue", s=20)
    ax.scatter([0.0], [0.0], [0.0], color="black", s=25)
    ax.set_xlabel("u2'")
    ax.set_ylabel("u3'")
    ax.set_zlabel("u1'")
    ax.set_title(spec.title or "velocity path inside the kinetic-energy cone")
    return fig, 0


def _draw_velocities(cols: dict, spec: PlotSpec):
    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    for name, label in (("du1", "u1'"), ("du2", "u2'"), ("du3", "u3'")):
        ax.plot(cols["t"], cols[name], lw=1.2, label=label)
    ax.axhline(0.0, color="0.7", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("velocity")
    ax.legend(loc="best")
    ax.set_title(spec.title or "velocity components")
    return fig, 0


def _draw_kinetic(cols: dict, events: dict, spec: PlotSpec):
    t, ek = cols["t"], cols["E_k"]
    tn, eps = events["t_n"], events["epsilon_n"]
    sel = np.ones(len(tn), dtype=bool)
    if spec.t_min is not None:
        sel &= tn >= spec.t_min
    if spec.t_max is not None:
        sel &= tn <= spec.t_max
    tn, eps = tn[sel], eps[sel]

    fig, (ax_lin, ax_log) = plt.subplots(
        2, 1, sharex=True, figsize=(8.0, 6.0),
        gridspec_kw={"hspace": 0.08},
    )
    for ax in (ax_lin, ax_log):
        ax.plot(t, ek, color="tab:blue", lw=1.2)
        for v in tn:
            ax.axvline(v, color="tab:red", lw=0.9, ls="--", alpha=0.8)
    ax_log.set_yscale("log")
    if len(tn):
        ax_log.plot(tn, eps, "o", color="tab:red", ms=4, zorder=5)
    if spec.log_floor is not None:
        ax_log.set_ylim(bottom=spec.log_floor)
    ax_lin.set_ylabel("E_k")
    ax_log.set_ylabel("E_k (log)")
    ax_log.set_xlabel("t")
    ax_lin.set_title(spec.title or "kinetic energy and reflections")
    return fig, int(len(tn))


def render(spec: PlotSpec) -> RenderResult:
    """Draw one figure and write it to ``spec.output``.

    All inputs are loaded and validated before anything touches the
    output path; on error, no file is written.
    """
    cols = _window(load_table(spec.trajectory, _REQUIRED[spec.kind]), spec)
    events = None
    if spec.kind == "kinetic-energy":
        events = load_table(spec.events, _EVENT_COLUMNS, allow_empty=True)

    if spec.kind == "cone3d":
        fig, n_markers = _draw_cone3d(cols, spec)
    elif spec.kind == "velocities":
        fig, n_markers = _draw_velocities(cols, spec)
    else:
        fig, n_markers = _draw_kinetic(cols, events, spec)

    try:
        out_dir = os.path.dirname(spec.output)
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
        fig.savefig(spec.output, dpi=spec.dpi)
    finally:
        plt.close(fig)
    return RenderResult(
        output=spec.output, kind=spec.kind,
        n_samples=len(cols["t"]), n_markers=n_markers,
    )
