"""Command-line entry point: configured runs, the verification suite, and
closed-form sampling.

Subcommands::

    bklcone simulate [--config <path-or-preset>] --out <dir>
    bklcone verify [--json <path>]
    bklcone exact --t0 <v> --from <v> --to <v> --samples <n> --chart <tag>

``simulate`` writes, atomically and deterministically (17 significant
digits, '.' decimal separator, '\\n' line endings):

* ``trajectory.csv`` -- t, u1, u2, u3, du1, du2, du3, y1, y2, y3, E_k, E_p, H
  at the dense samples;
* ``events.csv``     -- n, t_n, epsilon_n for each detected reflection;
* ``epochs.csv``     -- t_start, t_end, p1, p2, p3, residual per epoch;
* ``summary.json``   -- termination reason, drift maximum, limit report,
  perturbation fit (when enabled), all under a versioned schema.

Exit codes: 0 success, 2 config/usage error, 3 constraint-infeasible
initial condition, 4 integration abort (partial outputs are kept and the
summary records the abort).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import epochs as epochs_mod
from . import exact as exact_mod
from .charts import Chart, ChartError, PhasePoint, Velocity, convert, linear_map, position_from_array
from .dynamics import OverflowGuardError
from .integrator import (
    InfeasibleInitialConditionError,
    IntegratorParams,
    Trajectory,
    complete_velocity,
    detect_reflections,
    integrate,
)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_ABORT = 4

PRESET_NAMES = ("exact", "generic-collapse", "perturbation")

_CHART_COLUMNS = {
    Chart.SCALE: ("a", "b", "c"),
    Chart.LOG: ("x1", "x2", "x3"),
    Chart.DIAG: ("u1", "u2", "u3"),
    Chart.RATIO: ("y1", "y2", "y3"),
}


class ConfigError(ValueError):
    """Unusable run configuration; message names the offending field."""


# --- configuration --------------------------------------------------------

@dataclass(frozen=True)
class PerturbationConfig:
    seed: tuple
    seed_scale: float
    horizon: float
    linear_cap: float


@dataclass(frozen=True)
class AnalysisConfig:
    reflections: bool = True
    epochs: bool = True
    limits: bool = True
    perturbation: PerturbationConfig | None = None
    epoch_delta: float = 0.01
    tail_fraction: float = 0.5
    limit_windows: int = 3


@dataclass(frozen=True)
class RunConfig:
    """Parsed, validated and completed run configuration."""

    ic: PhasePoint
    params: IntegratorParams
    analysis: AnalysisConfig
    formats: tuple
    out_dir: str | None
    raw: dict


def _field(d: dict, path: str, typ, default=None, required=False):
    cur = d
    parts = path.split(".")
    for p in parts[:-1]:
        cur = cur.get(p, {}) if isinstance(cur, dict) else {}
    if not isinstance(cur, dict) or parts[-1] not in cur:
        if required:
            raise ConfigError(f"missing required field '{path}'")
        return default
    v = cur[parts[-1]]
    if typ is float and isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    if typ is int and isinstance(v, int) and not isinstance(v, bool):
        return v
    if typ is bool and isinstance(v, bool):
        return v
    if typ is str and isinstance(v, str):
        return v
    if typ is list and isinstance(v, list):
        return v
    raise ConfigError(f"field '{path}' must be of type {typ.__name__}, got {v!r}")


def parse_config(doc: dict) -> RunConfig:
    """Validate a config document and complete its initial condition."""
    if not isinstance(doc, dict):
        raise ConfigError("top-level config must be a JSON object")
    version = _field(doc, "schema_version", int, required=True)
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"field 'schema_version' is {version}, this build supports {SCHEMA_VERSION}"
        )

    chart_tag = _field(doc, "initial_condition.chart", str, default="diag")
    try:
        chart = Chart.parse(chart_tag)
    except ChartError as e:
        raise ConfigError(f"field 'initial_condition.chart': {e}") from None
    pos_list = _field(doc, "initial_condition.position", list, required=True)
    if len(pos_list) != 3 or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in pos_list
    ):
        raise ConfigError(
            "field 'initial_condition.position' must be a list of three numbers"
        )
    du2 = _field(doc, "initial_condition.du2", float, required=True)
    du3 = _field(doc, "initial_condition.du3", float, required=True)
    t_start = _field(doc, "initial_condition.t_start", float, default=0.0)

    try:
        position = position_from_array(chart, pos_list)
    except ChartError as e:
        raise ConfigError(f"field 'initial_condition.position': {e}") from None
    # express the position in the DIAG chart, then complete the velocity
    u_pos = convert(
        PhasePoint(t_start, position, Velocity(chart, 0.0, 0.0, 0.0)), Chart.DIAG
    ).position
    try:
        du1 = complete_velocity(u_pos, du2, du3)
    except OverflowGuardError as e:
        # representable constrained velocity does not exist at this position
        raise InfeasibleInitialConditionError(
            f"initial_condition.position: wall terms overflow ({e})"
        ) from None
    ic = PhasePoint(t_start, u_pos, Velocity(Chart.DIAG, du1, du2, du3))

    t_end = _field(doc, "integrator.t_end", float, required=True)
    if not t_end > t_start:
        raise ConfigError(
            f"field 'integrator.t_end' ({t_end!r}) must exceed "
            f"'initial_condition.t_start' ({t_start!r})"
        )
    try:
        params = IntegratorParams(
            t_end=t_end,
            rel_tol=_field(doc, "integrator.rel_tol", float, default=1e-10),
            abs_tol=_field(doc, "integrator.abs_tol", float, default=1e-12),
            max_steps=_field(doc, "integrator.max_steps", int, default=100_000),
            drift_abort_ratio=_field(
                doc, "integrator.drift_abort_ratio", float, default=0.1
            ),
            chart=_field(doc, "integrator.chart", str, default="diag"),
            dense_sample_dt=_field(
                doc, "integrator.dense_sample_dt", float, default=0.02
            ),
        )
    except (ValueError, ChartError) as e:
        raise ConfigError(f"field 'integrator': {e}") from None

    analysis_doc = doc.get("analysis", {})
    if not isinstance(analysis_doc, dict):
        raise ConfigError("field 'analysis' must be an object")
    pert_doc = analysis_doc.get("perturbation", False)
    if pert_doc in (False, None):
        pert = None
    elif isinstance(pert_doc, dict):
        seed = pert_doc.get("seed")
        if (
            not isinstance(seed, list) or len(seed) != 6
            or not all(isinstance(v, (int, float)) for v in seed)
        ):
            raise ConfigError(
                "field 'analysis.perturbation.seed' must be a list of six numbers"
            )
        pert = PerturbationConfig(
            seed=tuple(float(v) for v in seed),
            seed_scale=pert_doc.get("seed_scale", 1e-20),
            horizon=pert_doc.get("horizon", 67.0),
            linear_cap=pert_doc.get("linear_cap", 1e-3),
        )
    else:
        raise ConfigError(
            "field 'analysis.perturbation' must be false or an object"
        )

    analysis = AnalysisConfig(
        reflections=_field(doc, "analysis.reflections", bool, default=True),
        epochs=_field(doc, "analysis.epochs", bool, default=True),
        limits=_field(doc, "analysis.limits", bool, default=True),
        perturbation=pert,
        epoch_delta=_field(doc, "analysis.epoch_delta", float, default=0.01),
        tail_fraction=_field(doc, "analysis.tail_fraction", float, default=0.5),
        limit_windows=_field(doc, "analysis.limit_windows", int, default=3),
    )
    if not 0.0 < analysis.epoch_delta <= 1.0:
        raise ConfigError(
            f"field 'analysis.epoch_delta' must be in (0, 1], got {analysis.epoch_delta!r}"
        )
    if not 0.0 < analysis.tail_fraction < 1.0:
        raise ConfigError(
            f"field 'analysis.tail_fraction' must be in (0, 1), got "
            f"{analysis.tail_fraction!r}"
        )

    formats = _field(doc, "output.formats", list, default=["csv", "json"])
    for f in formats:
        if f not in ("csv", "json"):
            raise ConfigError(f"field 'output.formats': unknown format {f!r}")
    out_dir = _field(doc, "output.directory", str, default=None)

    return RunConfig(
        ic=ic, params=params, analysis=analysis,
        formats=tuple(formats), out_dir=out_dir, raw=doc,
    )


def load_preset(name: str) -> dict:
    if name not in PRESET_NAMES:
        raise ConfigError(
            f"unknown preset {name!r}; shipped presets: {', '.join(PRESET_NAMES)}"
        )
    text = resources.files("bklcone").joinpath(f"presets/{name}.json").read_text()
    return json.loads(text)


def load_config(path_or_preset: str) -> RunConfig:
    """Load a config JSON from a file path, or by shipped-preset name."""
    if os.path.exists(path_or_preset):
        try:
            with open(path_or_preset, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path_or_preset!r} is not valid JSON: {e}")
    else:
        doc = load_preset(path_or_preset)
    return parse_config(doc)


# --- deterministic serialization ------------------------------------------

def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv(header: list, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def write_trajectory_csv(path: str, traj: Trajectory) -> None:
    d = traj.dense_state_diag
    y = d[:, :3] @ linear_map(Chart.DIAG, Chart.RATIO).T
    h = traj.dense_kinetic + traj.dense_potential
    rows = np.column_stack([
        traj.dense_t, d[:, :3], d[:, 3:], y,
        traj.dense_kinetic, traj.dense_potential, h,
    ])
    _atomic_write(path, _csv(
        ["t", "u1", "u2", "u3", "du1", "du2", "du3",
         "y1", "y2", "y3", "E_k", "E_p", "H"],
        rows,
    ))


def write_events_csv(path: str, events) -> None:
    _atomic_write(path, _csv(
        ["n", "t_n", "epsilon_n"],
        ([e.index, e.t, e.epsilon] for e in events),
    ))


def write_epochs_csv(path: str, records) -> None:
    _atomic_write(path, _csv(
        ["t_start", "t_end", "p1", "p2", "p3", "residual"],
        (
            [r.t_start, r.t_end, r.triple.p1, r.triple.p2, r.triple.p3,
             r.kasner_quadratic_residual]
            for r in records
        ),
    ))


def _limit_report_doc(rep) -> dict:
    return {
        "g": [float(v) for v in rep.g],
        "g_slope": [float(v) for v in rep.g_slope],
        "gamma": [float(v) for v in rep.gamma],
        "gamma_slope": [float(v) for v in rep.gamma_slope],
        "g_windows": [[float(v) for v in w] for w in rep.g_windows],
        "gamma_windows": [[float(v) for v in w] for w in rep.gamma_windows],
        "monotone": {
            name: {"ok": v.ok, "violations": v.violations,
                   "unresolvable": v.unresolvable}
            for name, v in rep.monotone.items()
        },
        "classification": rep.classification,
        "tail_t_start": rep.tail_t_start,
        "n_tail": rep.n_tail,
        "n_windows": rep.n_windows,
    }


def _perturbation_doc(run) -> dict:
    return {
        "omega1": run.omega1,
        "omega2": run.omega2,
        "omega_ratio": run.omega_ratio,
        "growth_exponent": run.growth_exponent,
        "amplitude_decay_exponent": run.amplitude_decay_exponent,
        "periods_spanned": run.periods_spanned,
        "max_relative_ratio": run.max_relative_ratio,
        "linear_cap": run.linear_cap,
        "fitted": run.fitted,
    }


def write_summary_json(path: str, doc: dict) -> None:
    _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


# --- subcommands ----------------------------------------------------------

def cmd_simulate(args) -> int:
    try:
        cfg = load_config(args.config)
    except InfeasibleInitialConditionError as e:
        print(f"error: infeasible initial condition: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = args.out or cfg.out_dir
    if out_dir is None:
        print(
            "error: no output directory (--out flag or field 'output.directory')",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    os.makedirs(out_dir, exist_ok=True)

    try:
        traj = integrate(cfg.ic, cfg.params)
    except (InfeasibleInitialConditionError, OverflowGuardError) as e:
        print(f"error: infeasible initial condition: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE

    events = detect_reflections(traj) if cfg.analysis.reflections else []
    records = (
        epochs_mod.epoch_segments(traj, events, cfg.analysis.epoch_delta)
        if cfg.analysis.epochs else []
    )

    limits_doc = None
    limits_note = None
    if cfg.analysis.limits:
        try:
            limits_doc = _limit_report_doc(epochs_mod.limit_estimates(
                traj, cfg.analysis.tail_fraction,
                n_windows=cfg.analysis.limit_windows,
            ))
        except epochs_mod.InsufficientSamplesError as e:
            limits_note = str(e)

    pert_doc = None
    pert_note = None
    if cfg.analysis.perturbation is not None:
        p = cfg.analysis.perturbation
        seed = np.asarray(p.seed)
        norm = np.linalg.norm(seed)
        if norm > 0:
            seed = seed / norm * p.seed_scale
        try:
            pert_doc = _perturbation_doc(exact_mod.perturbation_run(
                seed, p.horizon, linear_cap=p.linear_cap,
            ))
        except (exact_mod.LinearityCapError, exact_mod.FitFailureError) as e:
            pert_note = str(e)

    if "csv" in cfg.formats:
        write_trajectory_csv(os.path.join(out_dir, "trajectory.csv"), traj)
        write_events_csv(os.path.join(out_dir, "events.csv"), events)
        write_epochs_csv(os.path.join(out_dir, "epochs.csv"), records)

    aborted = traj.termination != "completed"
    summary = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.raw,
        "termination": traj.termination,
        "aborted": aborted,
        "t_start": traj.t_start,
        "t_last": traj.t_last,
        "n_steps": traj.n_steps,
        "n_dense_samples": len(traj.dense_t),
        "max_drift_ratio": traj.max_drift_ratio,
        "max_drift": float(np.max(traj.step_drift)),
        "n_reflections": len(events),
        "n_epochs": len(records),
        "limit_report": limits_doc,
        "limit_report_note": limits_note,
        "perturbation": pert_doc,
        "perturbation_note": pert_note,
    }
    if "json" in cfg.formats:
        write_summary_json(os.path.join(out_dir, "summary.json"), summary)

    if aborted:
        print(
            f"integration aborted ({traj.termination}) at t={traj.t_last:g}; "
            f"partial outputs written to {out_dir}",
            file=sys.stderr,
        )
        return EXIT_ABORT
    return EXIT_OK


def cmd_verify(args) -> int:
    from . import verify

    results = verify.run_all()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    all_passed = all(r.passed for r in results)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "all_passed": all_passed,
        "checks": [
            {"name": r.name, "passed": r.passed, "detail": r.detail, "data": r.data}
            for r in results
        ],
    }
    if args.json:
        write_summary_json(args.json, doc)
    if not all_passed:
        failed = ", ".join(r.name for r in results if not r.passed)
        print(f"FAILED checks: {failed}", file=sys.stderr)
        return 1
    return EXIT_OK


def cmd_exact(args) -> int:
    tau_a = args.t_from - args.t0
    tau_b = args.t_to - args.t0
    if tau_a == 0.0 or tau_b == 0.0 or (tau_a < 0.0) != (tau_b < 0.0):
        print(
            f"error: sample range [{args.t_from:g}, {args.t_to:g}] touches or "
            f"crosses the singular time t0={args.t0:g}",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    if args.samples < 1:
        print("error: --samples must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        chart = Chart.parse(args.chart)
    except ChartError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    params = exact_mod.ExactParams(t0=args.t0, branch=1 if tau_a > 0 else -1)
    names = _CHART_COLUMNS[chart]
    header = ["t", *names, *(f"d{n}" for n in names)]
    lines = [",".join(header)]
    for t in np.linspace(args.t_from, args.t_to, args.samples):
        p = exact_mod.exact_state(float(t), params, chart)
        row = [t, *p.position.as_array(), *p.velocity.as_array()]
        lines.append(",".join(_fmt(v) for v in row))
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bklcone",
        description=(
            "Constrained integration and cone-of-kinetic-energy analysis "
            "of the anisotropic collapse equations"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a configured integration")
    p_sim.add_argument(
        "--config", default="generic-collapse",
        help="config JSON path or shipped preset name "
             f"({', '.join(PRESET_NAMES)}); default: generic-collapse",
    )
    p_sim.add_argument("--out", default=None, help="output directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_ver = sub.add_parser("verify", help="run the full verification suite")
    p_ver.add_argument("--json", default=None, help="write the report JSON here")
    p_ver.set_defaults(func=cmd_verify)

    p_ex = sub.add_parser("exact", help="sample the closed-form solution")
    p_ex.add_argument("--t0", type=float, default=0.0)
    p_ex.add_argument("--from", dest="t_from", type=float, required=True)
    p_ex.add_argument("--to", dest="t_to", type=float, required=True)
    p_ex.add_argument("--samples", type=int, default=100)
    p_ex.add_argument("--chart", default="diag")
    p_ex.set_defaults(func=cmd_exact)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
