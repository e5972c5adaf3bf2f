"""Command-line harness: config parsing, study dispatch, CSV/JSON/SVG emission.

Configs are JSON files (or inline JSON) with flat key-value sections; every
omitted key falls back to a documented default and the complete effective
configuration is echoed into each run's summary.json, so runs are
self-describing. Outputs are deterministic: a rerun with the same config and
master seed produces byte-identical CSV and JSON (no timestamps anywhere),
and SVG plots are rendered from the CSV after it is written, never from
in-memory state alone.

Exit status: 0 on success, 2 when a study flags itself unreliable (more than
1% excluded samples at some dt, or a degenerate fit), 1 on any error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis
from .errors import ConfigurationError, GpleapError, UsageError
from .field import (
    FieldConfig,
    KernelSpec,
    MeanSpec,
    field_config_to_dict,
    sample_realization,
)
from .hamiltonian import MassMatrix, PhaseState, SystemConfig, default_initial_state
from .integrators import SchemeParams, integrate

SUBCOMMANDS = (
    "sample", "integrate", "local-order", "modified-match", "taylor-order",
    "global-order", "moments", "tails", "energy-drift",
)

DEFAULT_DT_GRID = [2.0**-4, 2.0**-5, 2.0**-6, 2.0**-7, 2.0**-8, 2.0**-9]

# Acceptance windows for the fitted slopes, per study.
SLOPE_WINDOWS = {
    "local-order": (1.85, 2.15),
    "modified-match": (2.8, 3.2),
    "global-order": (0.85, None),
}
TAYLOR_WINDOW_Y = (3.8, 4.2)
TAYLOR_WINDOW_X = (2.8, 3.2)


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Fully validated run configuration plus its effective-config echo."""

    system: SystemConfig
    scheme_kind: str
    params: SchemeParams
    dt_grid: list
    seed_count: int
    master_seed: int
    substeps: int
    ref_substeps_per_dt: int
    box: tuple
    resolution: int
    tail_resolution: int
    levels: list | None
    dt: float
    output_dir: str
    emit_plot: bool
    effective: dict

    @property
    def effective_params(self) -> SchemeParams:
        return SchemeParams.standard() if self.scheme_kind == "standard" else self.params


def _check_keys(section, allowed, path):
    if not isinstance(section, dict):
        raise ConfigurationError(f"config section '{path.rstrip('.')}' must be an object")
    for key in section:
        if key not in allowed:
            raise ConfigurationError(f"unknown config key '{path}{key}'")


def _get_number(section, key, default, path, minimum=None, strict_min=None):
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"config key '{path}{key}' must be a number")
    value = float(value)
    if minimum is not None and value < minimum:
        raise ConfigurationError(f"config key '{path}{key}' must be >= {minimum}")
    if strict_min is not None and value <= strict_min:
        raise ConfigurationError(f"config key '{path}{key}' must be > {strict_min}")
    return value


def _get_int(section, key, default, path, minimum=None):
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(f"config key '{path}{key}' must be an integer")
    if minimum is not None and value < minimum:
        raise ConfigurationError(f"config key '{path}{key}' must be >= {minimum}")
    return int(value)


def _parse_mean(raw, dimension):
    if raw is None or raw == "quadratic":
        return MeanSpec.quadratic_well(dimension)
    if raw == "zero":
        return MeanSpec.zero(dimension)
    if isinstance(raw, dict):
        _check_keys(raw, {"constant", "linear", "quadratic"}, "field.mean.")
        return MeanSpec(
            float(raw.get("constant", 0.0)),
            np.asarray(raw.get("linear", np.zeros(dimension)), dtype=float),
            np.asarray(raw.get("quadratic", np.zeros((dimension, dimension))), dtype=float),
        )
    raise ConfigurationError("config key 'field.mean' must be 'quadratic', 'zero', or an object")


def _parse_mass(raw, dimension):
    if raw is None or raw == "identity":
        return MassMatrix.identity(dimension)
    if isinstance(raw, list) and raw and isinstance(raw[0], list):
        return MassMatrix.dense(np.asarray(raw, dtype=float))
    if isinstance(raw, list):
        entries = np.asarray(raw, dtype=float)
        if entries.size != dimension:
            raise ConfigurationError("config key 'mass' diagonal length must match field.dimension")
        return MassMatrix.diagonal(entries)
    raise ConfigurationError("config key 'mass' must be 'identity', a diagonal list, or a row-major matrix")


def parse_config(source) -> RunConfig:
    """Build a validated RunConfig from a JSON file path or inline JSON text.

    Unknown keys are rejected with a diagnostic naming the key; every default
    that fills a gap is echoed into the effective configuration.
    """
    text = source
    if not source.lstrip().startswith("{"):
        path = Path(source)
        if not path.exists():
            raise ConfigurationError(f"config file not found: {source}")
        text = path.read_text()
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from None

    _check_keys(data, {"field", "mass", "initial", "horizon", "escape_radius",
                       "scheme", "study", "output"}, "")

    field_raw = data.get("field", {})
    _check_keys(field_raw, {"dimension", "kernel", "mean", "sampler", "feature_count", "seed"}, "field.")
    kernel_raw = field_raw.get("kernel", {})
    _check_keys(kernel_raw, {"variance", "lengthscale"}, "field.kernel.")
    dimension = _get_int(field_raw, "dimension", 2, "field.", minimum=1)
    variance = _get_number(kernel_raw, "variance", 1.0, "field.kernel.", minimum=0.0)
    lengthscale = _get_number(kernel_raw, "lengthscale", 1.0, "field.kernel.", strict_min=0.0)
    sampler = field_raw.get("sampler", "fourier")
    feature_count = _get_int(field_raw, "feature_count", 512, "field.", minimum=1)
    mean = _parse_mean(field_raw.get("mean"), dimension)

    study_raw = data.get("study", {})
    _check_keys(study_raw, {"dt_grid", "seed_count", "master_seed", "substeps",
                            "ref_substeps_per_dt", "box", "resolution",
                            "tail_resolution", "levels", "dt"}, "study.")
    master_seed = _get_int(study_raw, "master_seed", 1, "study.", minimum=0)
    seed_count = _get_int(study_raw, "seed_count", 64, "study.", minimum=1)
    dt_grid = study_raw.get("dt_grid", list(DEFAULT_DT_GRID))
    if not isinstance(dt_grid, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in dt_grid):
        raise ConfigurationError("config key 'study.dt_grid' must be a list of numbers")
    dt_grid = [float(v) for v in dt_grid]
    if any(v <= 0 for v in dt_grid):
        raise ConfigurationError("config key 'study.dt_grid' entries must be > 0")
    substeps = _get_int(study_raw, "substeps", 64, "study.", minimum=16)
    ref_substeps = _get_int(study_raw, "ref_substeps_per_dt", 64, "study.", minimum=1)
    box_raw = study_raw.get("box", [-1.0, 1.0])
    if not (isinstance(box_raw, list) and len(box_raw) == 2):
        raise ConfigurationError("config key 'study.box' must be a [lo, hi] pair")
    box = (float(box_raw[0]), float(box_raw[1]))
    if box[0] > box[1]:
        raise ConfigurationError("config key 'study.box' must satisfy lo <= hi")
    resolution = _get_int(study_raw, "resolution", 16, "study.", minimum=8)
    tail_resolution = _get_int(study_raw, "tail_resolution", 128, "study.", minimum=1)
    levels = study_raw.get("levels")
    if levels is not None:
        if not isinstance(levels, list) or len(levels) < 1:
            raise ConfigurationError("config key 'study.levels' must be a list of numbers or null")
        levels = [float(v) for v in levels]
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ConfigurationError("config key 'study.levels' must be strictly increasing")
    step_dt = _get_number(study_raw, "dt", 0.01, "study.", strict_min=0.0)

    seed_raw = field_raw.get("seed")
    if seed_raw is not None and (isinstance(seed_raw, bool) or not isinstance(seed_raw, int)):
        raise ConfigurationError("config key 'field.seed' must be an integer or null")
    field_seed = master_seed if seed_raw is None else int(seed_raw)
    field = FieldConfig(dimension, KernelSpec(variance, lengthscale), mean,
                        sampler, feature_count, field_seed)

    mass = _parse_mass(data.get("mass"), dimension)

    initial_raw = data.get("initial", {})
    _check_keys(initial_raw, {"y", "x"}, "initial.")
    default_state = default_initial_state(dimension)
    y0 = initial_raw.get("y")
    x0 = initial_raw.get("x")
    initial = PhaseState(
        np.asarray(y0, dtype=float) if y0 is not None else default_state.y,
        np.asarray(x0, dtype=float) if x0 is not None else default_state.x,
    )

    horizon = _get_number(data, "horizon", 1.0, "", strict_min=0.0)
    escape_radius = _get_number(data, "escape_radius", 1000.0, "", strict_min=0.0)
    system = SystemConfig(field, mass, initial, horizon, escape_radius)

    scheme_raw = data.get("scheme", {})
    _check_keys(scheme_raw, {"kind", "alpha1", "alpha2", "beta1", "beta2"}, "scheme.")
    scheme_kind = scheme_raw.get("kind", "parameterized")
    if scheme_kind not in ("parameterized", "standard"):
        raise ConfigurationError("config key 'scheme.kind' must be 'parameterized' or 'standard'")
    params = SchemeParams(
        _get_number(scheme_raw, "alpha1", 0.0, "scheme."),
        _get_number(scheme_raw, "alpha2", 1.0, "scheme."),
        _get_number(scheme_raw, "beta1", 0.0, "scheme."),
        _get_number(scheme_raw, "beta2", 2.0, "scheme."),
    )

    output_raw = data.get("output", {})
    _check_keys(output_raw, {"directory", "emit_plot"}, "output.")
    output_dir = output_raw.get("directory", "runs")
    if not isinstance(output_dir, str):
        raise ConfigurationError("config key 'output.directory' must be a string")
    emit_plot = output_raw.get("emit_plot", False)
    if not isinstance(emit_plot, bool):
        raise ConfigurationError("config key 'output.emit_plot' must be true or false")

    effective = {
        "field": field_config_to_dict(field),
        "mass": {"kind": mass.kind, "matrix": mass.matrix().tolist()},
        "initial": {"y": initial.y.tolist(), "x": initial.x.tolist()},
        "horizon": horizon,
        "escape_radius": escape_radius,
        "scheme": {"kind": scheme_kind, "alpha1": params.alpha1, "alpha2": params.alpha2,
                   "beta1": params.beta1, "beta2": params.beta2},
        "study": {"dt_grid": dt_grid, "seed_count": seed_count, "master_seed": master_seed,
                  "substeps": substeps, "ref_substeps_per_dt": ref_substeps,
                  "box": list(box), "resolution": resolution,
                  "tail_resolution": tail_resolution, "levels": levels, "dt": step_dt},
        "output": {"directory": output_dir, "emit_plot": emit_plot},
    }
    return RunConfig(system, scheme_kind, params, dt_grid, seed_count, master_seed,
                     substeps, ref_substeps, box, resolution, tail_resolution, levels,
                     step_dt, output_dir, emit_plot, effective)


# --- deterministic emission helpers -----------------------------------------


def _format_cell(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return "" if math.isnan(value) else repr(value)
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(cell) for cell in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return None if (math.isnan(value) or math.isinf(value)) else value
    return obj


def _write_json(path, obj):
    with open(path, "w", newline="") as fh:
        json.dump(_jsonable(obj), fh, indent=2)
        fh.write("\n")


def _fit_to_dict(fit: analysis.OrderFit):
    return {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "dts": list(fit.dts),
        "counts": list(fit.counts),
        "degenerate": fit.degenerate,
        "reason": fit.reason,
    }


def _within(slope, window):
    if window is None or not np.isfinite(slope):
        return None
    low, high = window
    return bool(slope >= low and (high is None or slope <= high))


def _samples_rows(samples):
    for s in samples:
        if s.excluded:
            yield (s.dt, s.seed, None, None, None, True)
        else:
            yield (s.dt, s.seed, s.err_y, s.err_x, s.err_joint, False)


def _render_fit_svg(csv_path, svg_path):
    """Log-log RMS plot with fitted line, rebuilt from the samples CSV."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "gpleap"
    per_dt = {}
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["excluded"] == "1" or not row["err_joint"]:
                continue
            per_dt.setdefault(float(row["dt"]), []).append(float(row["err_joint"]) ** 2)
    points = sorted((dt, math.sqrt(sum(v) / len(v))) for dt, v in per_dt.items())
    fig, ax = plt.subplots(figsize=(5, 4))
    if points:
        dts = [p[0] for p in points]
        rms = [p[1] for p in points]
        ax.loglog(dts, rms, "o", label="RMS error")
        usable = [(dt, r) for dt, r in points if r > analysis.NOISE_FLOOR]
        if len(usable) >= 4:
            fit = analysis.fit_order(usable)
            if not fit.degenerate:
                xs = np.array([min(dts), max(dts)])
                ax.loglog(xs, np.exp(fit.intercept) * xs**fit.slope, "-",
                          label=f"slope {fit.slope:.3f}")
        ax.legend()
    ax.set_xlabel("dt")
    ax.set_ylabel("RMS error")
    fig.tight_layout()
    fig.savefig(svg_path, format="svg", metadata={"Date": None})
    plt.close(fig)


# --- subcommand implementations ----------------------------------------------


def _summary_base(subcommand, config: RunConfig):
    return {"version": __version__, "subcommand": subcommand, "config": config.effective}


def _emit_study(subcommand, config, result, run_dir, extra=None):
    csv_path = run_dir / "samples.csv"
    _write_csv(csv_path, ["dt", "seed", "err_y", "err_x", "err_joint", "excluded"],
               _samples_rows(result.samples))
    summary = _summary_base(subcommand, config)
    summary.update({
        "rms": [{"dt": r.dt, "rms_y": r.rms_y, "rms_x": r.rms_x, "rms_joint": r.rms_joint,
                 "included": r.included, "excluded": r.excluded} for r in result.rms_rows],
        "fit_joint": _fit_to_dict(result.fit_joint),
        "fit_y": _fit_to_dict(result.fit_y),
        "fit_x": _fit_to_dict(result.fit_x),
        "outcome": result.outcome,
        "reliable": result.reliable,
        "max_excluded_fraction": result.max_excluded_fraction,
        "negative_control": result.negative_control,
    })
    if result.c_hat is not None:
        summary["c_hat"] = result.c_hat
    if subcommand == "taylor-order":
        summary["slope_window_y"] = list(TAYLOR_WINDOW_Y)
        summary["slope_window_x"] = list(TAYLOR_WINDOW_X)
        summary["within_window_y"] = _within(result.fit_y.slope, TAYLOR_WINDOW_Y)
        summary["within_window_x"] = _within(result.fit_x.slope, TAYLOR_WINDOW_X)
    else:
        window = SLOPE_WINDOWS.get(subcommand)
        if window:
            summary["slope_window"] = [window[0], window[1]]
            summary["within_window"] = _within(result.fit_joint.slope, window)
    if extra:
        summary.update(extra)
    _write_json(run_dir / "summary.json", summary)
    if config.emit_plot:
        _render_fit_svg(csv_path, run_dir / "fit.svg")
    return 0 if result.reliable else 2


def _warn_first_order(config: RunConfig):
    if not config.effective_params.first_order_free:
        print(
            "warning: first-order mean-square convergence requires alpha1 = beta1 = 0; "
            "proceeding as a negative control",
            file=sys.stderr,
        )


def _run_sample(config: RunConfig, run_dir, workers):
    realization = sample_realization(config.system.field)
    if config.system.field.sampler != "fourier":
        raise ConfigurationError("only fourier realizations can be exported; "
                                 "set field.sampler to 'fourier'")
    _write_json(run_dir / "realization.json", realization.export())
    summary = _summary_base("sample", config)
    state = config.system.initial
    summary["potential_at_initial"] = float(realization.eval_potential(state.y))
    summary["grad_norm_at_initial"] = float(np.linalg.norm(realization.eval_grad(state.y)))
    _write_json(run_dir / "summary.json", summary)
    return 0


def _run_integrate(config: RunConfig, run_dir, workers):
    system = config.system
    realization = sample_realization(system.field)
    trajectory = integrate(config.scheme_kind, realization, system.mass, config.params,
                           config.dt, system.initial, system.horizon, system.escape_radius)
    d = system.field.dimension
    header = ["n", "t"] + [f"y{i+1}" for i in range(d)] + [f"x{i+1}" for i in range(d)] + ["H"]
    rows = []
    for n in range(trajectory.n_states):
        rows.append([n, n * trajectory.dt, *trajectory.ys[n], *trajectory.xs[n],
                     trajectory.energies[n]])
    _write_csv(run_dir / "trajectory.csv", header, rows)
    _write_json(run_dir / "trajectory.json", {
        "dt": trajectory.dt,
        "status": trajectory.status,
        "escape_step": trajectory.escape_step,
        "t": trajectory.times,
        "y": trajectory.ys,
        "x": trajectory.xs,
        "H": trajectory.energies,
    })
    summary = _summary_base("integrate", config)
    summary.update({
        "status": trajectory.status,
        "escape_step": trajectory.escape_step,
        "n_states": trajectory.n_states,
        "initial_energy": float(trajectory.energies[0]),
        "max_abs_energy_deviation": float(np.max(np.abs(trajectory.energies - trajectory.energies[0]))),
    })
    _write_json(run_dir / "summary.json", summary)
    return 0


def _run_local(config: RunConfig, run_dir, workers):
    _warn_first_order(config)
    result = analysis.ms_local_error_study(
        config.system, config.effective_params, config.dt_grid, config.seed_count,
        config.master_seed, config.substeps, workers)
    return _emit_study("local-order", config, result, run_dir)


def _run_matching(config: RunConfig, run_dir, workers):
    result = analysis.modified_matching_study(
        config.system, config.effective_params, config.dt_grid, config.seed_count,
        config.master_seed, config.substeps, workers)
    return _emit_study("modified-match", config, result, run_dir)


def _run_taylor(config: RunConfig, run_dir, workers):
    result = analysis.taylor_remainder_study(
        config.system, config.dt_grid, config.seed_count, config.master_seed,
        config.substeps, workers)
    return _emit_study("taylor-order", config, result, run_dir)


def _run_global(config: RunConfig, run_dir, workers):
    _warn_first_order(config)
    result = analysis.global_error_study(
        config.system, config.params, config.dt_grid, config.seed_count,
        config.master_seed, config.scheme_kind, config.ref_substeps_per_dt)
    return _emit_study("global-order", config, result, run_dir)


def _run_moments(config: RunConfig, run_dir, workers):
    report = analysis.moment_estimate(config.system.field, config.box, config.resolution,
                                      config.seed_count, workers)
    seeds = analysis.derive_seeds(config.system.field.seed, config.seed_count)
    _write_csv(run_dir / "sups.csv",
               ["seed", "sup_grad_sq", "sup_hess_sq", "sup_third_sq"],
               zip(seeds, report.per_seed_grad_sq, report.per_seed_hess_sq, report.per_seed_third_sq))
    summary = _summary_base("moments", config)
    summary.update({
        "grad_sq": report.grad_sq, "grad_sq_stderr": report.grad_sq_stderr,
        "hess_sq": report.hess_sq, "hess_sq_stderr": report.hess_sq_stderr,
        "third_sq": report.third_sq, "third_sq_stderr": report.third_sq_stderr,
        "box": list(report.box), "resolution": report.resolution,
        "seed_count": report.seed_count, "tensor_norm_method": report.tensor_norm_method,
    })
    _write_json(run_dir / "summary.json", summary)
    return 0


def _run_tails(config: RunConfig, run_dir, workers):
    report = analysis.tail_probe(config.system.field, config.box, config.levels,
                                 config.seed_count, config.tail_resolution, workers)
    _write_csv(run_dir / "survival.csv", ["level", "survival"],
               zip(report.levels, report.survival))
    seeds = analysis.derive_seeds(config.system.field.seed, config.seed_count)
    _write_csv(run_dir / "sups.csv", ["seed", "sup_abs_grad1"], zip(seeds, report.per_seed_sups))
    summary = _summary_base("tails", config)
    summary.update({
        "mean_sup": report.mean_sup, "sup_std": report.sup_std,
        "quad_coefficient": report.quad_coefficient, "intercept": report.intercept,
        "r_squared": report.r_squared, "dropped_levels": report.dropped_levels,
        "concave": report.concave, "degenerate": report.degenerate,
        "seed_count": report.seed_count,
    })
    _write_json(run_dir / "summary.json", summary)
    return 2 if report.degenerate else 0


def _run_energy_drift(config: RunConfig, run_dir, workers):
    report = analysis.energy_drift_study(config.system, config.dt, config.system.horizon)
    rows = [(n, n * config.dt, dev) for n, dev in enumerate(report.deviations)]
    _write_csv(run_dir / "energy.csv", ["n", "t", "deviation"], rows)
    summary = _summary_base("energy-drift", config)
    summary.update({
        "max_deviation": report.max_deviation,
        "relative": report.relative,
        "initial_energy": report.initial_energy,
        "first_decile_mean": report.first_decile_mean,
        "last_decile_mean": report.last_decile_mean,
        "status": report.status,
        "escape_step": report.escape_step,
    })
    _write_json(run_dir / "summary.json", summary)
    return 2 if report.status == "escaped" else 0


_DISPATCH = {
    "sample": _run_sample,
    "integrate": _run_integrate,
    "local-order": _run_local,
    "modified-match": _run_matching,
    "taylor-order": _run_taylor,
    "global-order": _run_global,
    "moments": _run_moments,
    "tails": _run_tails,
    "energy-drift": _run_energy_drift,
}


def run(subcommand, config: RunConfig, workers=None) -> int:
    """Execute one subcommand, writing artifacts under <output>/<subcommand>/."""
    if subcommand not in _DISPATCH:
        raise UsageError(f"unknown subcommand '{subcommand}'")
    run_dir = Path(config.output_dir) / subcommand
    run_dir.mkdir(parents=True, exist_ok=True)
    return _DISPATCH[subcommand](config, run_dir, workers)


def main(argv=None) -> int:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="{}",
                        help="path to a JSON config file, or inline JSON (default: all defaults)")
    common.add_argument("--out", default=None, help="override output.directory")
    common.add_argument("--emit-plot", action="store_true", help="also render an SVG plot from the CSV")
    common.add_argument("--workers", type=int, default=None,
                        help="worker processes for per-seed fan-out (default: GPLEAP_WORKERS or 1)")

    parser = argparse.ArgumentParser(
        prog="gpleap",
        description="Parameterized stochastic leapfrog studies on Gaussian-process potentials.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    descriptions = {
        "sample": "draw one potential realization and export it as JSON",
        "integrate": "run one trajectory and write it as CSV",
        "local-order": "one-step truncation error order study",
        "modified-match": "scheme vs modified-flow matching order study",
        "taylor-order": "reference flow vs truncated series order study",
        "global-order": "endpoint error order study at the horizon",
        "moments": "sup-norm moment estimates for the field derivatives",
        "tails": "sub-Gaussian tail probe for the gradient sup",
        "energy-drift": "energy deviation along a standard-leapfrog run",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=descriptions[name])

    args = parser.parse_args(argv)
    try:
        config = parse_config(args.config)
        if args.out is not None or args.emit_plot:
            effective = dict(config.effective)
            output = dict(effective["output"])
            if args.out is not None:
                output["directory"] = args.out
            if args.emit_plot:
                output["emit_plot"] = True
            effective["output"] = output
            config = RunConfig(
                config.system, config.scheme_kind, config.params, config.dt_grid,
                config.seed_count, config.master_seed, config.substeps,
                config.ref_substeps_per_dt, config.box, config.resolution,
                config.tail_resolution, config.levels, config.dt,
                output["directory"], output["emit_plot"], effective,
            )
        workers = args.workers
        if workers is None:
            env = os.environ.get("GPLEAP_WORKERS", "").strip()
            workers = int(env) if env else None
        return run(args.subcommand, config, workers)
    except GpleapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
