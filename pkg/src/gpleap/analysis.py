"""Monte Carlo studies that turn convergence claims into measured slopes.

Every study follows the same recipe: draw a list of potential realizations
from a master seed, compute an error norm per (realization, dt), reduce to an
RMS per dt, and fit a line to log(RMS) against log(dt). The same realization
seeds are reused across the whole dt grid (common random numbers), so the
slope estimate is much tighter than independent draws would give.

Studies on offer:

* ``ms_local_error_study``   one-step scheme vs the reference flow (slope ~ 2)
* ``modified_matching_study`` one-step scheme vs the flow of the modified
  dt-dependent system (slope ~ 3)
* ``taylor_remainder_study`` reference flow vs the truncated series step
  (position slope ~ 4, momentum slope ~ 3)
* ``global_error_study``     endpoint error at a fixed horizon (slope ~ 1 for
  the damped parameterized scheme, ~ 2 for the standard leapfrog on smooth
  problems)
* ``moment_estimate``        E[sup over a box] of squared derivative norms
* ``tail_probe``             survival curve of the sup of |dV/dy_1| and its
  sub-Gaussian quadratic signature
* ``energy_drift_study``     energy deviation along a standard-leapfrog run

Escaped or overflowing trajectories are excluded and counted, never silently
dropped; any dt with more than 1% exclusions flags the study unreliable.
Fits ignore RMS values below 1e-12 (oracle noise floor).
"""

from __future__ import annotations

import multiprocessing
import os
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import linregress

from .errors import ConfigurationError, IntegrationOverflowError, UsageError
from .field import FieldBatch, FourierRealization, sample_realization
from .hamiltonian import PhaseState, SystemConfig
from .integrators import (
    SchemeParams,
    _leapfrog_arrays,
    alpha_of,
    beta_of,
    exact_taylor_step,
    integrate,
    leapfrog_param_step,
    modified_flow_step,
    reference_solve,
)

NOISE_FLOOR = 1e-12
MAX_EXCLUDED_FRACTION = 0.01
DEGENERATE_OUTCOME = "degenerate zero errors"


def derive_seeds(master_seed, count):
    """Deterministic per-realization seeds from one master seed."""
    state = np.random.SeedSequence(master_seed).generate_state(count, np.uint64)
    return [int(s) for s in state]


def _resolve_workers(workers):
    if workers is None:
        env = os.environ.get("GPLEAP_WORKERS", "").strip()
        workers = int(env) if env else 1
    return max(1, int(workers))


def _map(task, payloads, workers):
    """Map a task over payloads, optionally across processes. Results come
    back in payload order, so the reduction is deterministic either way."""
    workers = _resolve_workers(workers)
    if workers == 1 or len(payloads) <= 1:
        return [task(p) for p in payloads]
    with multiprocessing.Pool(workers) as pool:
        return pool.map(task, payloads, chunksize=1)


@dataclass(frozen=True)
class ErrorSample:
    """One (dt, realization) error measurement; excluded samples carry no norms."""

    dt: float
    seed: int
    err_y: float
    err_x: float
    err_joint: float
    excluded: bool


@dataclass(frozen=True)
class OrderFit:
    """Least-squares line through (log dt, log RMS)."""

    slope: float
    intercept: float
    r_squared: float
    dts: tuple
    counts: tuple
    degenerate: bool = False
    reason: str = ""


@dataclass(frozen=True)
class RmsRow:
    dt: float
    rms_y: float
    rms_x: float
    rms_joint: float
    included: int
    excluded: int


@dataclass(frozen=True, eq=False)
class StudyResult:
    samples: list
    rms_rows: list
    fit_joint: OrderFit
    fit_y: OrderFit
    fit_x: OrderFit
    outcome: str
    reliable: bool
    max_excluded_fraction: float
    negative_control: bool = False
    c_hat: float | None = None


def fit_order(points, counts=None) -> OrderFit:
    """Fit log(rms) = slope*log(dt) + intercept. Needs at least 4 distinct dt
    values; any zero rms yields a degenerate result instead of a fit."""
    points = [(float(dt), float(rms)) for dt, rms in points]
    dts = tuple(dt for dt, _ in points)
    counts = tuple(counts) if counts is not None else tuple()
    if len(points) < 4 or len(set(dts)) < 4:
        raise UsageError("order fit needs at least 4 distinct dt values")
    if any(rms < 0 for _, rms in points):
        raise UsageError("rms values must be nonnegative")
    if any(rms == 0 for _, rms in points):
        return OrderFit(np.nan, np.nan, np.nan, dts, counts, True, "zero rms")
    res = linregress(np.log([dt for dt, _ in points]), np.log([rms for _, rms in points]))
    return OrderFit(float(res.slope), float(res.intercept), float(res.rvalue**2), dts, counts)


def _fit_with_floor(rows, component) -> OrderFit:
    usable = [(r.dt, getattr(r, component)) for r in rows if r.included > 0 and getattr(r, component) > NOISE_FLOOR]
    counts = [r.included for r in rows if r.included > 0 and getattr(r, component) > NOISE_FLOOR]
    all_dts = tuple(r.dt for r in rows)
    if len(usable) < 4 or len({dt for dt, _ in usable}) < 4:
        return OrderFit(
            np.nan, np.nan, np.nan, all_dts, tuple(),
            True, "fewer than 4 step sizes with errors above the noise floor",
        )
    return fit_order(usable, counts)


def local_truncation(realization, mass, params, dt, state, substeps=64):
    """Reference one-step flow minus one scheme step, componentwise."""
    ref = reference_solve(realization, mass, state, dt, substeps)
    step = leapfrog_param_step(realization, mass, params, dt, state)
    return ref.y - step.y, ref.x - step.x


def _one_step_task(payload):
    mode, seed, system, params, dt_grid, substeps = payload
    config = replace(system.field, seed=seed)
    realization = FourierRealization(config)
    state = system.initial
    rows = []
    for dt in dt_grid:
        try:
            if mode == "local":
                a = reference_solve(realization, system.mass, state, dt, substeps)
                b = leapfrog_param_step(realization, system.mass, params, dt, state)
            elif mode == "matching":
                a = leapfrog_param_step(realization, system.mass, params, dt, state)
                b = modified_flow_step(realization, system.mass, params, dt, state, substeps)
            else:
                a = reference_solve(realization, system.mass, state, dt, substeps)
                b = exact_taylor_step(realization, system.mass, dt, state)
            dy = a.y - b.y
            dx = a.x - b.x
            rows.append((
                float(np.linalg.norm(dy)),
                float(np.linalg.norm(dx)),
                float(np.sqrt(np.sum(dy**2) + np.sum(dx**2))),
                False,
            ))
        except IntegrationOverflowError:
            rows.append((np.nan, np.nan, np.nan, True))
    return rows


def _validate_study_args(dt_grid, seed_count):
    dt_grid = [float(dt) for dt in dt_grid]
    if any(not np.isfinite(dt) or dt <= 0 for dt in dt_grid):
        raise UsageError("dt grid entries must be finite and > 0")
    if len(dt_grid) < 4 or len(set(dt_grid)) < 4:
        raise UsageError("studies need at least 4 distinct dt values")
    if seed_count < 1:
        raise UsageError("seed count must be >= 1")
    return dt_grid


def _require_fourier(system: SystemConfig):
    if system.field.sampler != "fourier":
        raise ConfigurationError("studies require the fourier sampler (conditioned is validation-only)")


def _assemble(dt_grid, seeds, rows_per_seed, negative_control=False, c_hat=None) -> StudyResult:
    samples = []
    rms_rows = []
    for j, dt in enumerate(dt_grid):
        sq_y, sq_x, sq_j = [], [], []
        excluded = 0
        for i, seed in enumerate(seeds):
            err_y, err_x, err_joint, skip = rows_per_seed[i][j]
            samples.append(ErrorSample(dt, seed, err_y, err_x, err_joint, skip))
            if skip:
                excluded += 1
            else:
                sq_y.append(err_y**2)
                sq_x.append(err_x**2)
                sq_j.append(err_joint**2)
        included = len(seeds) - excluded
        if included:
            rms_rows.append(RmsRow(
                dt,
                float(np.sqrt(np.mean(sq_y))),
                float(np.sqrt(np.mean(sq_x))),
                float(np.sqrt(np.mean(sq_j))),
                included, excluded,
            ))
        else:
            rms_rows.append(RmsRow(dt, np.nan, np.nan, np.nan, 0, excluded))

    fit_joint = _fit_with_floor(rms_rows, "rms_joint")
    fit_y = _fit_with_floor(rms_rows, "rms_y")
    fit_x = _fit_with_floor(rms_rows, "rms_x")
    fractions = [r.excluded / (r.included + r.excluded) for r in rms_rows]
    max_fraction = max(fractions) if fractions else 0.0
    outcome = DEGENERATE_OUTCOME if fit_joint.degenerate else "ok"
    reliable = max_fraction <= MAX_EXCLUDED_FRACTION and not fit_joint.degenerate
    return StudyResult(
        samples, rms_rows, fit_joint, fit_y, fit_x, outcome, reliable,
        max_fraction, negative_control, c_hat,
    )


def _one_step_study(mode, system, params, dt_grid, seed_count, master_seed, substeps, workers):
    _require_fourier(system)
    dt_grid = _validate_study_args(dt_grid, seed_count)
    seeds = derive_seeds(master_seed, seed_count)
    payloads = [(mode, s, system, params, dt_grid, substeps) for s in seeds]
    rows = _map(_one_step_task, payloads, workers)
    negative = params is not None and not params.first_order_free
    return _assemble(dt_grid, seeds, rows, negative_control=negative)


def ms_local_error_study(system: SystemConfig, params: SchemeParams, dt_grid, seed_count,
                         master_seed, substeps=64, workers=None) -> StudyResult:
    """RMS one-step truncation error vs dt; slope targets 2 when
    alpha1 = beta1 = 0 (with nonzero alpha1 the momentum slope drops to 1)."""
    return _one_step_study("local", system, params, dt_grid, seed_count, master_seed, substeps, workers)


def modified_matching_study(system: SystemConfig, params: SchemeParams, dt_grid, seed_count,
                            master_seed, substeps=64, workers=None) -> StudyResult:
    """RMS distance between one scheme step and the modified flow; slope targets 3."""
    return _one_step_study("matching", system, params, dt_grid, seed_count, master_seed, substeps, workers)


def taylor_remainder_study(system: SystemConfig, dt_grid, seed_count, master_seed,
                           substeps=64, workers=None) -> StudyResult:
    """RMS distance between the reference one-step flow and the truncated series
    step; position slope targets 4 and momentum slope targets 3."""
    return _one_step_study("taylor", system, None, dt_grid, seed_count, master_seed, substeps, workers)


def global_error_study(system: SystemConfig, params: SchemeParams, dt_grid, seed_count,
                       master_seed, scheme="parameterized", ref_substeps_per_dt=64,
                       workers=None) -> StudyResult:
    """Endpoint error at the horizon vs dt. The reference endpoint is computed
    once per realization on a grid of (finest dt) / ref_substeps_per_dt; all
    realizations are advanced together through stacked feature arrays, so
    ``workers`` is not consulted here. Also reports the implied constant
    c_hat = max over dt of RMS/dt."""
    if scheme not in ("parameterized", "standard"):
        raise UsageError("scheme must be 'parameterized' or 'standard'")
    _require_fourier(system)
    dt_grid = _validate_study_args(dt_grid, seed_count)
    if ref_substeps_per_dt < 1:
        raise UsageError("ref_substeps_per_dt must be >= 1")
    params_eff = SchemeParams.standard() if scheme == "standard" else params

    seeds = derive_seeds(master_seed, seed_count)
    realizations = [FourierRealization(replace(system.field, seed=s)) for s in seeds]
    batch = FieldBatch(realizations)
    count = len(seeds)
    y0 = np.tile(system.initial.y, (count, 1))
    x0 = np.tile(system.initial.x, (count, 1))

    horizon = system.horizon
    n_ref = max(1, int(round(horizon * ref_substeps_per_dt / min(dt_grid))))
    ref = reference_solve(batch, system.mass, PhaseState(y0, x0), horizon, n_ref)

    radius = system.escape_radius
    rows_per_seed = [[] for _ in seeds]
    for dt in dt_grid:
        alpha = alpha_of(params_eff, dt)
        beta = beta_of(params_eff, dt)
        n_steps = int(np.floor(horizon / dt + 1e-9))
        y, x = y0.copy(), x0.copy()
        escaped_at = np.full(count, -1)
        for n in range(1, n_steps + 1):
            y1, x1 = _leapfrog_arrays(batch, system.mass, alpha, beta, dt, y, x)
            finite = np.all(np.isfinite(y1), axis=1) & np.all(np.isfinite(x1), axis=1)
            with np.errstate(invalid="ignore", over="ignore"):
                norms = np.sqrt(np.sum(y1**2, axis=1) + np.sum(x1**2, axis=1))
            bad = (~finite) | (norms > radius)
            escaped_at[bad & (escaped_at < 0)] = n
            active = (escaped_at < 0)[:, None]
            y = np.where(active, y1, y)
            x = np.where(active, x1, x)
        dy = ref.y - y
        dx = ref.x - x
        err_y = np.linalg.norm(dy, axis=1)
        err_x = np.linalg.norm(dx, axis=1)
        err_joint = np.sqrt(err_y**2 + err_x**2)
        for i in range(count):
            if escaped_at[i] >= 0:
                rows_per_seed[i].append((np.nan, np.nan, np.nan, True))
            else:
                rows_per_seed[i].append((float(err_y[i]), float(err_x[i]), float(err_joint[i]), False))

    result = _assemble(dt_grid, seeds, rows_per_seed,
                       negative_control=not params_eff.first_order_free)
    ratios = [r.rms_joint / r.dt for r in result.rms_rows if r.included > 0 and np.isfinite(r.rms_joint)]
    c_hat = float(max(ratios)) if ratios else None
    return replace(result, c_hat=c_hat)


# --- derivative-moment and tail diagnostics ---------------------------------


@dataclass(frozen=True, eq=False)
class MomentReport:
    """Empirical E[sup over a grid] of squared derivative norms, with
    Monte Carlo standard errors and the per-realization sups."""

    grad_sq: float
    grad_sq_stderr: float
    hess_sq: float
    hess_sq_stderr: float
    third_sq: float
    third_sq_stderr: float
    per_seed_grad_sq: np.ndarray
    per_seed_hess_sq: np.ndarray
    per_seed_third_sq: np.ndarray
    box: tuple
    resolution: int
    seed_count: int
    tensor_norm_method: str


def _grid_points(box, resolution, dimension):
    lo, hi = float(box[0]), float(box[1])
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
        raise UsageError("box must be a finite (lo, hi) pair with lo <= hi")
    axis = np.linspace(lo, hi, resolution) if hi > lo else np.array([lo])
    grids = np.meshgrid(*([axis] * dimension), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def _tensor_opnorms(tensors):
    """Operator norms of a batch of symmetric 3-tensors (..., d, d, d).

    For d <= 3 the second direction is scanned on a 1-degree mesh while the
    first is maximized exactly through the largest singular value, keeping the
    approximation error below 0.1%. Larger d falls back to the Frobenius
    upper bound (see the caller's report flag).
    """
    d = tensors.shape[-1]
    if d == 1:
        return np.abs(tensors[..., 0, 0, 0]), "direction-mesh"
    if d == 2:
        angles = np.deg2rad(np.arange(180.0))
        dirs = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
        b = np.einsum("...ijk,aj->...aik", tensors, dirs)
        fro2 = np.sum(b * b, axis=(-2, -1))
        det = b[..., 0, 0] * b[..., 1, 1] - b[..., 0, 1] * b[..., 1, 0]
        smax2 = 0.5 * (fro2 + np.sqrt(np.clip(fro2**2 - 4.0 * det**2, 0.0, None)))
        return np.sqrt(np.max(smax2, axis=-1)), "direction-mesh"
    if d == 3:
        theta = np.deg2rad(np.arange(181.0))
        phi = np.deg2rad(np.arange(180.0))
        tt, pp = np.meshgrid(theta, phi, indexing="ij")
        dirs = np.stack(
            [np.sin(tt) * np.cos(pp), np.sin(tt) * np.sin(pp), np.cos(tt)], axis=-1
        ).reshape(-1, 3)
        flat = tensors.reshape(-1, 3, 3, 3)
        out = np.empty(flat.shape[0])
        for i, t in enumerate(flat):
            b = np.einsum("ijk,aj->aik", t, dirs)
            svals = np.linalg.svd(b, compute_uv=False)
            out[i] = svals[:, 0].max()
        return out.reshape(tensors.shape[:-3]), "direction-mesh"
    return np.sqrt(np.sum(tensors**2, axis=(-3, -2, -1))), "frobenius"


def _moment_task(payload):
    seed, config, grid = payload
    realization = FourierRealization(replace(config, seed=seed))
    grads = realization.eval_grad(grid)
    sup_grad = float(np.max(np.sum(grads**2, axis=-1)))
    hessians = realization.eval_hessian(grid)
    eigs = np.linalg.eigvalsh(hessians)
    sup_hess = float(np.max(np.abs(eigs)) ** 2)
    tensors = realization.eval_third_tensor(grid)
    norms, method = _tensor_opnorms(tensors)
    sup_third = float(np.max(norms) ** 2)
    return sup_grad, sup_hess, sup_third, method


def moment_estimate(field_config, box, resolution, seed_count, workers=None) -> MomentReport:
    """Estimate E[sup_D |grad V|^2], E[sup_D |D^2 V|_op^2] and
    E[sup_D |D^3 V|_op^2] over a uniform grid on the box D = [lo, hi]^d.
    ``field_config.seed`` acts as the master seed."""
    if field_config.sampler != "fourier":
        raise ConfigurationError("moment estimates require the fourier sampler")
    if resolution < 8:
        raise UsageError("grid resolution must be >= 8 per axis")
    if seed_count < 1:
        raise UsageError("seed count must be >= 1")
    grid = _grid_points(box, resolution, field_config.dimension)
    seeds = derive_seeds(field_config.seed, seed_count)
    rows = _map(_moment_task, [(s, field_config, grid) for s in seeds], workers)
    grad_sq = np.array([r[0] for r in rows])
    hess_sq = np.array([r[1] for r in rows])
    third_sq = np.array([r[2] for r in rows])
    method = rows[0][3]

    def stderr(values):
        if values.size < 2:
            return 0.0
        return float(np.std(values, ddof=1) / np.sqrt(values.size))

    return MomentReport(
        float(grad_sq.mean()), stderr(grad_sq),
        float(hess_sq.mean()), stderr(hess_sq),
        float(third_sq.mean()), stderr(third_sq),
        grad_sq, hess_sq, third_sq,
        (float(box[0]), float(box[1])), int(resolution), int(seed_count), method,
    )


@dataclass(frozen=True, eq=False)
class TailReport:
    """Empirical survival of sup_D |dV/dy_1| and the quadratic fit of its
    log-survival beyond the empirical mean (sub-Gaussian signature)."""

    levels: np.ndarray
    survival: np.ndarray
    mean_sup: float
    sup_std: float
    quad_coefficient: float
    intercept: float
    r_squared: float
    dropped_levels: list
    concave: bool
    degenerate: bool
    seed_count: int
    per_seed_sups: np.ndarray


def _tail_task(payload):
    seed, config, grid = payload
    realization = FourierRealization(replace(config, seed=seed))
    grads = realization.eval_grad(grid)
    return float(np.max(np.abs(grads[..., 0])))


def tail_probe(field_config, box, levels, seed_count, resolution=128, workers=None) -> TailReport:
    """Survival curve of the grid sup of |dV/dy_1| over ``seed_count``
    realizations. Levels with fewer than 10 exceedances are dropped from the
    fit and reported. With ``levels=None`` the levels are placed at the
    empirical mean plus 0.25..2.5 standard deviations."""
    if field_config.sampler != "fourier":
        raise ConfigurationError("tail probes require the fourier sampler")
    if seed_count < 1:
        raise UsageError("seed count must be >= 1")
    grid = _grid_points(box, resolution, field_config.dimension)
    seeds = derive_seeds(field_config.seed, seed_count)
    sups = np.array(_map(_tail_task, [(s, field_config, grid) for s in seeds], workers))
    mean_sup = float(sups.mean())
    sup_std = float(sups.std(ddof=1)) if sups.size > 1 else 0.0
    degenerate = field_config.kernel.variance == 0.0 or sup_std == 0.0

    if levels is None:
        if degenerate:
            levels = np.array([mean_sup])
        else:
            levels = mean_sup + np.linspace(0.25, 2.5, 10) * sup_std
    levels = np.asarray(levels, dtype=float)
    if levels.size > 1 and np.any(np.diff(levels) <= 0):
        raise UsageError("levels must be strictly increasing")

    counts = np.array([(sups > u).sum() for u in levels])
    survival = counts / sups.size

    dropped = [float(u) for u, c in zip(levels, counts) if c < 10]
    usable = [(u, c / sups.size) for u, c in zip(levels, counts) if c >= 10 and u > mean_sup]
    if degenerate or len(usable) < 3:
        coeff, intercept, r_sq = np.nan, np.nan, np.nan
        concave = False
        degenerate = True
    else:
        xs = np.array([(u - mean_sup) ** 2 for u, _ in usable])
        ys = np.log([s for _, s in usable])
        res = linregress(xs, ys)
        coeff, intercept, r_sq = float(res.slope), float(res.intercept), float(res.rvalue**2)
        us = np.array([u for u, _ in usable])
        slopes = np.diff(ys) / np.diff(us)
        concave = bool(np.all(np.diff(slopes) <= 1e-9))

    return TailReport(levels, survival, mean_sup, sup_std, coeff, intercept, r_sq,
                      dropped, concave, degenerate, int(seed_count), sups)


@dataclass(frozen=True, eq=False)
class EnergyDriftReport:
    """Energy deviation along one standard-leapfrog trajectory. ``relative``
    is False when the initial energy is (numerically) zero, in which case the
    deviations are absolute."""

    max_deviation: float
    relative: bool
    initial_energy: float
    first_decile_mean: float
    last_decile_mean: float
    deviations: np.ndarray
    status: str
    escape_step: int | None


def energy_drift_study(system: SystemConfig, dt, horizon=None) -> EnergyDriftReport:
    """max_n |H_n - H_0| / |H_0| for the standard leapfrog, plus first/last
    decile means of the deviation series (a bounded-oscillation check)."""
    horizon = system.horizon if horizon is None else float(horizon)
    realization = sample_realization(system.field)
    trajectory = integrate("standard", realization, system.mass, SchemeParams.standard(),
                           dt, system.initial, horizon, system.escape_radius)
    h0 = float(trajectory.energies[0])
    deviations = np.abs(trajectory.energies - h0)
    relative = abs(h0) > 1e-12
    if relative:
        deviations = deviations / abs(h0)
    series = deviations[1:] if deviations.size > 1 else deviations
    decile = max(1, series.size // 10)
    return EnergyDriftReport(
        float(series.max()) if series.size else 0.0,
        relative,
        h0,
        float(series[:decile].mean()),
        float(series[-decile:].mean()),
        deviations,
        trajectory.status,
        trajectory.escape_step,
    )
