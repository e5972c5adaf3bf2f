import numpy as np
import numpy.testing as npt
import pytest

from gpleap import (
    ConfigurationError,
    FieldConfig,
    KernelSpec,
    MassMatrix,
    MeanSpec,
    PhaseState,
    SchemeParams,
    SystemConfig,
    UsageError,
    default_initial_state,
    energy_drift_study,
    fit_order,
    global_error_study,
    local_truncation,
    modified_matching_study,
    moment_estimate,
    ms_local_error_study,
    sample_realization,
    tail_probe,
    taylor_remainder_study,
)
from gpleap.analysis import _tensor_opnorms

IDENTITY = MassMatrix.identity(2)
GRID = [2.0**-k for k in range(4, 8)]


def gp_system(d=2, variance=1.0, feature_count=64, mean=None, horizon=1.0, radius=1000.0,
              initial=None):
    mean = MeanSpec.quadratic_well(d) if mean is None else mean
    field = FieldConfig(d, KernelSpec(variance, 1.0), mean, "fourier", feature_count, 0)
    initial = default_initial_state(d) if initial is None else initial
    return SystemConfig(field, MassMatrix.identity(d), initial, horizon, radius)


def free_system(d=2, **kw):
    return gp_system(d=d, variance=0.0, mean=MeanSpec.zero(d), **kw)


class TestFitOrder:
    def test_exact_linear_data(self):
        fit = fit_order([(0.1, 0.01), (0.05, 0.005), (0.025, 0.0025), (0.0125, 0.00125)])
        assert fit.slope == pytest.approx(1.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_exact_quadratic_data(self):
        fit = fit_order([(0.1, 0.01), (0.05, 0.0025), (0.025, 0.000625), (0.0125, 0.00015625)])
        assert fit.slope == pytest.approx(2.0, abs=1e-12)

    def test_three_points_rejected(self):
        with pytest.raises(UsageError):
            fit_order([(0.1, 0.01), (0.05, 0.005), (0.025, 0.0025)])

    def test_zero_rms_degenerate(self):
        fit = fit_order([(0.1, 0.0), (0.05, 0.005), (0.025, 0.0025), (0.0125, 0.00125)])
        assert fit.degenerate
        assert np.isnan(fit.slope)

    def test_scaling_leaves_slope_unchanged(self):
        pts = [(0.1, 0.013), (0.05, 0.0031), (0.025, 0.0008), (0.0125, 0.00021)]
        base = fit_order(pts)
        scaled = fit_order([(dt, 7.5 * r) for dt, r in pts])
        assert scaled.slope == pytest.approx(base.slope, abs=1e-12)
        assert scaled.intercept != pytest.approx(base.intercept, abs=1e-6)


class TestLocalTruncation:
    def test_free_flight_with_position_factor(self):
        # scheme multiplies the position by beta = 1.02; the true free flight does not
        r = sample_realization(free_system().field)
        p = SchemeParams(0.0, 0.0, 0.0, 2.0)
        tau_y, tau_x = local_truncation(r, IDENTITY, p, 0.1, PhaseState([1.0, 0.0], [0.0, 0.0]))
        npt.assert_allclose(tau_y, [-0.02, 0.0], atol=1e-15)
        npt.assert_allclose(tau_x, [0.0, 0.0], atol=1e-15)

    def test_free_flight_standard_scheme_exact(self):
        r = sample_realization(free_system().field)
        # dyadic dt and state keep the comparison exact to the bit
        tau_y, tau_x = local_truncation(r, IDENTITY, SchemeParams.standard(), 0.125,
                                        PhaseState([0.0, 0.0], [1.0, 0.5]))
        npt.assert_array_equal(tau_y, [0.0, 0.0])
        npt.assert_array_equal(tau_x, [0.0, 0.0])

    def test_quadratic_against_closed_form_oscillator(self):
        # oracle: exact flow y(t) = y0 cos t + x0 sin t, x(t) = -y0 sin t + x0 cos t
        r = sample_realization(gp_system(variance=0.0).field)
        dt = 0.1
        state = PhaseState([1.0, 0.0], [0.0, 0.0])
        tau_y, tau_x = local_truncation(r, IDENTITY, SchemeParams.standard(), dt, state)
        exact_y = np.cos(dt) * state.y + np.sin(dt) * state.x
        exact_x = -np.sin(dt) * state.y + np.cos(dt) * state.x
        scheme_y = np.array([0.995, 0.0])
        scheme_x = np.array([-0.09975, 0.0])
        npt.assert_allclose(tau_y, exact_y - scheme_y, atol=1e-12)
        npt.assert_allclose(tau_x, exact_x - scheme_x, atol=1e-12)
        norm = np.sqrt(np.sum(tau_y**2) + np.sum(tau_x**2))
        assert norm == pytest.approx(8.352e-5, rel=5e-4)


class TestLocalErrorStudy:
    def test_default_gp_slope_near_two(self):
        res = ms_local_error_study(gp_system(), SchemeParams(0.0, 1.0, 0.0, 2.0), GRID, 8, 1)
        assert res.outcome == "ok"
        assert res.reliable
        assert 1.85 <= res.fit_joint.slope <= 2.15
        assert res.fit_joint.r_squared >= 0.99

    def test_exact_scheme_degenerate(self):
        res = ms_local_error_study(free_system(), SchemeParams.standard(), GRID, 2, 1)
        assert res.outcome == "degenerate zero errors"
        assert not res.reliable

    def test_negative_control_momentum_slope_near_one(self):
        res = ms_local_error_study(gp_system(), SchemeParams(0.5, 1.0, 0.0, 2.0), GRID, 8, 1)
        assert res.negative_control
        assert 0.85 <= res.fit_x.slope <= 1.15
        # the control separates from the consistent scheme by a clear margin
        positive = ms_local_error_study(gp_system(), SchemeParams(0.0, 1.0, 0.0, 2.0), GRID, 8, 1)
        assert positive.fit_x.slope - res.fit_x.slope >= 0.5

    def test_monotone_refinement(self):
        res = ms_local_error_study(gp_system(), SchemeParams(0.0, 1.0, 0.0, 2.0), GRID, 4, 3)
        rms = [r.rms_joint for r in res.rms_rows]
        ordered = sorted(zip([r.dt for r in res.rms_rows], rms), reverse=True)
        values = [v for _, v in ordered]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_deterministic_rerun(self):
        a = ms_local_error_study(gp_system(), SchemeParams(0.0, 1.0, 0.0, 2.0), GRID, 4, 9)
        b = ms_local_error_study(gp_system(), SchemeParams(0.0, 1.0, 0.0, 2.0), GRID, 4, 9)
        assert a.samples == b.samples

    def test_worker_count_does_not_change_results(self):
        kw = dict(dt_grid=GRID, seed_count=4, master_seed=5, substeps=16)
        serial = ms_local_error_study(gp_system(feature_count=32), SchemeParams(0.0, 1.0, 0.0, 2.0),
                                      workers=1, **kw)
        parallel = ms_local_error_study(gp_system(feature_count=32), SchemeParams(0.0, 1.0, 0.0, 2.0),
                                        workers=2, **kw)
        assert serial.samples == parallel.samples

    def test_conditioned_sampler_rejected(self):
        field = FieldConfig(2, KernelSpec(1.0, 1.0), MeanSpec.quadratic_well(2), "conditioned")
        system = SystemConfig(field, IDENTITY, default_initial_state(2))
        with pytest.raises(ConfigurationError):
            ms_local_error_study(system, SchemeParams.standard(), GRID, 2, 1)


class TestMatchingStudy:
    def test_slope_near_three(self):
        res = modified_matching_study(gp_system(), SchemeParams(0.0, 1.0, 0.0, 2.0), GRID, 8, 1)
        assert 2.8 <= res.fit_joint.slope <= 3.2

    def test_degenerate_when_scheme_equals_flow(self):
        res = modified_matching_study(free_system(), SchemeParams.standard(),
                                      [0.125, 0.0625, 0.03125, 0.015625], 2, 1)
        assert res.outcome == "degenerate zero errors"

    def test_short_grid_rejected(self):
        with pytest.raises(UsageError):
            modified_matching_study(gp_system(), SchemeParams.standard(), [0.1, 0.05, 0.025], 2, 1)


class TestTaylorStudy:
    def test_quadratic_component_slopes(self):
        res = taylor_remainder_study(gp_system(variance=0.0), GRID, 1, 1)
        assert 3.8 <= res.fit_y.slope <= 4.2
        assert 2.8 <= res.fit_x.slope <= 3.2

    def test_gp_component_slopes(self):
        res = taylor_remainder_study(gp_system(), GRID, 8, 1)
        assert 3.8 <= res.fit_y.slope <= 4.2
        assert 2.8 <= res.fit_x.slope <= 3.2

    def test_free_flight_degenerate(self):
        res = taylor_remainder_study(free_system(), [0.125, 0.0625, 0.03125, 0.015625], 2, 1)
        assert res.outcome == "degenerate zero errors"


class TestGlobalStudy:
    def test_oscillator_control_slope_near_two(self):
        system = gp_system(d=1, variance=0.0, initial=PhaseState([1.0], [0.5]))
        res = global_error_study(system, SchemeParams.standard(), GRID, 1, 1, scheme="standard",
                                 ref_substeps_per_dt=16)
        assert 1.8 <= res.fit_joint.slope <= 2.2

    def test_gp_parameterized_slope_near_one(self):
        res = global_error_study(gp_system(feature_count=64), SchemeParams(0.0, 1.0, 0.0, 2.0),
                                 GRID, 8, 1, ref_substeps_per_dt=16)
        assert 0.85 <= res.fit_joint.slope <= 1.35
        assert res.c_hat is not None and res.c_hat > 0

    def test_free_flight_degenerate(self):
        res = global_error_study(free_system(), SchemeParams.standard(),
                                 [0.125, 0.0625, 0.03125, 0.015625], 2, 1, scheme="standard",
                                 ref_substeps_per_dt=8)
        assert res.outcome == "degenerate zero errors"

    def test_escapes_are_counted_and_flagged(self):
        # free flight with momentum: positions grow linearly and leave the ball
        initial = PhaseState([0.0, 0.0], [1.0, 0.0])
        field = FieldConfig(2, KernelSpec(0.0, 1.0), MeanSpec.zero(2), "fourier", 8, 0)
        system = SystemConfig(field, IDENTITY, initial, horizon=4.0, escape_radius=2.0)
        res = global_error_study(system, SchemeParams.standard(),
                                 [0.5, 0.25, 0.125, 0.0625], 3, 1, scheme="standard",
                                 ref_substeps_per_dt=8)
        assert res.max_excluded_fraction == 1.0
        assert not res.reliable
        for row in res.rms_rows:
            assert row.included + row.excluded == 3
        assert all(s.excluded for s in res.samples)

    def test_matches_scalar_stepping(self):
        from gpleap import integrate

        system = gp_system(feature_count=32)
        params = SchemeParams(0.0, 1.0, 0.0, 2.0)
        dt = 0.0625
        res = global_error_study(system, params, GRID, 3, 11, ref_substeps_per_dt=8)
        from dataclasses import replace
        from gpleap import FourierRealization, derive_seeds, reference_solve

        seeds = derive_seeds(11, 3)
        for i, seed in enumerate(seeds):
            r = FourierRealization(replace(system.field, seed=seed))
            traj = integrate("parameterized", r, system.mass, params, dt,
                             system.initial, system.horizon, system.escape_radius)
            ref = reference_solve(r, system.mass, system.initial, system.horizon,
                                  int(round(system.horizon * 8 / min(GRID))))
            end = traj.final_state
            expected = np.sqrt(np.sum((ref.y - end.y) ** 2) + np.sum((ref.x - end.x) ** 2))
            sample = [s for s in res.samples if s.seed == seed and s.dt == dt][0]
            assert sample.err_joint == pytest.approx(float(expected), rel=1e-9)


class TestTensorOpNorm:
    def test_rank_one_tensor_norm_is_cubed_length(self):
        for d in (1, 2, 3):
            w = np.arange(1.0, d + 1.0)
            tensor = np.einsum("i,j,k->ijk", w, w, w)[None]
            norms, method = _tensor_opnorms(tensor)
            assert method == "direction-mesh"
            assert norms[0] == pytest.approx(np.linalg.norm(w) ** 3, rel=1e-4)

    def test_random_symmetric_tensor_against_dense_search(self):
        rng = np.random.default_rng(3)
        raw = rng.standard_normal((2, 2, 2))
        tensor = np.zeros((2, 2, 2))
        import itertools
        for perm in itertools.permutations(range(3)):
            tensor += np.transpose(raw, perm)
        tensor /= 6.0
        norms, _ = _tensor_opnorms(tensor[None])
        # brute force: dense 0.1-degree mesh over both directions
        angles = np.deg2rad(np.arange(0.0, 180.0, 0.1))
        dirs = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
        applied = np.einsum("ijk,ai,bj->abk", tensor, dirs, dirs)
        brute = np.max(np.linalg.norm(applied, axis=-1))
        assert norms[0] == pytest.approx(brute, rel=1e-4)

    def test_high_dimension_falls_back_to_frobenius(self):
        tensor = np.ones((1, 4, 4, 4))
        norms, method = _tensor_opnorms(tensor)
        assert method == "frobenius"
        assert norms[0] == pytest.approx(8.0)


class TestMomentEstimate:
    def test_deterministic_quadratic_mean(self):
        # sup |grad m|^2 = 2 at a corner of [-1,1]^2; Hessian is the identity
        field = FieldConfig(2, KernelSpec(0.0, 1.0), MeanSpec.quadratic_well(2), "fourier", 8, 0)
        report = moment_estimate(field, (-1.0, 1.0), 16, 3)
        assert report.grad_sq == pytest.approx(2.0)
        assert report.hess_sq == pytest.approx(1.0)
        assert report.third_sq == 0.0
        assert report.grad_sq_stderr == 0.0

    def test_zero_field_all_zero(self):
        field = FieldConfig(1, KernelSpec(0.0, 1.0), MeanSpec.zero(1), "fourier", 8, 0)
        report = moment_estimate(field, (-1.0, 1.0), 8, 2)
        assert (report.grad_sq, report.hess_sq, report.third_sq) == (0.0, 0.0, 0.0)

    def test_frobenius_flag_above_three_dimensions(self):
        field = FieldConfig(4, KernelSpec(1.0, 1.0), MeanSpec.zero(4), "fourier", 8, 0)
        report = moment_estimate(field, (-0.5, 0.5), 8, 2)
        assert report.tensor_norm_method == "frobenius"

    def test_resolution_floor(self):
        field = FieldConfig(1, KernelSpec(1.0, 1.0), MeanSpec.zero(1), "fourier", 8, 0)
        with pytest.raises(UsageError):
            moment_estimate(field, (-1.0, 1.0), 4, 2)

    def test_estimates_stabilize_with_seed_doubling(self):
        field = FieldConfig(1, KernelSpec(1.0, 1.0), MeanSpec.zero(1), "fourier", 128, 42)
        small = moment_estimate(field, (-1.0, 1.0), 32, 400)
        large = moment_estimate(field, (-1.0, 1.0), 32, 800)
        for name in ("grad_sq", "hess_sq", "third_sq"):
            a, b = getattr(small, name), getattr(large, name)
            assert abs(b - a) / a < 0.05


class TestTailProbe:
    def make_field(self, variance=1.0, seed=0, feature_count=128):
        return FieldConfig(1, KernelSpec(variance, 1.0), MeanSpec.zero(1), "fourier",
                           feature_count, seed)

    def test_zero_variance_degenerate(self):
        report = tail_probe(self.make_field(variance=0.0), (-1.0, 1.0), None, 50)
        assert report.degenerate

    def test_single_point_matches_gaussian_tail(self):
        # sup over {0} of |dV/dy| is half-normal with scale sqrt(d2k/dydy'(0,0)) = 1
        from scipy.stats import norm

        report = tail_probe(self.make_field(seed=5), (0.0, 0.0), None, 4000, resolution=1)
        for u, s in zip(report.levels, report.survival):
            true = 2 * norm.sf(u)
            se = np.sqrt(max(true * (1 - true), 1e-12) / report.seed_count)
            assert abs(s - true) < 3 * se + 1e-12

    def test_interval_quadratic_signature(self):
        report = tail_probe(self.make_field(seed=2), (-1.0, 1.0), None, 3000, resolution=64)
        assert report.quad_coefficient < 0
        assert report.r_squared >= 0.9

    def test_nonincreasing_survival(self):
        report = tail_probe(self.make_field(seed=3), (-1.0, 1.0), None, 500, resolution=32)
        assert np.all(np.diff(report.survival) <= 0)

    def test_bad_levels_rejected(self):
        with pytest.raises(UsageError):
            tail_probe(self.make_field(), (-1.0, 1.0), [1.0, 0.5], 50)

    def test_unreachable_level_dropped(self):
        report = tail_probe(self.make_field(seed=7), (-1.0, 1.0), [0.5, 1.0, 50.0], 200, resolution=32)
        assert 50.0 in report.dropped_levels


class TestEnergyDrift:
    def test_free_flight_zero_deviation(self):
        system = free_system(initial=PhaseState([0.0, 0.0], [1.0, 0.0]), horizon=1.0)
        report = energy_drift_study(system, 0.1)
        assert report.max_deviation == 0.0
        assert report.relative

    def test_harmonic_below_threshold(self):
        system = gp_system(d=1, variance=0.0, initial=PhaseState([1.0], [0.0]), horizon=100.0)
        report = energy_drift_study(system, 0.01)
        assert report.max_deviation < 1e-3

    def test_zero_initial_energy_reports_absolute(self):
        system = free_system(initial=PhaseState([1.0, 0.0], [0.0, 0.0]), horizon=1.0)
        report = energy_drift_study(system, 0.1)
        assert not report.relative
        assert report.max_deviation == 0.0

    def test_gp_bounded_oscillation(self):
        system = gp_system(feature_count=64, horizon=10.0)
        report = energy_drift_study(system, 0.01)
        assert report.status == "completed"
        assert report.last_decile_mean <= 2 * report.first_decile_mean
