"""Measure every convergence order of the parameterized leapfrog at desk scale.

The scheme scales the momentum update by alpha(dt) = 1 + alpha2*dt^2 and the
position update by beta(dt) = 1 + beta2*dt^2. Four slopes tell the story:

  one-step error vs the true flow          -> 2   (mean-square local order)
  one-step error vs the modified flow      -> 3   (what the scheme really solves)
  truncated series vs the true flow        -> 4/3 (position / momentum)
  endpoint error at T=1 vs the true flow   -> 1   (global mean-square order)

Setting alpha1 = 0.5 breaks the first-order consistency condition and the
momentum local slope collapses to 1 - the negative control.
"""

import numpy as np

from gpleap import (
    FieldConfig, KernelSpec, MassMatrix, MeanSpec, SchemeParams, SystemConfig,
    default_initial_state, global_error_study, modified_matching_study,
    ms_local_error_study, taylor_remainder_study,
)

field = FieldConfig(2, KernelSpec(1.0, 1.0), MeanSpec.quadratic_well(2),
                    feature_count=256, seed=0)
system = SystemConfig(field, MassMatrix.identity(2), default_initial_state(2),
                      horizon=1.0, escape_radius=1000.0)
params = SchemeParams(alpha1=0.0, alpha2=1.0, beta1=0.0, beta2=2.0)
dt_grid = [2.0**-k for k in range(4, 9)]
seeds, master = 16, 1

print(f"{'study':<34}{'slope':>8}{'R^2':>10}")
print("-" * 52)

local = ms_local_error_study(system, params, dt_grid, seeds, master)
print(f"{'local truncation (target 2)':<34}{local.fit_joint.slope:>8.3f}{local.fit_joint.r_squared:>10.5f}")

matching = modified_matching_study(system, params, dt_grid, seeds, master)
print(f"{'modified-flow matching (target 3)':<34}{matching.fit_joint.slope:>8.3f}{matching.fit_joint.r_squared:>10.5f}")

taylor = taylor_remainder_study(system, dt_grid, seeds, master)
print(f"{'series remainder, position (4)':<34}{taylor.fit_y.slope:>8.3f}{taylor.fit_y.r_squared:>10.5f}")
print(f"{'series remainder, momentum (3)':<34}{taylor.fit_x.slope:>8.3f}{taylor.fit_x.r_squared:>10.5f}")

global_fit = global_error_study(system, params, dt_grid, seeds, master,
                                ref_substeps_per_dt=16)
print(f"{'global endpoint (target 1)':<34}{global_fit.fit_joint.slope:>8.3f}{global_fit.fit_joint.r_squared:>10.5f}")
print(f"  implied constant c_hat = max RMS/dt = {global_fit.c_hat:.3f}")

control = ms_local_error_study(system, SchemeParams(0.5, 1.0, 0.0, 2.0),
                               dt_grid, seeds, master)
print(f"{'negative control, momentum (1)':<34}{control.fit_x.slope:>8.3f}{control.fit_x.r_squared:>10.5f}")

print()
print("RMS table of the global study (errors halve with dt, slope 1):")
for row in global_fit.rms_rows:
    print(f"  dt = {row.dt:<12.6g} rms = {row.rms_joint:.4e}  ({row.included} included)")
