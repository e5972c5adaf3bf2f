"""Steppers: the parameterized leapfrog, its modified continuous-time system,
the truncated series step, and a fourth-order reference flow.

The one-step scheme scales the momentum and position updates by factors

    alpha(dt) = 1 + alpha1*dt + alpha2*dt^2
    beta(dt)  = 1 + beta1*dt + beta2*dt^2

and reduces to the standard leapfrog when all coefficients vanish:

    y+ = beta*y + dt * M^-1 (alpha*x - dt/2 * grad V(y))
    x+ = alpha^2 * x - dt/2 * (alpha * grad V(y) + grad V(y+))

Each step evaluates the gradient exactly twice, at y and then at y+, so a
stateful (conditioned) sampler sees a well-defined query sequence.

``modified_rhs`` is the dt-dependent vector field whose exact flow the scheme
follows to third order in dt; ``exact_taylor_step`` is the series expansion of
the true flow truncated after dt^3 in position and dt^2 in momentum;
``reference_solve`` is a classical Runge-Kutta-4 integrator on a uniform fine
grid, used everywhere as the exact-flow oracle (validated by self-convergence,
never trusted blindly).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, IntegrationOverflowError, UsageError
from .hamiltonian import MassMatrix, PhaseState


@dataclass(frozen=True)
class SchemeParams:
    """Expansion coefficients of the update factors; remainders are identically zero,
    so alpha_of/beta_of are exact quadratics in dt."""

    alpha1: float = 0.0
    alpha2: float = 0.0
    beta1: float = 0.0
    beta2: float = 0.0

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "beta1", "beta2"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigurationError(f"scheme.{name} must be finite")

    @classmethod
    def standard(cls):
        return cls(0.0, 0.0, 0.0, 0.0)

    @property
    def first_order_free(self):
        return self.alpha1 == 0.0 and self.beta1 == 0.0


_STANDARD = SchemeParams()


def alpha_of(params: SchemeParams, dt):
    return 1.0 + params.alpha1 * dt + params.alpha2 * dt * dt


def beta_of(params: SchemeParams, dt):
    return 1.0 + params.beta1 * dt + params.beta2 * dt * dt


def _leapfrog_arrays(realization, mass, alpha, beta, dt, y, x):
    g0 = realization.eval_grad(y)
    y1 = beta * y + dt * mass.apply_minv(alpha * x - 0.5 * dt * g0)
    g1 = realization.eval_grad(y1)
    x1 = (alpha * alpha) * x - 0.5 * dt * (alpha * g0 + g1)
    return y1, x1


def leapfrog_param_step(realization, mass: MassMatrix, params: SchemeParams, dt, state: PhaseState):
    """One step of the parameterized leapfrog."""
    y1, x1 = _leapfrog_arrays(
        realization, mass, alpha_of(params, dt), beta_of(params, dt), dt, state.y, state.x
    )
    if not (np.all(np.isfinite(y1)) and np.all(np.isfinite(x1))):
        raise IntegrationOverflowError("non-finite state after a leapfrog step")
    return PhaseState(y1, x1)


def leapfrog_standard_step(realization, mass: MassMatrix, dt, state: PhaseState):
    """The standard leapfrog: the parameterized step with all coefficients zero."""
    return leapfrog_param_step(realization, mass, _STANDARD, dt, state)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States at t_n = n*dt with per-step energies. ``status`` is 'completed'
    or 'escaped'; an escaped trajectory ends with the state that crossed the
    escape radius and ``escape_step`` is that step index."""

    dt: float
    ys: np.ndarray          # (n_states, d)
    xs: np.ndarray          # (n_states, d)
    energies: np.ndarray    # (n_states,)
    status: str
    escape_step: int | None = None

    @property
    def n_states(self):
        return self.ys.shape[0]

    @property
    def times(self):
        return self.dt * np.arange(self.n_states)

    def state(self, n) -> PhaseState:
        return PhaseState(self.ys[n], self.xs[n])

    @property
    def final_state(self) -> PhaseState:
        return self.state(self.n_states - 1)


def integrate(kind, realization, mass: MassMatrix, params: SchemeParams, dt, initial: PhaseState,
              horizon, escape_radius) -> Trajectory:
    """Step until t >= horizon or the joint norm exceeds the escape radius.

    ``kind`` is 'parameterized' or 'standard'. Escapes are recorded outcomes,
    not errors; a non-finite state raises with the offending step index.
    """
    if kind not in ("parameterized", "standard"):
        raise UsageError("scheme kind must be 'parameterized' or 'standard'")
    if not dt > 0:
        raise UsageError("dt must be > 0")
    if not horizon > 0:
        raise UsageError("horizon must be > 0")
    if not escape_radius > float(initial.joint_norm()):
        raise UsageError("escape radius must exceed the initial state norm")
    params = _STANDARD if kind == "standard" else params
    alpha = alpha_of(params, dt)
    beta = beta_of(params, dt)

    n_steps = int(np.floor(horizon / dt + 1e-9))
    d = initial.dimension
    ys = np.empty((n_steps + 1, d))
    xs = np.empty((n_steps + 1, d))
    energies = np.empty(n_steps + 1)
    y, x = initial.y.copy(), initial.x.copy()
    ys[0], xs[0] = y, x
    energies[0] = 0.5 * mass.minv_quadratic(x) + realization.eval_potential(y)

    for n in range(1, n_steps + 1):
        y, x = _leapfrog_arrays(realization, mass, alpha, beta, dt, y, x)
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise IntegrationOverflowError(f"non-finite state at step {n}", step=n)
        ys[n], xs[n] = y, x
        energies[n] = 0.5 * mass.minv_quadratic(x) + realization.eval_potential(y)
        if np.sqrt(np.sum(y**2) + np.sum(x**2)) > escape_radius:
            return Trajectory(dt, ys[: n + 1], xs[: n + 1], energies[: n + 1], "escaped", n)
    return Trajectory(dt, ys, xs, energies, "completed")


def _rk4(rhs, y, x, span, substeps):
    h = span / substeps
    for _ in range(substeps):
        k1y, k1x = rhs(y, x)
        k2y, k2x = rhs(y + 0.5 * h * k1y, x + 0.5 * h * k1x)
        k3y, k3x = rhs(y + 0.5 * h * k2y, x + 0.5 * h * k2x)
        k4y, k4x = rhs(y + h * k3y, x + h * k3x)
        y = y + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    return y, x


def reference_solve(realization, mass: MassMatrix, state: PhaseState, horizon, substeps) -> PhaseState:
    """High-accuracy flow of the underlying system via classical RK4 on a
    uniform grid of ``substeps`` steps over [0, horizon]. Broadcasts over
    batched states (and batched realizations via FieldBatch)."""
    if substeps < 1:
        raise UsageError("substeps must be >= 1")
    if horizon == 0:
        return PhaseState(state.y.copy(), state.x.copy())

    def rhs(y, x):
        return mass.apply_minv(x), -realization.eval_grad(y)

    y, x = _rk4(rhs, state.y, state.x, horizon, substeps)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
        raise IntegrationOverflowError("non-finite state in reference solve")
    return PhaseState(y, x)


def _modified_rhs_arrays(realization, mass, params, dt, y, x):
    minv_x = mass.apply_minv(x)
    g = realization.eval_grad(y)
    dy = (
        params.beta1 * y
        + minv_x
        + dt * ((params.beta2 - 0.5 * params.beta1**2) * y - 0.5 * params.beta1 * minv_x)
    )
    dx = (
        2.0 * params.alpha1 * x
        - g
        + dt * ((2.0 * params.alpha2 - params.alpha1**2) * x + 0.5 * params.alpha1 * g)
    )
    return dy, dx


def modified_rhs(realization, mass: MassMatrix, params: SchemeParams, dt, state: PhaseState):
    """Vector field of the dt-dependent system the scheme follows to third order.
    At dt = 0 with alpha1 = beta1 = 0 this is exactly the underlying system."""
    if dt < 0:
        raise UsageError("dt must be >= 0")
    return _modified_rhs_arrays(realization, mass, params, dt, state.y, state.x)


def modified_flow_step(realization, mass: MassMatrix, params: SchemeParams, dt, state: PhaseState,
                       substeps=64) -> PhaseState:
    """Advance the modified system by time dt, holding dt fixed inside the
    vector field, using RK4 on an internal grid of ``substeps`` steps."""
    if substeps < 16:
        raise UsageError("modified flow needs at least 16 internal substeps")
    if dt == 0:
        return PhaseState(state.y.copy(), state.x.copy())

    def rhs(y, x):
        return _modified_rhs_arrays(realization, mass, params, dt, y, x)

    y, x = _rk4(rhs, state.y, state.x, dt, substeps)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
        raise IntegrationOverflowError("non-finite state in modified flow step")
    return PhaseState(y, x)


def exact_taylor_step(realization, mass: MassMatrix, dt, state: PhaseState) -> PhaseState:
    """Series expansion of the true flow truncated after the dt^3 position term
    and the dt^2 momentum term, using the gradient and Hessian at the start."""
    g = realization.eval_grad(state.y)
    hess = realization.eval_hessian(state.y)
    minv_x = mass.apply_minv(state.x)
    hess_minv_x = hess @ minv_x
    y1 = (
        state.y
        + dt * minv_x
        - 0.5 * dt * dt * mass.apply_minv(g)
        - (dt**3 / 6.0) * mass.apply_minv(hess_minv_x)
    )
    x1 = state.x - dt * g - 0.5 * dt * dt * hess_minv_x
    return PhaseState(y1, x1)
