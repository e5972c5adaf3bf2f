"""Gaussian random potentials with analytically consistent derivatives.

The potential V is a Gaussian process on R^d with a polynomial mean
m(y) = c0 + c1.y + y.C2.y/2 and a squared-exponential covariance

    k(y, y') = variance * exp(-|y - y'|^2 / (2 * lengthscale^2)).

Two samplers are provided:

* ``fourier`` (default): a random-Fourier-feature construction

      V(y) = m(y) + sum_f [ a_f cos(w_f . y) + b_f sin(w_f . y) ]

  with frequencies w_f ~ N(0, lengthscale^-2 I) and weights
  a_f, b_f ~ N(0, variance / F). Conditional on the frequencies this is an
  exact Gaussian field, its covariance converges to k as F grows, and each
  draw is a fixed smooth function with closed-form gradient, Hessian and
  third-derivative tensor. Unconditionally, the mean and covariance of
  (V, grad V, ...) at any finite point set match m and the kernel
  cross-derivatives exactly for every F.

* ``conditioned``: draws values of V, grad V and the Hessian at query
  points from the exact joint Gaussian law implied by (m, k), conditioning
  sequentially on everything returned so far. Exact but stateful; it serves
  as a distributional cross-check for the fourier sampler and stops at
  derivative order two.

``kernel_cross_derivative`` supplies the mixed partial derivatives of k
that define the covariances between derivative observations; for the
squared-exponential kernel these factor per coordinate into Hermite
polynomials.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import hermite_e
from scipy.linalg import cho_solve

from .errors import (
    ConditioningError,
    ConfigurationError,
    UnsupportedOperationError,
    UsageError,
)

COINCIDENCE_TOL = 1e-12
JITTER_FACTOR = 1e-10


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Squared-exponential covariance (the only supported kind)."""

    variance: float = 1.0
    lengthscale: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.variance) or self.variance < 0:
            raise ConfigurationError("kernel.variance must be finite and >= 0")
        if not np.isfinite(self.lengthscale) or self.lengthscale <= 0:
            raise ConfigurationError("kernel.lengthscale must be finite and > 0")

    def __call__(self, y, y_prime):
        y = np.asarray(y, dtype=float)
        y_prime = np.asarray(y_prime, dtype=float)
        sq = np.sum((y - y_prime) ** 2, axis=-1)
        return self.variance * np.exp(-0.5 * sq / self.lengthscale**2)


@dataclass(frozen=True, eq=False)
class MeanSpec:
    """Polynomial mean m(y) = constant + linear.y + y.quadratic.y / 2."""

    constant: float
    linear: np.ndarray
    quadratic: np.ndarray

    def __post_init__(self):
        linear = np.atleast_1d(np.asarray(self.linear, dtype=float))
        quad = np.asarray(self.quadratic, dtype=float)
        if quad.shape != (linear.size, linear.size):
            raise ConfigurationError("mean.quadratic shape must match mean.linear length")
        if not np.array_equal(quad, quad.T):
            raise ConfigurationError("mean.quadratic must be symmetric")
        if not (np.all(np.isfinite(linear)) and np.all(np.isfinite(quad)) and np.isfinite(self.constant)):
            raise ConfigurationError("mean coefficients must be finite")
        object.__setattr__(self, "linear", linear)
        object.__setattr__(self, "quadratic", quad)

    @classmethod
    def zero(cls, dimension):
        return cls(0.0, np.zeros(dimension), np.zeros((dimension, dimension)))

    @classmethod
    def quadratic_well(cls, dimension, curvature=1.0):
        """Confining bowl m(y) = curvature * |y|^2 / 2."""
        return cls(0.0, np.zeros(dimension), curvature * np.eye(dimension))

    @property
    def dimension(self):
        return self.linear.size

    def value(self, y):
        y = np.asarray(y, dtype=float)
        quad_term = 0.5 * np.einsum("...d,...d->...", y, y @ self.quadratic)
        return self.constant + y @ self.linear + quad_term

    def grad(self, y):
        y = np.asarray(y, dtype=float)
        return self.linear + y @ self.quadratic

    def hessian(self, y):
        y = np.asarray(y, dtype=float)
        shape = y.shape[:-1] + self.quadratic.shape
        return np.broadcast_to(self.quadratic, shape).copy()

    def derivative(self, order, y):
        """Mixed partial of m for a multi-index ``order`` (any order >= 3 is zero)."""
        total = int(sum(order))
        if total == 0:
            return float(self.value(y))
        if total == 1:
            i = next(k for k, o in enumerate(order) if o)
            return float(self.grad(y)[i])
        if total == 2:
            idx = [k for k, o in enumerate(order) for _ in range(o)]
            return float(self.quadratic[idx[0], idx[1]])
        return 0.0


@dataclass(frozen=True, eq=False)
class FieldConfig:
    """Everything needed to reproduce one random potential."""

    dimension: int
    kernel: KernelSpec
    mean: MeanSpec
    sampler: str = "fourier"
    feature_count: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.dimension < 1:
            raise ConfigurationError("field.dimension must be >= 1")
        if self.sampler not in ("fourier", "conditioned"):
            raise ConfigurationError("field.sampler must be 'fourier' or 'conditioned'")
        if self.sampler == "fourier" and self.feature_count < 1:
            raise ConfigurationError("field.feature_count must be >= 1")
        if self.mean.dimension != self.dimension:
            raise ConfigurationError("mean dimension does not match field.dimension")


def kernel_cross_derivative(kernel, order_a, order_b, y, y_prime):
    """Mixed partial d^a/dy^a d^b/dy'^b of the squared-exponential kernel.

    ``order_a`` and ``order_b`` are per-coordinate multi-indices with total
    order at most 3 each. The kernel factors per coordinate, and derivatives
    of exp(-t^2/2) are Hermite polynomials, so the result is exact.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    y_prime = np.atleast_1d(np.asarray(y_prime, dtype=float))
    order_a = tuple(int(o) for o in order_a)
    order_b = tuple(int(o) for o in order_b)
    if len(order_a) != y.size or len(order_b) != y.size or y.size != y_prime.size:
        raise UsageError("multi-index / point dimension mismatch")
    if sum(order_a) > 3 or sum(order_b) > 3 or min(order_a + order_b) < 0:
        raise UnsupportedOperationError("kernel cross-derivatives are supported up to order 3 per argument")

    ell = kernel.lengthscale
    tau = y - y_prime
    result = kernel.variance
    for pa, pb, t in zip(order_a, order_b, tau):
        n = pa + pb
        s = t / ell
        coeffs = np.zeros(n + 1)
        coeffs[n] = 1.0
        herm = hermite_e.hermeval(s, coeffs)
        result *= (-1.0) ** pa * ell ** (-n) * herm * np.exp(-0.5 * s * s)
    return float(result)


# Feature-sum evaluation helpers. ``freqs`` is (..., F, d) and ``y`` is
# (..., d); leading axes must broadcast, which covers both a single field at
# many points and a stack of fields advanced in lockstep.

def _phases(freqs, y):
    return np.einsum("...fd,...d->...f", freqs, y)


def _feature_value(freqs, cos_w, sin_w, y):
    ph = _phases(freqs, y)
    return np.einsum("...f,...f->...", cos_w, np.cos(ph)) + np.einsum(
        "...f,...f->...", sin_w, np.sin(ph)
    )


def _feature_grad(freqs, cos_w, sin_w, y):
    ph = _phases(freqs, y)
    coef = sin_w * np.cos(ph) - cos_w * np.sin(ph)
    return np.einsum("...f,...fd->...d", coef, freqs)


def _feature_hessian(freqs, cos_w, sin_w, y):
    ph = _phases(freqs, y)
    coef = -(cos_w * np.cos(ph) + sin_w * np.sin(ph))
    hess = np.einsum("...f,...fi,...fj->...ij", coef, freqs, freqs)
    # contraction order rounds (i,j) and (j,i) differently; make symmetry exact
    return 0.5 * (hess + np.swapaxes(hess, -1, -2))


def _feature_third(freqs, cos_w, sin_w, y, v1, v2):
    ph = _phases(freqs, y)
    coef = cos_w * np.sin(ph) - sin_w * np.cos(ph)
    p1 = np.einsum("...fd,...d->...f", freqs, np.asarray(v1, dtype=float))
    p2 = np.einsum("...fd,...d->...f", freqs, np.asarray(v2, dtype=float))
    return np.einsum("...f,...fd->...d", coef * (p1 * p2), freqs)


def _feature_third_tensor(freqs, cos_w, sin_w, y):
    ph = _phases(freqs, y)
    coef = cos_w * np.sin(ph) - sin_w * np.cos(ph)
    return np.einsum("...f,...fi,...fj,...fk->...ijk", coef, freqs, freqs, freqs)


class FourierRealization:
    """One fixed draw of the potential, evaluable anywhere with exact derivatives.

    Immutable after construction and safe to share across workers. The draw
    order is fixed (frequencies, then cosine weights, then sine weights) so a
    given (config, seed) always reproduces the same function.
    """

    def __init__(self, config: FieldConfig):
        if config.sampler != "fourier":
            raise ConfigurationError("FourierRealization requires sampler='fourier'")
        self.config = config
        rng = np.random.default_rng(config.seed)
        d, count = config.dimension, config.feature_count
        self.frequencies = rng.standard_normal((count, d)) / config.kernel.lengthscale
        scale = np.sqrt(config.kernel.variance / count)
        self.cos_weights = scale * rng.standard_normal(count)
        self.sin_weights = scale * rng.standard_normal(count)
        self._active = config.kernel.variance > 0

    @property
    def dimension(self):
        return self.config.dimension

    def _check(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape[-1:] != (self.config.dimension,):
            raise UsageError(
                f"point dimension {y.shape[-1:]} does not match field dimension {self.config.dimension}"
            )
        return y

    def eval_potential(self, y):
        y = self._check(y)
        out = self.config.mean.value(y)
        if self._active:
            out = out + _feature_value(self.frequencies, self.cos_weights, self.sin_weights, y)
        return out if out.ndim else float(out)

    def eval_grad(self, y):
        y = self._check(y)
        out = self.config.mean.grad(y)
        if self._active:
            out = out + _feature_grad(self.frequencies, self.cos_weights, self.sin_weights, y)
        return out

    def eval_hessian(self, y):
        y = self._check(y)
        out = self.config.mean.hessian(y)
        if self._active:
            out = out + _feature_hessian(self.frequencies, self.cos_weights, self.sin_weights, y)
        return out

    def eval_third(self, y, v1, v2):
        """Third-derivative tensor contracted with v1 and v2 (symmetric in the pair)."""
        y = self._check(y)
        if not self._active:
            return np.zeros(y.shape)
        return _feature_third(self.frequencies, self.cos_weights, self.sin_weights, y, v1, v2)

    def eval_third_tensor(self, y):
        """Full third-derivative tensor, shape (..., d, d, d); the polynomial
        mean contributes nothing at order three."""
        y = self._check(y)
        d = self.config.dimension
        if not self._active:
            return np.zeros(y.shape[:-1] + (d, d, d))
        return _feature_third_tensor(self.frequencies, self.cos_weights, self.sin_weights, y)

    def export(self):
        """Plain dict of the draw (frequencies and weights) for JSON round-trips."""
        return {
            "config": field_config_to_dict(self.config),
            "frequencies": self.frequencies.tolist(),
            "cos_weights": self.cos_weights.tolist(),
            "sin_weights": self.sin_weights.tolist(),
        }


class FieldBatch:
    """Several fourier realizations evaluated in lockstep: row i of a query
    goes to field i. Duck-types the evaluation surface of a single realization
    so steppers and the reference solver can advance a whole seed batch at once.
    """

    def __init__(self, realizations):
        if not realizations:
            raise UsageError("FieldBatch needs at least one realization")
        if any(not isinstance(r, FourierRealization) for r in realizations):
            raise UsageError("FieldBatch supports fourier realizations only")
        dims = {r.dimension for r in realizations}
        if len(dims) != 1:
            raise UsageError("FieldBatch realizations must share a dimension")
        self.mean = realizations[0].config.mean
        self.frequencies = np.stack([r.frequencies for r in realizations])
        self.cos_weights = np.stack([r.cos_weights for r in realizations])
        self.sin_weights = np.stack([r.sin_weights for r in realizations])

    @property
    def dimension(self):
        return self.frequencies.shape[-1]

    def eval_potential(self, y):
        y = np.asarray(y, dtype=float)
        return self.mean.value(y) + _feature_value(
            self.frequencies, self.cos_weights, self.sin_weights, y
        )

    def eval_grad(self, y):
        y = np.asarray(y, dtype=float)
        return self.mean.grad(y) + _feature_grad(
            self.frequencies, self.cos_weights, self.sin_weights, y
        )


class ConditionedRealization:
    """Exact sequential-conditioning sampler for V, grad V and the Hessian.

    Each query is drawn from the Gaussian conditional law given every value
    returned so far, so the finite-dimensional distributions match the kernel
    exactly. Stateful: confine one instance to one worker. Third derivatives
    are not served; use the fourier sampler for those.
    """

    def __init__(self, config: FieldConfig):
        if config.sampler != "conditioned":
            raise ConfigurationError("ConditionedRealization requires sampler='conditioned'")
        self.config = config
        self._rng = np.random.default_rng(config.seed)
        self._points = []   # (d,) arrays
        self._orders = []   # multi-index tuples
        self._values = []   # floats

    @property
    def dimension(self):
        return self.config.dimension

    def _check(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.config.dimension,):
            raise UsageError("conditioned sampler queries take a single point of the field dimension")
        if not np.all(np.isfinite(y)):
            raise UsageError("query point must be finite")
        return y

    def eval_potential(self, y):
        order = (0,) * self.config.dimension
        return float(self._draw(self._check(y), [order])[0])

    def eval_grad(self, y):
        d = self.config.dimension
        orders = [tuple(1 if k == i else 0 for k in range(d)) for i in range(d)]
        return self._draw(self._check(y), orders)

    def eval_hessian(self, y):
        d = self.config.dimension
        pairs = [(i, j) for i in range(d) for j in range(i, d)]
        orders = []
        for i, j in pairs:
            order = [0] * d
            order[i] += 1
            order[j] += 1
            orders.append(tuple(order))
        vals = self._draw(self._check(y), orders)
        hess = np.empty((d, d))
        for (i, j), v in zip(pairs, vals):
            hess[i, j] = v
            hess[j, i] = v
        return hess

    def eval_third(self, y, v1, v2):
        raise UnsupportedOperationError(
            "the conditioned sampler serves V, gradient and Hessian only; "
            "third derivatives need the fourier sampler"
        )

    def _chol(self, matrix):
        try:
            return np.linalg.cholesky(matrix)
        except np.linalg.LinAlgError:
            pass
        jitter = JITTER_FACTOR * self.config.kernel.variance
        try:
            return np.linalg.cholesky(matrix + jitter * np.eye(matrix.shape[0]))
        except np.linalg.LinAlgError:
            raise ConditioningError(
                "covariance factorization failed even with diagonal jitter "
                f"{jitter:g}; queries may be too close together - increase their "
                "separation or the jitter"
            ) from None

    def _draw(self, point, orders):
        mean = self.config.mean
        kernel = self.config.kernel

        hits = []
        for order in orders:
            hit = None
            for idx, (p, o) in enumerate(zip(self._points, self._orders)):
                if o == order and np.array_equal(p, point):
                    hit = idx
                    break
            hits.append(hit)
        if all(h is not None for h in hits):
            return np.array([self._values[h] for h in hits])
        if any(h is not None for h in hits):
            raise UsageError("query partially overlaps cached observations at this point")
        for p in self._points:
            dist = float(np.linalg.norm(point - p))
            if 0.0 < dist < COINCIDENCE_TOL:
                raise UsageError(
                    f"query point within {COINCIDENCE_TOL:g} of a cached point; "
                    "repeat it exactly or separate the points"
                )

        mu_new = np.array([mean.derivative(o, point) for o in orders])
        if kernel.variance == 0.0:
            values = mu_new
        else:
            k = len(orders)
            cov_new = np.empty((k, k))
            for i, oi in enumerate(orders):
                for j, oj in enumerate(orders):
                    cov_new[i, j] = kernel_cross_derivative(kernel, oi, oj, point, point)
            n_old = len(self._points)
            if n_old:
                cross = np.empty((k, n_old))
                for i, oi in enumerate(orders):
                    for j in range(n_old):
                        cross[i, j] = kernel_cross_derivative(
                            kernel, oi, self._orders[j], point, self._points[j]
                        )
                cov_old = np.empty((n_old, n_old))
                for i in range(n_old):
                    for j in range(i, n_old):
                        cij = kernel_cross_derivative(
                            kernel, self._orders[i], self._orders[j], self._points[i], self._points[j]
                        )
                        cov_old[i, j] = cij
                        cov_old[j, i] = cij
                factor = (self._chol(cov_old), True)
                resid = np.array(self._values) - np.array(
                    [mean.derivative(o, p) for o, p in zip(self._orders, self._points)]
                )
                mu = mu_new + cross @ cho_solve(factor, resid)
                cov = cov_new - cross @ cho_solve(factor, cross.T)
                cov = 0.5 * (cov + cov.T)
            else:
                mu = mu_new
                cov = cov_new
            values = mu + self._chol(cov) @ self._rng.standard_normal(k)

        for order, value in zip(orders, values):
            self._points.append(point.copy())
            self._orders.append(order)
            self._values.append(float(value))
        return values


def sample_realization(config: FieldConfig):
    """Draw one potential realization according to ``config.sampler``."""
    if config.sampler == "fourier":
        return FourierRealization(config)
    return ConditionedRealization(config)


def kernel_spec_to_dict(kernel: KernelSpec):
    return {"variance": kernel.variance, "lengthscale": kernel.lengthscale}


def mean_spec_to_dict(mean: MeanSpec):
    return {
        "constant": mean.constant,
        "linear": mean.linear.tolist(),
        "quadratic": mean.quadratic.tolist(),
    }


def field_config_to_dict(config: FieldConfig):
    return {
        "dimension": config.dimension,
        "kernel": kernel_spec_to_dict(config.kernel),
        "mean": mean_spec_to_dict(config.mean),
        "sampler": config.sampler,
        "feature_count": config.feature_count,
        "seed": int(config.seed),
    }


def field_config_from_dict(data) -> FieldConfig:
    mean = data["mean"]
    return FieldConfig(
        dimension=int(data["dimension"]),
        kernel=KernelSpec(**data["kernel"]),
        mean=MeanSpec(mean["constant"], np.asarray(mean["linear"]), np.asarray(mean["quadratic"])),
        sampler=data.get("sampler", "fourier"),
        feature_count=int(data.get("feature_count", 512)),
        seed=int(data.get("seed", 0)),
    )
