"""Phase space, mass matrix and the exact right-hand side.

The dynamics are dy/dt = M^-1 x, dx/dt = -grad V(y) for a fixed potential
realization, with energy H = x.M^-1.x / 2 + V(y). M is symmetric positive
definite and verified at construction, not assumed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigurationError, UsageError
from .field import FieldConfig

_PIVOT_REL_TOL = 1e-12


class MassMatrix:
    """SPD mass matrix with a cached factorization for applying M^-1.

    Build with ``identity``, ``diagonal`` or ``dense``. ``c_m`` is the
    operator norm of M^-1 (1 / smallest eigenvalue of M).
    """

    def __init__(self, kind, dimension, diag=None, matrix=None, factor=None, c_m=1.0):
        self.kind = kind
        self.dimension = dimension
        self._diag = diag
        self._matrix = matrix
        self._factor = factor
        self.c_m = c_m

    @classmethod
    def identity(cls, dimension):
        if dimension < 1:
            raise ConfigurationError("mass dimension must be >= 1")
        return cls("identity", dimension)

    @classmethod
    def diagonal(cls, entries):
        entries = np.atleast_1d(np.asarray(entries, dtype=float))
        if entries.ndim != 1 or entries.size < 1:
            raise ConfigurationError("diagonal mass matrix needs a 1-d list of entries")
        if not np.all(np.isfinite(entries)) or np.any(entries <= 0):
            raise ConfigurationError("diagonal mass entries must be finite and > 0")
        return cls("diagonal", entries.size, diag=entries, c_m=float(1.0 / entries.min()))

    @classmethod
    def dense(cls, matrix):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ConfigurationError("dense mass matrix must be square")
        if not np.all(np.isfinite(matrix)):
            raise ConfigurationError("dense mass matrix must be finite")
        scale = float(np.max(np.abs(matrix)))
        if not np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-13 * max(scale, 1.0)):
            raise ConfigurationError("dense mass matrix must be symmetric")
        eigvals = np.linalg.eigvalsh(matrix)
        norm = float(eigvals[-1])
        try:
            chol = np.linalg.cholesky(matrix)
        except np.linalg.LinAlgError:
            raise ConfigurationError("dense mass matrix is not positive definite") from None
        pivots = np.diag(chol) ** 2
        if pivots.min() <= _PIVOT_REL_TOL * norm:
            raise ConfigurationError(
                "dense mass matrix is numerically singular "
                f"(pivot {pivots.min():.3e} vs norm {norm:.3e})"
            )
        factor = cho_factor(matrix, lower=True)
        return cls("dense", matrix.shape[0], matrix=matrix, factor=factor, c_m=float(1.0 / eigvals[0]))

    def apply_minv(self, v):
        """Solve M u = v; broadcasts over leading axes of v."""
        v = np.asarray(v, dtype=float)
        if v.shape[-1:] != (self.dimension,):
            raise UsageError("vector dimension does not match mass matrix")
        if self.kind == "identity":
            return v
        if self.kind == "diagonal":
            return v / self._diag
        flat = v.reshape(-1, self.dimension)
        out = cho_solve(self._factor, flat.T).T
        return out.reshape(v.shape)

    def minv_quadratic(self, x):
        """x . M^-1 . x, broadcast over leading axes."""
        x = np.asarray(x, dtype=float)
        return np.einsum("...d,...d->...", x, self.apply_minv(x))

    def matrix(self):
        if self.kind == "identity":
            return np.eye(self.dimension)
        if self.kind == "diagonal":
            return np.diag(self._diag)
        return self._matrix.copy()


@dataclass(frozen=True, eq=False)
class PhaseState:
    """Position/momentum pair. Arrays of shape (..., d) are allowed so a batch
    of systems can be advanced in lockstep; the single-system case is (d,)."""

    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if y.shape != x.shape:
            raise UsageError("position and momentum must have the same shape")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def dimension(self):
        return self.y.shape[-1]

    def joint_norm(self):
        return np.sqrt(np.sum(self.y**2, axis=-1) + np.sum(self.x**2, axis=-1))


def default_initial_state(dimension) -> PhaseState:
    """Generic start: alternating-sign position of norm 0.5, uniform momentum of norm 0.7."""
    signs = np.where(np.arange(dimension) % 2 == 0, 1.0, -1.0)
    y = 0.5 * signs / np.sqrt(dimension)
    x = 0.7 * np.ones(dimension) / np.sqrt(dimension)
    return PhaseState(y, x)


@dataclass(frozen=True, eq=False)
class SystemConfig:
    """A potential, a mass matrix, a start state, a horizon and an escape radius."""

    field: FieldConfig
    mass: MassMatrix
    initial: PhaseState
    horizon: float = 1.0
    escape_radius: float = 1000.0

    def __post_init__(self):
        if self.mass.dimension != self.field.dimension:
            raise ConfigurationError("mass matrix dimension does not match the field")
        if self.initial.dimension != self.field.dimension:
            raise ConfigurationError("initial state dimension does not match the field")
        if not np.all(np.isfinite(self.initial.y)) or not np.all(np.isfinite(self.initial.x)):
            raise ConfigurationError("initial state must be finite")
        if not self.horizon > 0:
            raise ConfigurationError("horizon must be > 0")
        if not self.escape_radius > float(self.initial.joint_norm()):
            raise ConfigurationError("escape_radius must exceed the initial state norm")


def energy(realization, mass: MassMatrix, state: PhaseState):
    """H = x . M^-1 . x / 2 + V(y)."""
    return 0.5 * mass.minv_quadratic(state.x) + realization.eval_potential(state.y)


def exact_rhs(realization, mass: MassMatrix, state: PhaseState):
    """Right-hand side of the underlying system: (M^-1 x, -grad V(y))."""
    return mass.apply_minv(state.x), -realization.eval_grad(state.y)
