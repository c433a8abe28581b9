"""Problem containers for smooth convex programs.

A program is: minimize f(x) subject to g_i(x) <= 0 and A x = b, with f and
every g_i smooth and convex on the strictly feasible region. Constraints
are supplied in vectorized blocks; a block evaluates a whole family at
once and returns values, a sparse Jacobian, and weighted Hessian sums,
which is the shape a barrier method actually consumes. Single callables
can be wrapped in :class:`ScalarConstraint` for small problems.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Objective",
    "LinearObjective",
    "QuadraticObjective",
    "CallableObjective",
    "ConstraintBlock",
    "LinearInequalities",
    "ScalarConstraint",
    "SmoothConvexProgram",
    "SolveReport",
]


class Objective(ABC):
    @abstractmethod
    def value(self, x: np.ndarray) -> float: ...

    @abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray: ...

    def hessian(self, x: np.ndarray) -> sp.spmatrix | None:
        """Sparse Hessian, or None when identically zero."""
        return None


class LinearObjective(Objective):
    def __init__(self, c):
        self.c = np.asarray(c, dtype=float)

    def value(self, x):
        return float(self.c @ x)

    def gradient(self, x):
        return self.c


class QuadraticObjective(Objective):
    """0.5 x'Px + q'x with constant positive semidefinite P."""

    def __init__(self, P, q=None):
        self.P = sp.csr_matrix(P)
        n = self.P.shape[0]
        self.q = np.zeros(n) if q is None else np.asarray(q, dtype=float)

    def value(self, x):
        return float(0.5 * x @ (self.P @ x) + self.q @ x)

    def gradient(self, x):
        return self.P @ x + self.q

    def hessian(self, x):
        return self.P


class CallableObjective(Objective):
    """Adapter for plain (value, gradient, hessian) callables."""

    def __init__(self, value_fn, grad_fn, hess_fn=None):
        self._value = value_fn
        self._grad = grad_fn
        self._hess = hess_fn

    def value(self, x):
        return float(self._value(x))

    def gradient(self, x):
        return np.asarray(self._grad(x), dtype=float)

    def hessian(self, x):
        if self._hess is None:
            return None
        return sp.csr_matrix(np.atleast_2d(self._hess(x)))


class ConstraintBlock(ABC):
    """A family of inequality constraints g_i(x) <= 0 evaluated together."""

    @property
    @abstractmethod
    def size(self) -> int: ...

    @abstractmethod
    def values(self, x: np.ndarray) -> np.ndarray:
        """g_i(x) for every constraint in the block, shape (size,)."""

    @abstractmethod
    def jacobian(self, x: np.ndarray) -> sp.spmatrix:
        """Stacked gradients, shape (size, n)."""

    def hessian_combination(self, x: np.ndarray, w: np.ndarray) -> sp.spmatrix | None:
        """sum_i w_i * hess(g_i)(x), or None when every g_i is affine."""
        return None


class LinearInequalities(ConstraintBlock):
    """G x - h <= 0."""

    def __init__(self, G, h):
        self.G = sp.csr_matrix(G)
        self.h = np.asarray(h, dtype=float)

    @property
    def size(self):
        return self.G.shape[0]

    def values(self, x):
        return self.G @ x - self.h

    def jacobian(self, x):
        return self.G


class ScalarConstraint(ConstraintBlock):
    """One constraint given as (value, gradient, hessian) callables."""

    def __init__(
        self,
        value_fn: Callable[[np.ndarray], float],
        grad_fn: Callable[[np.ndarray], np.ndarray],
        hess_fn: Callable[[np.ndarray], np.ndarray] | None = None,
    ):
        self._value = value_fn
        self._grad = grad_fn
        self._hess = hess_fn

    @property
    def size(self):
        return 1

    def values(self, x):
        return np.array([self._value(x)], dtype=float)

    def jacobian(self, x):
        return sp.csr_matrix(np.asarray(self._grad(x), dtype=float)[None, :])

    def hessian_combination(self, x, w):
        if self._hess is None:
            return None
        return sp.csr_matrix(float(w[0]) * np.atleast_2d(self._hess(x)))


@dataclass
class SmoothConvexProgram:
    """minimize objective(x) s.t. block constraints <= 0 and eq_matrix x = eq_rhs."""

    n: int
    objective: Objective
    inequalities: Sequence[ConstraintBlock] = field(default_factory=list)
    eq_matrix: sp.spmatrix | None = None
    eq_rhs: np.ndarray | None = None

    def __post_init__(self):
        if self.eq_matrix is not None:
            self.eq_matrix = sp.csr_matrix(self.eq_matrix)
            self.eq_rhs = np.asarray(self.eq_rhs, dtype=float)
            if self.eq_matrix.shape != (self.eq_rhs.size, self.n):
                raise ValueError("equality system shape mismatch")

    @property
    def n_ineq(self) -> int:
        return sum(b.size for b in self.inequalities)

    @property
    def n_eq(self) -> int:
        return 0 if self.eq_matrix is None else self.eq_matrix.shape[0]

    def ineq_values(self, x: np.ndarray) -> np.ndarray:
        if not self.inequalities:
            return np.empty(0)
        return np.concatenate([np.asarray(b.values(x), dtype=float) for b in self.inequalities])

    def eq_residual(self, x: np.ndarray) -> float:
        if self.eq_matrix is None:
            return 0.0
        return float(np.max(np.abs(self.eq_matrix @ x - self.eq_rhs)))

    def strictly_feasible(self, x: np.ndarray, margin: float = 0.0) -> bool:
        vals = self.ineq_values(x)
        if vals.size and not (np.all(np.isfinite(vals)) and np.max(vals) < -margin):
            return False
        return True


@dataclass
class SolveReport:
    """Outcome of one solve: solution, certificates, and iteration counters."""

    x: np.ndarray
    objective: float
    status: str  # 'optimal' | 'infeasible' | 'max_iter'
    max_violation: float
    eq_residual: float
    kkt_residual: float
    gap: float
    newton_iters: int
    barrier_stages: int
    trace: list = field(default_factory=list)
