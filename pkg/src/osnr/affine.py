"""Time-varying linear equality constraints ``A x = b_t`` with constant ``A``.

The constraint set caches a Cholesky factor of ``A A^T`` (for projections) and
an orthonormal basis ``M`` of ``ker(A)`` (for the null-space reduction
``x = M z + x_anchor``).
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (DegenerateConstraintsError, InvalidArgumentError,
                     NumericalDomainError, PreconditionError)

RANK_TOL = 1e-10
ANCHOR_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class AffineConstraintSet:
    A: np.ndarray
    aat_factor: tuple
    M: np.ndarray

    @property
    def k(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def reduced_dim(self):
        return self.M.shape[1]

    def residual(self, x, b):
        return self.A @ x - b


def build_constraints(A):
    A = np.array(A, dtype=float, ndmin=2)
    if A.ndim != 2:
        raise InvalidArgumentError(f"A must be a matrix, got shape {A.shape}")
    k, n = A.shape
    if k < 1 or k > n:
        raise InvalidArgumentError(f"need 1 <= k <= n, got k={k}, n={n}")
    if not np.all(np.isfinite(A)):
        raise NumericalDomainError("A has non-finite entries")
    # one SVD yields both the rank check and the null-space basis
    _, s, Vt = np.linalg.svd(A, full_matrices=True)
    if s[-1] < RANK_TOL * s[0]:
        raise DegenerateConstraintsError(
            f"A is rank deficient: smallest singular value {s[-1]:.3e}, largest {s[0]:.3e}")
    M = np.ascontiguousarray(Vt[k:].T)
    factor = scipy.linalg.cho_factor(A @ A.T, lower=True)
    A.setflags(write=False)
    M.setflags(write=False)
    return AffineConstraintSet(A=A, aat_factor=factor, M=M)


def project_onto(cs, x, b):
    """Euclidean projection of ``x`` onto ``{y : A y = b}``."""
    x = np.asarray(x, dtype=float)
    b = np.asarray(b, dtype=float)
    if x.shape != (cs.n,) or b.shape != (cs.k,):
        raise InvalidArgumentError(
            f"expected x of shape ({cs.n},) and b of shape ({cs.k},), got {x.shape}, {b.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(b))):
        raise NumericalDomainError("non-finite input to projection")
    r = b - cs.A @ x
    return x + cs.A.T @ scipy.linalg.cho_solve(cs.aat_factor, r)


class ReducedField:
    """``F_red(z) = M^T grad(M z + anchor)`` and its symmetric Jacobian."""

    def __init__(self, grad, hess, cs, anchor):
        self.grad = grad
        self.hess = hess
        self.cs = cs
        self.anchor = anchor
        self.n = cs.reduced_dim
        self.m = cs.reduced_dim

    def lift(self, z):
        return self.cs.M @ z + self.anchor

    def F(self, z=None):
        z = np.zeros(self.n) if z is None else z
        return self.cs.M.T @ self.grad(self.lift(z))

    def DF(self, z=None):
        z = np.zeros(self.n) if z is None else z
        M = self.cs.M
        return M.T @ self.hess(self.lift(z)) @ M


def reduce_field(grad, hess, cs, anchor, b):
    anchor = np.asarray(anchor, dtype=float)
    b = np.asarray(b, dtype=float)
    gap = float(np.linalg.norm(cs.A @ anchor - b))
    if gap > ANCHOR_TOL * (1.0 + float(np.linalg.norm(b))):
        raise PreconditionError(f"anchor is infeasible: ||A x - b|| = {gap:.3e}")
    return ReducedField(grad, hess, cs, anchor)
