"""Sub-sampling sketches and the sketched Newton-Raphson step.

A sketch is a subset of the ``m`` output coordinates of a vector field. Products
with the implicit ``m x tau`` selection matrix are gathers/scatters on the index
list, so one step costs O(m*tau + n*tau**2 + tau**3).

Conventions: ``DF`` is the *transposed* Jacobian, shape ``(n, m)``, so column
``i`` of ``DF`` is the gradient of output ``i``.
"""
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, NumericalDomainError

DEFAULT_REL_TOL = 1e-12


@dataclass(frozen=True)
class SketchSelector:
    indices: np.ndarray
    m: int
    tau: int = field(init=False)

    def __post_init__(self):
        idx = np.array(self.indices, dtype=np.intp).ravel()
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "tau", int(idx.size))
        if not 1 <= self.tau <= self.m:
            raise InvalidArgumentError(
                f"sketch size tau={self.tau} must satisfy 1 <= tau <= m={self.m}")
        if idx.min() < 0 or idx.max() >= self.m:
            raise InvalidArgumentError(f"sketch indices must lie in [0, {self.m})")
        if np.unique(idx).size != idx.size:
            raise InvalidArgumentError("sketch indices must be pairwise distinct")

    @classmethod
    def full(cls, m):
        return cls(np.arange(m), m)

    def select(self, v):
        """``S^T v`` for an m-vector (or the rows of an (m, k) array)."""
        return np.asarray(v)[self.indices]

    def embed(self, u):
        """``S u``: scatter a tau-vector back into R^m."""
        out = np.zeros(self.m, dtype=np.result_type(u, float))
        out[self.indices] = u
        return out

    def columns(self, DF):
        """``DF S``: the selected columns of an (n, m) matrix."""
        return np.asarray(DF)[:, self.indices]

    def __eq__(self, other):
        if not isinstance(other, SketchSelector):
            return NotImplemented
        return self.m == other.m and np.array_equal(self.indices, other.indices)

    def __hash__(self):
        return hash((self.m, self.indices.tobytes()))


@dataclass(frozen=True)
class SketchedStepReport:
    direction: np.ndarray
    f_value: float
    gram_rank: int
    elapsed: float


def resolve_tau(dim, tau=None, rho=None):
    """Sketch size for a field with ``dim`` outputs.

    Exactly one of ``tau`` (a count) or ``rho`` (a fraction in (0, 1]) is used;
    ``rho`` maps to ``floor(rho * dim)`` clamped to at least 1.
    """
    if dim < 1:
        raise InvalidArgumentError(f"cannot sketch a field with {dim} outputs")
    if tau is not None:
        if not 1 <= tau <= dim:
            raise InvalidArgumentError(f"tau={tau} incompatible with dimension {dim}")
        return int(tau)
    if rho is None:
        raise InvalidArgumentError("either tau or rho must be given")
    if not 0.0 < rho <= 1.0:
        raise InvalidArgumentError(f"rho must lie in (0, 1], got {rho}")
    # guard against 0.29 * 100 == 28.999999999999996
    return max(1, min(dim, math.floor(rho * dim + 1e-9)))


def sample_sketch(m, tau, rng):
    if tau < 1 or tau > m:
        raise InvalidArgumentError(f"invalid sketch size: tau={tau}, m={m}")
    # sorted: the subset is what matters, and tau == m then gives the identity
    idx = np.sort(rng.choice(m, size=tau, replace=False))
    return SketchSelector(idx, m)


def sketched_gram(DF, sel):
    DF = np.asarray(DF, dtype=float)
    if DF.ndim != 2 or DF.shape[1] != sel.m:
        raise InvalidArgumentError(
            f"DF has shape {DF.shape}, expected (n, {sel.m}) for this selector")
    C = sel.columns(DF)
    G = C.T @ C
    return 0.5 * (G + G.T)


def _eig_pinv_factors(G, rel_tol):
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {G.shape}")
    if not np.all(np.isfinite(G)):
        raise NumericalDomainError("matrix has non-finite entries")
    if rel_tol <= 0:
        raise InvalidArgumentError(f"rel_tol must be positive, got {rel_tol}")
    if G.size == 0:
        return np.zeros(0), np.zeros((0, 0)), 0
    scale = max(1.0, float(np.abs(G).max()))
    asym = float(np.abs(G - G.T).max())
    if asym > 1e-10 * scale:
        raise InvalidArgumentError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    w, V = np.linalg.eigh(0.5 * (G + G.T))
    lam_max = float(w[-1])
    if lam_max <= 0.0:
        if w[0] < -rel_tol * scale:
            raise NumericalDomainError(f"matrix is not PSD (eigenvalue {w[0]:.3e})")
        return np.zeros_like(w), V, 0
    cutoff = rel_tol * lam_max
    if w[0] < -cutoff:
        raise NumericalDomainError(
            f"matrix is not PSD: eigenvalue {w[0]:.3e} below -{cutoff:.3e}")
    keep = w > cutoff
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    return inv, V, int(keep.sum())


def pinv_psd(G, rel_tol=DEFAULT_REL_TOL):
    """Moore-Penrose pseudo-inverse of a symmetric PSD matrix via ``eigh``.

    Eigenvalues at or below ``rel_tol * lambda_max`` are treated as zero.
    """
    inv, V, _ = _eig_pinv_factors(G, rel_tol)
    return (V * inv) @ V.T


def snr_step(F_val, DF, sel, rel_tol=DEFAULT_REL_TOL, method="svd"):
    """One sketched Newton-Raphson step.

    Returns the direction ``d = DF S (S^T DF^T DF S)^+ S^T F`` (the caller sets
    ``x_next = x - d``) together with ``f = 0.5 F^T S (...)^+ S^T F``, for which
    ``0.5 * ||d||**2 == f`` holds in exact arithmetic.

    ``method="svd"`` factors the selected columns ``C = DF S`` directly, which
    yields the same pseudo-inverse of ``C^T C`` without squaring the condition
    number; ``method="eigh"`` goes through :func:`pinv_psd` of the Gram matrix.
    Both cut singular directions with ``sigma**2 <= rel_tol * sigma_max**2``.
    """
    start = time.perf_counter()
    F_val = np.asarray(F_val, dtype=float)
    DF = np.asarray(DF, dtype=float)
    if F_val.ndim != 1 or DF.ndim != 2 or DF.shape[1] != F_val.size or sel.m != F_val.size:
        raise InvalidArgumentError(
            f"dimension mismatch: F has shape {F_val.shape}, DF {DF.shape}, sketch m={sel.m}")
    if not (np.all(np.isfinite(F_val)) and np.all(np.isfinite(DF))):
        raise NumericalDomainError("non-finite entries in F or DF")
    C = sel.columns(DF)
    Fs = sel.select(F_val)
    if method == "svd":
        direction, f_value, rank = _step_svd(C, Fs, rel_tol)
    elif method == "eigh":
        G = C.T @ C
        inv, V, rank = _eig_pinv_factors(0.5 * (G + G.T), rel_tol)
        w = V.T @ Fs
        coef = inv * w
        direction = C @ (V @ coef)
        f_value = 0.5 * float(w @ coef)
    else:
        raise InvalidArgumentError(f"unknown method {method!r}")
    return SketchedStepReport(direction, f_value, rank, time.perf_counter() - start)


def _step_svd(C, Fs, rel_tol):
    n, tau = C.shape
    if n == 0 or tau == 0:
        return np.zeros(n), 0.0, 0
    U, s, Vt = np.linalg.svd(C, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros(n), 0.0, 0
    r = int(np.count_nonzero(s * s > rel_tol * s[0] * s[0]))
    coef = (Vt[:r] @ Fs) / s[:r]
    return U[:, :r] @ coef, 0.5 * float(coef @ coef), r
