"""Dense float64 matrix helpers: products, norms, decompositions, pseudo-inverse.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. The
decompositions delegate to LAPACK through :mod:`numpy.linalg`; the spectral
norm is a deterministic power iteration so it can be run on huge operators
without forming a full SVD.
"""

from typing import NamedTuple

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class SymmetricEigen(NamedTuple):
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns, orthonormal


class NormEstimate(float):
    """A float that also carries power-iteration bookkeeping."""

    converged: bool
    iterations: int

    def __new__(cls, value, converged, iterations):
        obj = super().__new__(cls, value)
        obj.converged = converged
        obj.iterations = iterations
        return obj


def as_matrix(m, name="matrix"):
    a = np.asarray(m, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def check_finite(m, name="matrix"):
    if not np.all(np.isfinite(m)):
        bad = np.argwhere(~np.isfinite(m))[0]
        raise ValueError(f"{name} has a non-finite entry at {tuple(int(i) for i in bad)}")
    return m


def matmul(a, b):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def spectral_norm(m, tol=1e-7, max_iters=10000):
    """Largest singular value of ``m`` by power iteration on ``m.T @ m``.

    The start vector is all-ones (normalized), so the result is reproducible.
    Iteration stops once the relative change between successive estimates,
    inflated by the geometric tail ``1 / (1 - rho)`` where ``rho`` is the
    observed contraction of those changes, drops below ``tol``. The returned
    :class:`NormEstimate` behaves like a float and exposes ``converged`` and
    ``iterations``; when the budget runs out the best estimate so far is
    returned with ``converged=False``.
    """
    m = as_matrix(m)
    if m.size == 0:
        raise ShapeError("spectral norm of an empty matrix")
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = np.ones(m.shape[1]) / np.sqrt(m.shape[1])
    est = 0.0
    prev_delta = None
    restarted = False
    for it in range(1, max_iters + 1):
        w = m @ v
        new = float(np.linalg.norm(w))
        if new == 0.0:
            # all-ones start can be orthogonal to the row space
            if not restarted and np.any(m):
                restarted = True
                v = np.random.default_rng(0).standard_normal(m.shape[1])
                v /= np.linalg.norm(v)
                continue
            return NormEstimate(0.0, True, it)
        u = m.T @ w
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return NormEstimate(new, True, it)
        v = u / nu
        delta = abs(new - est)
        if delta <= tol * new:
            rho = delta / prev_delta if prev_delta else 0.0
            if rho >= 1.0 or delta <= tol * new * (1.0 - rho):
                return NormEstimate(max(new, est), True, it)
        prev_delta = delta
        est = new
    return NormEstimate(est, False, max_iters)


def sym_eigen(m):
    """Eigen-decomposition of a (numerically) symmetric matrix, descending."""
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"sym_eigen needs a square matrix, got {m.shape}")
    w, u = np.linalg.eigh(0.5 * (m + m.T))
    return SymmetricEigen(w[::-1].copy(), u[:, ::-1].copy())


def singular_value_spectrum(m):
    m = as_matrix(m)
    if m.size == 0:
        raise ShapeError("singular values of an empty matrix")
    return np.linalg.svd(m, compute_uv=False)


def norm2(m):
    """Exact spectral norm from the full SVD (oracle path)."""
    return float(singular_value_spectrum(m)[0])


def pinv(m, rcond=1e-10):
    """Moore-Penrose pseudo-inverse via SVD.

    Singular values at or below ``rcond * sigma_max`` are treated as zero.
    """
    m = as_matrix(m)
    if m.size == 0:
        raise ShapeError("pseudo-inverse of an empty matrix")
    if rcond < 0:
        raise ValueError("rcond must be non-negative")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    keep = s > rcond * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (vt.T * s_inv) @ u.T


def sym_pinv(m, rcond=1e-10):
    """Pseudo-inverse of a symmetric PSD matrix, exactly symmetric on return.

    Uses the eigen-decomposition; eigenvalues at or below ``rcond * lambda_max``
    (including the slightly negative ones rounding produces) are dropped.
    """
    w, u = np.linalg.eigh(0.5 * (m + m.T))
    top = w[-1]
    keep = w > rcond * top if top > 0 else np.zeros_like(w, dtype=bool)
    uk = u[:, keep]
    out = (uk / w[keep]) @ uk.T
    return 0.5 * (out + out.T)


def truncated_svd(m, rank):
    """Best rank-``rank`` approximation in spectral and Frobenius norm.

    ``rank`` larger than the smallest dimension is clamped to full rank.
    """
    m = as_matrix(m)
    rank = max(0, min(int(rank), min(m.shape)))
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    return (u[:, :rank] * s[:rank]) @ vt[:rank]
