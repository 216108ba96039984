"""Uniform sub-sampling, Nystrom factors for asymmetric kernel matrices, and
the preconditioned Schulz inverse.

The asymmetric kernel matrix ``C = k(Q, K)`` is the upper-right block of the
PSD Gram matrix of the stacked points ``X = [Q; K]``::

    Cbar = k(X, X) = [[k(Q, Q), C], [C.T, k(K, K)]]

Sampling ``d`` rows of ``X`` as landmarks ``L`` gives the lifted Nystrom
approximation of that block in factored form::

    C_tilde = k(Q, L) @ pinv(k(L, L)) @ k(L, K)

so neither the n x n nor the 2n x 2n matrix is ever formed on the fast path.
"""

from dataclasses import dataclass

import numpy as np

from . import matcore
from .kernels import kernel_matrix
from .matcore import ShapeError, as_matrix

# largest n for which oracle paths may materialize C or Cbar
ORACLE_MAX_N = 1024


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SubSample:
    population: int
    indices: np.ndarray
    scale: float
    with_replacement: bool = True

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", idx)
        if idx.ndim != 1 or idx.size < 1:
            raise ValueError("a sub-sample needs at least one index")
        if idx.min() < 0 or idx.max() >= self.population:
            raise ValueError(f"indices must lie in [0, {self.population})")
        if not self.with_replacement and np.unique(idx).size != idx.size:
            raise ValueError("indices repeat in a without-replacement sample")

    @property
    def d(self):
        return int(self.indices.size)

    def with_scale(self, scale):
        return SubSample(self.population, self.indices, float(scale), self.with_replacement)


@dataclass(frozen=True)
class NystromFactors:
    """``C_tilde = left @ core_pinv @ right`` without forming it."""

    left: np.ndarray  # n x d
    core_pinv: np.ndarray  # d x d
    right: np.ndarray  # d x n
    landmarks: np.ndarray  # d x p

    @property
    def d(self):
        return self.core_pinv.shape[0]

    def apply(self, v):
        """``C_tilde @ v`` evaluated right to left."""
        return self.left @ (self.core_pinv @ (self.right @ v))

    def dense(self):
        return self.left @ self.core_pinv @ self.right


@dataclass(frozen=True)
class IterInverseConfig:
    gamma: float = 1e-3
    max_iters: int = 20
    residual_tol: float = 1e-7

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.residual_tol > 0:
            raise ValueError(f"residual_tol must be positive, got {self.residual_tol}")
        if int(self.max_iters) < 1:
            raise ValueError("max_iters must be >= 1")


def uniform_subsample(population, d, with_replacement=True, rng=None):
    """Draw ``d`` landmark indices uniformly from ``range(population)``.

    With replacement the indices are i.i.d. uniform; without replacement they
    form a uniformly random d-subset. ``rng`` is a
    :class:`~sketchattn.rng.Xoshiro256` (or anything with the same
    ``choice`` method).
    """
    if population < 1:
        raise ValueError("population must be >= 1")
    if d < 1:
        raise ValueError("d must be >= 1")
    if not with_replacement and d > population:
        raise ValueError(f"cannot take {d} distinct samples from a population of {population}")
    if rng is None:
        from .rng import Xoshiro256
        rng = Xoshiro256(0)
    idx = rng.choice(population, d, replace=with_replacement)
    return SubSample(population, idx, float(np.sqrt(1.0 / d)), with_replacement)


def _stack(q, k):
    q = as_matrix(q, "q")
    k = as_matrix(k, "k")
    if q.shape[1] != k.shape[1]:
        raise ShapeError(f"q and k widths differ: {q.shape[1]} vs {k.shape[1]}")
    return q, k, np.vstack([q, k])


def lifted_nystrom(spec, q, k, sample, rcond=1e-10):
    """Lifted Nystrom factors of ``kernel_matrix(spec, q, k)``.

    Landmarks are rows of ``[q; k]``; each factor carries the sample's column
    scale (``left`` and ``right`` once, the core Gram twice), which cancels in
    the product.
    """
    q, k, x = _stack(q, k)
    if sample.population != x.shape[0]:
        raise ValueError(f"sample population {sample.population} != 2n = {x.shape[0]}")
    lm = x[sample.indices]
    s = sample.scale
    left = s * kernel_matrix(spec, q, lm)
    right = s * kernel_matrix(spec, lm, k)
    core = (s * s) * kernel_matrix(spec, lm)
    return NystromFactors(left, matcore.sym_pinv(core, rcond), right, lm)


def landmark_core(spec, factors, scale=1.0):
    """The (scaled) landmark Gram matrix ``S^T Cbar S`` the factors were built from."""
    return (scale * scale) * kernel_matrix(spec, factors.landmarks)


def naive_nystrom(spec, q, k, sample, rcond=1e-10):
    """Nystrom applied to the non-PSD ``C`` directly: ``C[:, J] pinv(C[J, J]) C[J, :]``.

    ``landmarks`` holds the sampled key rows ``k[J]``.
    """
    q, k, _ = _stack(q, k)
    n = q.shape[0]
    if sample.population != n:
        raise ValueError(f"sample population {sample.population} != n = {n}")
    j = sample.indices
    s = sample.scale
    left = s * kernel_matrix(spec, q, k[j])
    right = s * kernel_matrix(spec, q[j], k)
    core = (s * s) * kernel_matrix(spec, q[j], k[j])
    return NystromFactors(left, matcore.pinv(core, rcond), right, k[j])


def _guard(n):
    if n > ORACLE_MAX_N:
        raise ValueError(f"n = {n} exceeds the dense oracle limit of {ORACLE_MAX_N}")


def nystrom_error(spec, q, k, factors):
    """Relative spectral error ``|C - C_tilde| / |C|`` (dense oracle)."""
    q = as_matrix(q, "q")
    _guard(q.shape[0])
    c = kernel_matrix(spec, q, k)
    return matcore.norm2(c - factors.dense()) / matcore.norm2(c)


def lifted_dense(spec, q, k, sample, rcond=1e-10):
    """Materialize ``(Cbar, Cbar_tilde)`` for small n."""
    q, k, x = _stack(q, k)
    _guard(q.shape[0])
    s = sample.scale
    cbar = kernel_matrix(spec, x)
    b = s * cbar[:, sample.indices]
    core = (s * s) * kernel_matrix(spec, x[sample.indices])
    approx = b @ matcore.sym_pinv(core, rcond) @ b.T
    return cbar, 0.5 * (approx + approx.T)


def _preconditioner(m, gamma):
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"expected a square matrix, got {m.shape}")
    w = 0.5 * (m + m.T) + gamma * np.eye(m.shape[0])
    rowsum = w.sum(axis=1)
    if np.any(rowsum <= 0):
        bad = int(np.argmin(rowsum))
        raise ValueError(f"row {bad} of M + gamma*I has non-positive sum {rowsum[bad]:.4g}")
    d_isqrt = 1.0 / np.sqrt(rowsum)
    return w, d_isqrt, d_isqrt[:, None] * w * d_isqrt[None, :]


def iterative_inverse(m, cfg=None):
    """Approximate ``(m + gamma I)^-1`` with a row-sum-preconditioned Schulz iteration.

    With ``D = diag((m + gamma I) 1)`` and ``M' = D^-1/2 (m + gamma I) D^-1/2``
    the recurrence ``Z <- Z (2I - M' Z)`` starts from ``Z = I``; it converges
    because the eigenvalues of ``M'`` lie in (0, 1] for entrywise
    non-negative PSD ``m``.

    Returns ``(inverse, residuals)`` where ``residuals[k]`` is
    ``|I - M' Z|_F / sqrt(d)`` after update ``k + 1``. Raises
    :class:`DivergenceError` if the residual fails to drop for three updates
    in a row.
    """
    cfg = cfg or IterInverseConfig()
    _, d_isqrt, mp = _preconditioner(m, cfg.gamma)
    d = mp.shape[0]
    eye = np.eye(d)
    z = eye.copy()
    history = []
    stalls = 0
    for _ in range(int(cfg.max_iters)):
        z = z @ (2.0 * eye - mp @ z)
        r = float(np.linalg.norm(eye - mp @ z) / np.sqrt(d))
        if history and r >= history[-1]:
            stalls += 1
            if stalls >= 3:
                raise DivergenceError(f"Schulz residual stopped decreasing at {r:.3g}")
        else:
            stalls = 0
        history.append(r)
        if not np.isfinite(r):
            raise DivergenceError("Schulz iteration produced non-finite values")
        if r < cfg.residual_tol:
            break
    return d_isqrt[:, None] * z * d_isqrt[None, :], np.array(history)


def precondition_spectrum_check(m, gamma):
    """Smallest and largest eigenvalue of ``D^-1/2 (m + gamma I) D^-1/2``.

    ``gamma = 0`` is accepted as long as every row sum stays positive.
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    _, _, mp = _preconditioner(m, gamma)
    w = matcore.sym_eigen(mp).eigenvalues
    return float(w[-1]), float(w[0])


def statistical_dimension(cbar_spectrum, lam):
    """``sum_i s_i / (s_i + lam)``; tiny negative eigenvalues are clamped to 0."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    s = np.asarray(cbar_spectrum, dtype=np.float64)
    top = np.abs(s).max() if s.size else 0.0
    if s.size and s.min() < -1e-8 * top:
        raise ValueError(f"spectrum has a negative eigenvalue {s.min():.3g}")
    s = np.maximum(s, 0.0)
    return float(np.sum(s / (s + lam)))


def leverage_scores(cbar, lam):
    """Diagonal of ``cbar (cbar + lam I)^-1`` by a dense solve."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    cbar = as_matrix(cbar)
    sym = 0.5 * (cbar + cbar.T)
    # cbar and (cbar + lam I)^-1 commute, so the diagonal of the solve is the same
    x = np.linalg.solve(sym + lam * np.eye(sym.shape[0]), sym)
    return np.diag(x).copy()
