"""Attention forward passes: exact softmax, exact kernelized, and Nystrom-based.

``skyformer_attention`` approximates the Gaussian kernelized attention
``C @ V`` through the lifted Nystrom factors and never builds an n x n
matrix. ``approx_softmax_attention`` pushes the softmax kernel through the
same factorization and then renormalizes with the approximated row sums; it
exists for approximation-error studies only; the softmax-kernel core inherits
the huge condition numbers of the raw score matrix, so it is not recommended
as a drop-in attention layer.
"""

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import matcore, sketch
from .kernels import KernelKind, KernelSpec, kernel_matrix
from .matcore import ShapeError, as_matrix
from .rng import seeded_rng


class ClampWarning(RuntimeWarning):
    """Too many approximated softmax row sums hit the positivity floor."""


class InverseMode(enum.Enum):
    EXACT_PINV = "pinv"
    ITERATIVE = "iter"


@dataclass(frozen=True)
class AttentionInput:
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        q, k, v = (as_matrix(m, name) for m, name in ((self.q, "q"), (self.k, "k"), (self.v, "v")))
        if not q.shape[0] == k.shape[0] == v.shape[0]:
            raise ShapeError(f"q, k, v must share n rows, got {q.shape[0]}, {k.shape[0]}, {v.shape[0]}")
        if q.shape[1] != k.shape[1]:
            raise ShapeError(f"q and k widths differ: {q.shape[1]} vs {k.shape[1]}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "v", v)

    @property
    def n(self):
        return self.q.shape[0]

    @property
    def p(self):
        return self.q.shape[1]

    def replace(self, **kw):
        return AttentionInput(kw.get("q", self.q), kw.get("k", self.k), kw.get("v", self.v))


@dataclass(frozen=True)
class SkyformerConfig:
    d: int
    kernel: KernelKind = KernelKind.GAUSSIAN
    inverse_mode: InverseMode = InverseMode.EXACT_PINV
    iter_config: sketch.IterInverseConfig = field(default_factory=sketch.IterInverseConfig)
    seed: int = 0
    with_replacement: bool = True

    def __post_init__(self):
        if int(self.d) < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        object.__setattr__(self, "kernel", KernelKind.parse(self.kernel))
        object.__setattr__(self, "inverse_mode", InverseMode(self.inverse_mode))


def softmax_attention_exact(inp):
    """``D^-1 A V`` with ``A = SM(Q, K)`` and ``D = diag(A 1)``."""
    a = kernel_matrix(KernelSpec.softmax(inp.p), inp.q, inp.k)
    return (a / a.sum(axis=1, keepdims=True)) @ inp.v


def kernelized_attention_exact(inp):
    """``C V`` with ``C`` the Gaussian kernel matrix of ``Q / p^1/4`` and ``K / p^1/4``."""
    return kernel_matrix(KernelSpec.gaussian(inp.p), inp.q, inp.k) @ inp.v


def draw_sample(cfg, population):
    return sketch.uniform_subsample(population, cfg.d, cfg.with_replacement, seeded_rng(cfg.seed))


def skyformer_factors(inp, cfg, sample=None, kernel=None):
    kind = KernelKind.parse(kernel) if kernel is not None else cfg.kernel
    spec = KernelSpec(kind, inp.p)
    if sample is None:
        sample = draw_sample(cfg, 2 * inp.n)
    f = sketch.lifted_nystrom(spec, inp.q, inp.k, sample)
    if cfg.inverse_mode is InverseMode.ITERATIVE:
        # ridge acts on the 0/1-selected landmark Gram; the column scale is
        # divided back out so the product matches the pinv factors
        core = sketch.landmark_core(spec, f, 1.0)
        inv, _ = sketch.iterative_inverse(core, cfg.iter_config)
        f = sketch.NystromFactors(f.left, inv / sample.scale**2, f.right, f.landmarks)
    return f


def skyformer_attention(inp, cfg, sample=None):
    """Nystrom-approximated kernelized attention.

    Cost is O(n d p + n d p_v + d^3); the product is evaluated as
    ``left @ (core_inv @ (right @ V))``. ``sample`` overrides the landmark
    draw that ``cfg.seed`` would make.
    """
    f = skyformer_factors(inp, cfg, sample)
    return f.apply(inp.v)


@dataclass(frozen=True)
class ApproxSoftmaxResult:
    output: np.ndarray
    row_sums: np.ndarray  # approximated D, after clamping
    clamped: int
    warned: bool


def approx_softmax_attention(inp, cfg, sample=None, floor_ratio=1e-6, return_details=False):
    """Softmax attention with ``A`` replaced by its lifted Nystrom approximation.

    Row sums ``D~ = A~ 1`` are computed from the same factors, and any value
    below ``floor_ratio * max(D~)`` is raised to that floor. When more than 1%
    of rows are clamped a :class:`ClampWarning` is issued.
    """
    f = skyformer_factors(inp, cfg, sample, kernel=KernelKind.SOFTMAX)
    rows = f.apply(np.ones(inp.n))
    floor = floor_ratio * rows.max()
    low = rows < floor
    clamped = int(low.sum())
    rows = np.where(low, floor, rows)
    out = f.apply(inp.v) / rows[:, None]
    warned = clamped > 0.01 * inp.n
    if warned:
        warnings.warn(f"{clamped} of {inp.n} approximate row sums clamped", ClampWarning, stacklevel=2)
    if return_details:
        return ApproxSoftmaxResult(out, rows, clamped, warned)
    return out


def truncated_svd_baseline(c, rank):
    """Best rank-``rank`` approximation; its spectral error is ``sigma_{rank+1}``."""
    return matcore.truncated_svd(c, rank)
