"""Softmax and Gaussian kernels on query/key rows.

``SM(q, k) = exp(q.k / sqrt(p))`` and the Gaussian kernel evaluated on rows
scaled by ``p**-0.25``, ``exp(-|q - k|^2 / (2 sqrt(p)))``, are linked by

    SM(Q, K) = diag(D_Q)^(1/2) * gauss(Q, K) * diag(D_K)^(1/2),
    D_Q[i] = exp(|q_i|^2 / sqrt(p)).

Softmax overflow is an error, never a silent clamp.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .matcore import ShapeError, as_matrix

# exp(709.78) is the largest finite double
EXP_LIMIT = 700.0


class KernelOverflowError(OverflowError):
    pass


class KernelKind(enum.Enum):
    SOFTMAX = "sm"
    GAUSSIAN = "gaussian"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        v = str(value).strip().lower()
        aliases = {"sm": cls.SOFTMAX, "softmax": cls.SOFTMAX, "softmaxsm": cls.SOFTMAX,
                   "gaussian": cls.GAUSSIAN, "gauss": cls.GAUSSIAN, "rbf": cls.GAUSSIAN}
        try:
            return aliases[v]
        except KeyError:
            raise ValueError(f"unknown kernel {value!r}; expected 'sm' or 'gaussian'") from None


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind
    head_dim_p: int

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind.parse(self.kind))
        if int(self.head_dim_p) < 1:
            raise ValueError(f"head_dim_p must be >= 1, got {self.head_dim_p}")

    @classmethod
    def softmax(cls, p):
        return cls(KernelKind.SOFTMAX, p)

    @classmethod
    def gaussian(cls, p):
        return cls(KernelKind.GAUSSIAN, p)

    @property
    def sqrt_p(self):
        return math.sqrt(self.head_dim_p)


def _check_width(spec, *mats):
    for m in mats:
        if m.shape[1] != spec.head_dim_p:
            raise ShapeError(f"rows have width {m.shape[1]}, kernel expects p={spec.head_dim_p}")


def _symmetrize_upper(m):
    # fill from the upper triangle so the result is exactly symmetric
    upper = np.triu(m)
    return upper + np.triu(upper, 1).T


def _check_exponent(logits, what):
    if logits.size and logits.max() > EXP_LIMIT:
        i, j = np.unravel_index(int(np.argmax(logits)), logits.shape)
        raise KernelOverflowError(
            f"{what}: exponent {logits[i, j]:.4g} at ({i}, {j}) exceeds {EXP_LIMIT:g}")


def kernel_matrix(spec, rows, cols=None):
    """Kernel matrix between the rows of ``rows`` and ``cols``.

    With ``cols`` omitted (or the same object as ``rows``) the symmetric
    Gram matrix is returned, exactly symmetric and with a unit diagonal in the
    Gaussian case.
    """
    x = as_matrix(rows, "rows")
    symmetric = cols is None or cols is rows
    y = x if symmetric else as_matrix(cols, "cols")
    _check_width(spec, x, y)
    inner = x @ y.T
    if spec.kind is KernelKind.SOFTMAX:
        logits = inner / spec.sqrt_p
        if symmetric:
            logits = _symmetrize_upper(logits)
        _check_exponent(logits, "softmax kernel")
        return np.exp(logits)

    xx = np.einsum("ij,ij->i", x, x)
    yy = xx if symmetric else np.einsum("ij,ij->i", y, y)
    sq = xx[:, None] - 2.0 * inner + yy[None, :]
    np.maximum(sq, 0.0, out=sq)
    if symmetric:
        sq = _symmetrize_upper(sq)
        np.fill_diagonal(sq, 0.0)
    return np.exp(-sq / (2.0 * spec.sqrt_p))


def diag_exp_norms(spec, m):
    """Diagonal of D_Q: ``exp(|m_i|^2 / sqrt(p))`` for each row."""
    m = as_matrix(m)
    e = np.einsum("ij,ij->i", m, m) / spec.sqrt_p
    if e.size and e.max() > EXP_LIMIT:
        i = int(np.argmax(e))
        raise KernelOverflowError(f"row {i}: |m_i|^2/sqrt(p) = {e[i]:.4g} exceeds {EXP_LIMIT:g}")
    return np.exp(e)


def sm_from_gaussian(q, k, p):
    """Softmax kernel matrix rebuilt from the Gaussian kernel and row norms."""
    q = as_matrix(q, "q")
    k = as_matrix(k, "k")
    spec = KernelSpec.gaussian(p)
    # sqrt(D) taken as exp(e / 2) rather than sqrt(exp(e))
    dq = _half_exp_norms(spec, q)
    dk = _half_exp_norms(spec, k)
    c = kernel_matrix(spec, q, k if k is not q else None)
    return dq[:, None] * c * dk[None, :]


def _half_exp_norms(spec, m):
    diag_exp_norms(spec, m)  # overflow check
    return np.exp(0.5 * np.einsum("ij,ij->i", m, m) / spec.sqrt_p)
