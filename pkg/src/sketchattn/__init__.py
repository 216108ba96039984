"""Kernelized attention and its lifted Nystrom approximation.

The main entry points are re-exported here; see the submodules for the
diagnostics and experiment drivers.
"""

from .attention import (
    AttentionInput,
    InverseMode,
    SkyformerConfig,
    approx_softmax_attention,
    kernelized_attention_exact,
    skyformer_attention,
    softmax_attention_exact,
    truncated_svd_baseline,
)
from .kernels import KernelKind, KernelSpec, diag_exp_norms, kernel_matrix, sm_from_gaussian
from .rng import Xoshiro256, seeded_rng
from .sketch import (
    IterInverseConfig,
    NystromFactors,
    SubSample,
    iterative_inverse,
    lifted_nystrom,
    naive_nystrom,
    uniform_subsample,
)

__version__ = "0.1.0"
