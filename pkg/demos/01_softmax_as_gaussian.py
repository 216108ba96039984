# %% [markdown]
# The softmax score exp(q.k / sqrt(p)) is a Gaussian kernel on rows scaled by
# p^(-1/4), sandwiched between two diagonal factors built from the row norms.

# %%
import numpy as np

from sketchattn import KernelSpec, kernel_matrix
from sketchattn.kernels import diag_exp_norms, sm_from_gaussian

rng = np.random.default_rng(0)
n, p = 6, 4
q = rng.standard_normal((n, p))
k = rng.standard_normal((n, p))

a = kernel_matrix(KernelSpec.softmax(p), q, k)
c = kernel_matrix(KernelSpec.gaussian(p), q, k)
print("softmax scores\n", np.round(a, 3))
print("gaussian kernel (entries in (0, 1])\n", np.round(c, 3))

# %%
dq = np.sqrt(diag_exp_norms(KernelSpec.softmax(p), q))
dk = np.sqrt(diag_exp_norms(KernelSpec.softmax(p), k))
rebuilt = dq[:, None] * c * dk[None, :]
print("max relative deviation:", np.max(np.abs(rebuilt - a) / a))
print("same via helper:       ", np.max(np.abs(sm_from_gaussian(q, k, p) - a) / a))

# %% [markdown]
# Kernelized attention drops the row-norm factors, so its scores stay bounded
# even when the raw logits are large.

# %%
big = 6 * q
print("largest softmax score:", kernel_matrix(KernelSpec.softmax(p), big, k).max())
print("largest kernel entry: ", kernel_matrix(KernelSpec.gaussian(p), big, k).max())
