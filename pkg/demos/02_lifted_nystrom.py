# %% [markdown]
# The n x n kernel matrix between queries and keys is not symmetric, so
# plain Nystrom has no PSD core to invert. Stacking [Q; K] gives a 2n x 2n PSD
# matrix whose off-diagonal block is C; Nystrom on that matrix yields a
# three-factor approximation of C.

# %%
import numpy as np

from sketchattn import KernelSpec, evalbench, kernel_matrix, matcore, sketch
from sketchattn.rng import seeded_rng

n, p = 128, 8
spec = KernelSpec.gaussian(p)
inp = evalbench.generate_qkv(evalbench.SyntheticSpec(n, p, seed=3))
c = kernel_matrix(spec, inp.q, inp.k)

for d in (8, 32, 96):
    s = sketch.uniform_subsample(2 * n, d, True, seeded_rng(3, d))
    lifted = sketch.lifted_nystrom(spec, inp.q, inp.k, s)
    naive = sketch.naive_nystrom(spec, inp.q, inp.k, sketch.uniform_subsample(n, d, True, seeded_rng(4, d)))
    print(f"d={d:4d}  lifted {sketch.nystrom_error(spec, inp.q, inp.k, lifted):.3f}"
          f"  naive {sketch.nystrom_error(spec, inp.q, inp.k, naive):.3f}"
          f"  best rank-d {matcore.singular_value_spectrum(c)[d] / matcore.norm2(c):.3f}")

# %% [markdown]
# The lifted approximation never overshoots: the gap between the stacked
# kernel matrix and its approximation is PSD, and the error on C is bounded by
# the error on the stacked matrix.

# %%
s = sketch.uniform_subsample(2 * n, 16, True, seeded_rng(9))
cbar, approx = sketch.lifted_dense(spec, inp.q, inp.k, s)
gap = cbar - approx
print("smallest eigenvalue of the gap:", matcore.sym_eigen(gap).eigenvalues[-1])
f = sketch.lifted_nystrom(spec, inp.q, inp.k, s)
print("|C - C~| =", matcore.norm2(c - f.dense()), "<= |gap| =", matcore.norm2(gap))

# %% [markdown]
# Leverage scores and the statistical dimension say how many landmarks the
# matrix needs at a given regularization level.

# %%
for eps in (0.1, 0.01, 0.001):
    lam = eps * matcore.norm2(c)
    lev = sketch.leverage_scores(cbar, lam)
    print(f"eps={eps:<6} d_stat={lev.sum():7.2f}  max leverage {lev.max():.3f}")
