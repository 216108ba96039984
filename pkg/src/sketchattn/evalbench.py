"""Experiment drivers: spectral-error sweeps, Loewner audits, singular-value
decay, perturbation sensitivity and runtime scaling.

Every driver is deterministic given its seeds. Grid cells get their own
generator (:func:`sketchattn.rng.split` of the cell coordinates), so results
do not depend on evaluation order or on how many worker threads run them.
"""

import enum
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import attention as att
from . import matcore, sketch
from .kernels import KernelKind, KernelSpec, kernel_matrix
from .rng import seeded_rng

# cell-stream tags, folded into rng.split next to the coordinates
_TAG_SAMPLE = 1
_TAG_NAIVE = 2
_TAG_PERTURB = 3


class Method(enum.Enum):
    SKYFORMER = "SkyformerLifted"
    NAIVE = "NaiveNystrom"
    TSVD = "TruncatedSVD"
    EXACT = "Exact"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        v = str(value).strip().lower()
        for m in cls:
            if v == m.value.lower():
                return m
        aliases = {"skyformer": cls.SKYFORMER, "lifted": cls.SKYFORMER, "naive": cls.NAIVE,
                   "nystrom": cls.NAIVE, "svd": cls.TSVD, "tsvd": cls.TSVD, "exact": cls.EXACT}
        if v in aliases:
            return aliases[v]
        raise ValueError(f"unknown method {value!r}")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for synthetic Q, K, V.

    ``distribution`` is ``"iso"`` (i.i.d. N(0, sigma^2) entries) or
    ``"aniso"`` (column ``j`` of each matrix multiplied by ``decay**j``).
    """

    n: int
    p: int
    distribution: str = "iso"
    sigma: float = 1.0
    decay: float = 0.5
    seed: int = 0
    pv: int = None

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be >= 1")
        if self.distribution not in ("iso", "aniso"):
            raise ValueError(f"distribution must be 'iso' or 'aniso', got {self.distribution!r}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.decay > 0:
            raise ValueError("decay must be positive")
        if self.pv is not None and self.pv < 1:
            raise ValueError("pv must be >= 1")

    def with_seed(self, seed):
        return SyntheticSpec(self.n, self.p, self.distribution, self.sigma, self.decay, seed, self.pv)


@dataclass(frozen=True)
class ApproxReport:
    experiment: str
    n: int
    p: int
    d: int
    seed: int
    method: str
    kernel: str
    metric: str
    value: float

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError(f"non-finite report value for {self.experiment}/{self.metric}")

    def sort_key(self):
        return (self.experiment, self.n, self.p, self.d, self.seed, self.method, self.kernel, self.metric)


@dataclass(frozen=True)
class SensitivityResult:
    attention_kind: str
    tau: float
    ratio_vs_softmax: float


@dataclass(frozen=True)
class LoewnerRecord:
    seed: int
    min_eig: float  # smallest eigenvalue of Cbar - Cbar_tilde
    cbar_norm: float
    lambda_emp: float  # |Cbar - Cbar_tilde|
    block_error: float  # |C - C_tilde|
    upper_ok: bool  # Cbar <= Cbar_tilde + lambda_emp I

    @property
    def relative_min_eig(self):
        return self.min_eig / self.cbar_norm


def worker_count():
    """Thread cap from ``SKETCHATTN_THREADS`` (unset or 0 means one per CPU)."""
    raw = os.environ.get("SKETCHATTN_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError("SKETCHATTN_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def _run_cells(fn, cells, workers=None):
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, cells))


def generate_qkv(spec):
    """Q, K, V drawn in that order, row-major, from ``seeded_rng(spec.seed)``."""
    rng = seeded_rng(spec.seed)
    pv = spec.pv or spec.p
    q = rng.normal_array((spec.n, spec.p))
    k = rng.normal_array((spec.n, spec.p))
    v = rng.normal_array((spec.n, pv))
    if spec.distribution == "iso":
        q, k, v = (spec.sigma * m for m in (q, k, v))
    else:
        q = q * spec.decay ** np.arange(spec.p)
        k = k * spec.decay ** np.arange(spec.p)
        v = v * spec.decay ** np.arange(pv)
    return att.AttentionInput(q, k, v)


def _target(kind, inp):
    return kernel_matrix(KernelSpec(kind, inp.p), inp.q, inp.k)


def _inputs_for(spec, seed, inputs):
    return inputs if inputs is not None else generate_qkv(spec.with_seed(seed))


def spectral_sweep(spec, kernel, ds, seeds, methods, workers=None, with_replacement=True,
                   inputs=None):
    """Relative spectral error of each method against the exact score matrix.

    The target is ``A = SM(Q, K)`` for the softmax kernel and ``C`` for the
    Gaussian kernel. Inputs are regenerated per seed unless a fixed
    ``inputs`` is passed; landmark draws are per (seed, d, method).
    TruncatedSVD uses rank ``d``.
    """
    if spec.n > sketch.ORACLE_MAX_N:
        raise ValueError(f"n = {spec.n} is above the oracle limit {sketch.ORACLE_MAX_N}")
    kind = KernelKind.parse(kernel)
    kspec = KernelSpec(kind, spec.p)
    methods = [Method.parse(m) for m in methods]
    ds = [int(d) for d in ds]
    if not ds or min(ds) < 1:
        raise ValueError("ds must be a non-empty list of positive sizes")

    def one_seed(seed):
        inp = _inputs_for(spec, seed, inputs)
        target = _target(kind, inp)
        sv = matcore.singular_value_spectrum(target)
        ref = sv[0]
        out = []
        for d in ds:
            for m in methods:
                if m is Method.EXACT:
                    err = matcore.norm2(target - _target(kind, inp)) / ref
                elif m is Method.TSVD:
                    err = matcore.norm2(target - matcore.truncated_svd(target, d)) / ref
                elif m is Method.SKYFORMER:
                    s = sketch.uniform_subsample(2 * spec.n, d, with_replacement,
                                                 seeded_rng(seed, d, _TAG_SAMPLE))
                    f = sketch.lifted_nystrom(kspec, inp.q, inp.k, s)
                    err = matcore.norm2(target - f.dense()) / ref
                else:
                    replace = with_replacement or d > spec.n
                    s = sketch.uniform_subsample(spec.n, d, replace, seeded_rng(seed, d, _TAG_NAIVE))
                    f = sketch.naive_nystrom(kspec, inp.q, inp.k, s)
                    err = matcore.norm2(target - f.dense()) / ref
                out.append(ApproxReport("spectral", spec.n, spec.p, d, seed, m.value, kind.value,
                                        "rel_spectral_error", float(err)))
        return out

    rows = [r for chunk in _run_cells(one_seed, list(seeds), workers) for r in chunk]
    return sorted(rows, key=ApproxReport.sort_key)


def median_by(reports, method, d):
    vals = [r.value for r in reports if r.method == Method.parse(method).value and r.d == d]
    return float(np.median(vals))


def loewner_audit(spec, kernel, d, seeds, with_replacement=True, workers=None, inputs=None):
    """Check ``Cbar_tilde <= Cbar`` (and the block bound) on materialized matrices."""
    kind = KernelKind.parse(kernel)
    kspec = KernelSpec(kind, spec.p)
    n = spec.n

    if n > sketch.ORACLE_MAX_N // 2:
        raise ValueError(f"2n = {2 * n} is above the oracle limit {sketch.ORACLE_MAX_N}")

    def one(seed):
        inp = _inputs_for(spec, seed, inputs)
        s = sketch.uniform_subsample(2 * n, d, with_replacement, seeded_rng(seed, d, _TAG_SAMPLE))
        cbar, approx = sketch.lifted_dense(kspec, inp.q, inp.k, s)
        gap = cbar - approx
        w = matcore.sym_eigen(gap).eigenvalues
        cnorm = matcore.norm2(cbar)
        lam = float(max(w[0], 0.0))
        # Cbar_tilde + lam I - Cbar = lam I - gap is PSD iff lam >= max eig of gap
        upper_ok = bool(lam - w[0] >= -1e-12 * cnorm)
        block = matcore.norm2(gap[:n, n:])
        return LoewnerRecord(seed, float(w[-1]), cnorm, lam, block, upper_ok)

    return _run_cells(one, list(seeds), workers)


def loewner_reports(spec, kernel, d, records):
    kind = KernelKind.parse(kernel).value
    rows = []
    for r in records:
        for metric, value in (("min_eig_rel", r.relative_min_eig), ("lambda_emp", r.lambda_emp),
                              ("block_error", r.block_error)):
            rows.append(ApproxReport("loewner", spec.n, spec.p, d, r.seed, Method.SKYFORMER.value,
                                     kind, metric, float(value)))
    return sorted(rows, key=ApproxReport.sort_key)


def decay_spectrum(output, top_k):
    """Leading ``top_k`` singular values of ``output`` divided by the largest."""
    sv = matcore.singular_value_spectrum(output)
    if sv[0] == 0:
        return np.zeros(min(top_k, sv.size))
    return sv[:top_k] / sv[0]


ATTENTION_KINDS = ("softmax", "kernelized", "skyformer")


def _attention_fn(kind, cfg):
    if kind == "softmax":
        return att.softmax_attention_exact
    if kind == "kernelized":
        return att.kernelized_attention_exact
    if kind == "skyformer":
        if cfg is None:
            raise ValueError("skyformer sensitivity needs a SkyformerConfig")

        def fn(inp):
            # one landmark draw shared by the clean and perturbed passes
            return att.skyformer_attention(inp, cfg, att.draw_sample(cfg, 2 * inp.n))

        return fn
    raise ValueError(f"unknown attention kind {kind!r}")


def _instability(fn, inp, perturb_scale, trials, seed, target):
    base = fn(inp)
    rng = seeded_rng(seed, _TAG_PERTURB)
    taus = []
    if target == "qk":
        size = np.sqrt(np.sum(inp.q ** 2) + np.sum(inp.k ** 2))
    else:
        size = np.linalg.norm(inp.v)
    for _ in range(trials):
        if target == "qk":
            dq = rng.normal_array(inp.q.shape)
            dk = rng.normal_array(inp.k.shape)
            c = perturb_scale * size / np.sqrt(np.sum(dq ** 2) + np.sum(dk ** 2))
            dq, dk = c * dq, c * dk
            moved = inp.replace(q=inp.q + dq, k=inp.k + dk)
            denom = np.sum(dq ** 2) + np.sum(dk ** 2)
        else:
            dv = rng.normal_array(inp.v.shape)
            dv *= perturb_scale * size / np.linalg.norm(dv)
            moved = inp.replace(v=inp.v + dv)
            denom = np.sum(dv ** 2)
        taus.append(np.sum((fn(moved) - base) ** 2) / denom)
    return float(np.mean(taus))


def perturbation_sensitivity(inp, attention_kind, perturb_scale=1e-3, trials=5, seed=0,
                             cfg=None, target="qk"):
    """Output change per parameter change under random perturbations of Q and K.

    ``tau`` is the mean over ``trials`` of ``|f(Q+dQ, K+dK) - f(Q, K)|_F^2 /
    |(dQ, dK)|_F^2`` with ``|(dQ, dK)|_F = perturb_scale * |(Q, K)|_F``.
    The same perturbations are applied to exact softmax attention to form
    ``ratio_vs_softmax``. ``target="v"`` perturbs V instead.
    """
    if not perturb_scale > 0:
        raise ValueError("perturb_scale must be positive")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if target not in ("qk", "v"):
        raise ValueError("target must be 'qk' or 'v'")
    tau = _instability(_attention_fn(attention_kind, cfg), inp, perturb_scale, trials, seed, target)
    if attention_kind == "softmax":
        ref = tau
    else:
        ref = _instability(att.softmax_attention_exact, inp, perturb_scale, trials, seed, target)
    ratio = tau / ref if ref > 0 else float("inf")
    return SensitivityResult(attention_kind, tau, ratio)


def analytic_peak_bytes(method, n, d, p, pv=None):
    """Bytes of float64 matrices a forward pass allocates, counted from shapes.

    Exact: scores (n x n), row sums (n), output (n x pv).
    Skyformer: stacked points (2n x p), landmarks (d x p), left and right
    blocks (2 n d), core and its inverse (2 d^2), right @ V (d x pv), output.
    """
    pv = pv or p
    method = Method.parse(method)
    if method is Method.EXACT:
        count = n * n + n + n * pv
    elif method is Method.SKYFORMER:
        count = 2 * n * p + d * p + 2 * n * d + 2 * d * d + d * pv + n * pv
    else:
        raise ValueError(f"no memory model for {method.value}")
    return 8 * count


def time_call(fn, repeats):
    fn()  # warm-up, not counted
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def runtime_sweep(ns, d, p, kernel="gaussian", methods=("SkyformerLifted", "Exact"), repeats=5,
                  seed=0, inverse_mode=att.InverseMode.EXACT_PINV):
    """Median wall time of one forward pass per (n, method), plus analytic memory.

    ``Exact`` is the exact attention of the chosen kernel (softmax or
    kernelized); ``SkyformerLifted`` includes its landmark draw.
    """
    kind = KernelKind.parse(kernel)
    methods = [Method.parse(m) for m in methods]
    rows = []
    for n in ns:
        inp = generate_qkv(SyntheticSpec(n, p, seed=seed))
        for m in methods:
            if m is Method.EXACT:
                if n > 8192:
                    raise ValueError("exact attention is limited to n <= 8192")
                fn = (att.softmax_attention_exact if kind is KernelKind.SOFTMAX
                      else att.kernelized_attention_exact)
                call = lambda fn=fn: fn(inp)  # noqa: E731
            elif m is Method.SKYFORMER:
                cfg = att.SkyformerConfig(d, kind, inverse_mode, seed=seed)
                if kind is KernelKind.SOFTMAX:
                    call = lambda cfg=cfg: att.approx_softmax_attention(inp, cfg)  # noqa: E731
                else:
                    call = lambda cfg=cfg: att.skyformer_attention(inp, cfg)  # noqa: E731
            else:
                raise ValueError(f"runtime sweep does not time {m.value}")
            rows.append(ApproxReport("runtime", n, p, d, seed, m.value, kind.value,
                                     "seconds", time_call(call, repeats)))
            rows.append(ApproxReport("runtime", n, p, d, seed, m.value, kind.value,
                                     "peak_bytes", float(analytic_peak_bytes(m, n, d, p))))
    return sorted(rows, key=ApproxReport.sort_key)
