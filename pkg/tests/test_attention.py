import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sketchattn import attention as att
from sketchattn import matcore, sketch
from sketchattn.attention import AttentionInput, InverseMode, SkyformerConfig
from sketchattn.kernels import KernelSpec, kernel_matrix
from sketchattn.matcore import ShapeError
from sketchattn.sketch import SubSample


def rand_input(rng, n=8, p=4, pv=None, scale=1.0):
    return AttentionInput(scale * rng.standard_normal((n, p)), scale * rng.standard_normal((n, p)),
                          rng.standard_normal((n, pv or p)))


def full_sample(pop):
    return SubSample(pop, np.arange(pop), float(np.sqrt(1.0 / pop)), False)


def rel_fro(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def softmax_weights(inp):
    a = np.array([[np.exp(q @ k / np.sqrt(inp.p)) for k in inp.k] for q in inp.q])
    return a / a.sum(axis=1, keepdims=True)


class TestAttentionInput:
    def test_shapes(self, rng):
        with pytest.raises(ShapeError):
            AttentionInput(np.zeros((3, 2)), np.zeros((4, 2)), np.zeros((3, 2)))
        with pytest.raises(ShapeError):
            AttentionInput(np.zeros((3, 2)), np.zeros((3, 3)), np.zeros((3, 2)))
        inp = AttentionInput(np.zeros((3, 2)), np.zeros((3, 2)), np.zeros((3, 5)))
        assert (inp.n, inp.p) == (3, 2)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SkyformerConfig(d=0)
        assert SkyformerConfig(4, inverse_mode="iter").inverse_mode is InverseMode.ITERATIVE


class TestSoftmaxExact:
    def test_single_row(self, rng):
        inp = rand_input(rng, 1, 3)
        np.testing.assert_array_equal(att.softmax_attention_exact(inp), inp.v)

    def test_zero_queries_average(self, rng):
        inp = rand_input(rng, 10, 4).replace(q=np.zeros((10, 4)))
        out = att.softmax_attention_exact(inp)
        np.testing.assert_allclose(out, np.tile(inp.v.mean(axis=0), (10, 1)), atol=1e-14)

    def test_matches_loop_oracle(self, rng):
        inp = rand_input(rng)
        np.testing.assert_allclose(att.softmax_attention_exact(inp), softmax_weights(inp) @ inp.v,
                                   rtol=1e-12, atol=1e-14)

    def test_row_stochastic(self, rng):
        inp = rand_input(rng)
        ones = inp.replace(v=np.ones((8, 1)))
        np.testing.assert_allclose(att.softmax_attention_exact(ones), 1.0, atol=1e-12)


class TestKernelizedExact:
    def test_single_row(self, rng):
        q = rng.standard_normal((1, 4))
        inp = AttentionInput(q, q, rng.standard_normal((1, 2)))
        np.testing.assert_allclose(att.kernelized_attention_exact(inp), inp.v, rtol=1e-15)

    def test_identity_values(self, rng):
        inp = rand_input(rng).replace(v=np.eye(8))
        np.testing.assert_allclose(att.kernelized_attention_exact(inp),
                                   kernel_matrix(KernelSpec.gaussian(4), inp.q, inp.k), rtol=1e-14)

    def test_normalization_identity(self, rng):
        for _ in range(10):
            inp = rand_input(rng)
            sp = np.sqrt(inp.p)
            a = np.exp(inp.q @ inp.k.T / sp)
            dq = np.exp(-0.5 * np.sum(inp.q**2, axis=1) / sp)
            dk = np.exp(-0.5 * np.sum(inp.k**2, axis=1) / sp)
            ref = (dq[:, None] * a * dk[None, :]) @ inp.v
            assert rel_fro(att.kernelized_attention_exact(inp), ref) < 1e-9

    @settings(max_examples=30, deadline=None, derandomize=True)
    @given(st.integers(1, 12), st.integers(0, 2**31 - 1))
    def test_permutation_equivariance(self, n, seed):
        r = np.random.default_rng(seed)
        inp = rand_input(r, n, 3)
        perm = r.permutation(n)
        for fn in (att.softmax_attention_exact, att.kernelized_attention_exact):
            base = fn(inp)
            np.testing.assert_allclose(fn(inp.replace(q=inp.q[perm])), base[perm], atol=1e-12)
            kv = inp.replace(k=inp.k[perm], v=inp.v[perm])
            np.testing.assert_allclose(fn(kv), base, atol=1e-12)


class TestSkyformer:
    def test_full_sampling(self, rng):
        inp = rand_input(rng, 32, 4, pv=3)
        out = att.skyformer_attention(inp, SkyformerConfig(64), full_sample(64))
        assert rel_fro(out, att.kernelized_attention_exact(inp)) < 1e-5

    def test_zero_values(self, rng):
        inp = rand_input(rng, 16).replace(v=np.zeros((16, 2)))
        np.testing.assert_array_equal(att.skyformer_attention(inp, SkyformerConfig(8)), 0.0)

    def test_linear_in_values(self, rng):
        inp = rand_input(rng, 40)
        v2 = rng.standard_normal(inp.v.shape)
        cfg = SkyformerConfig(12, seed=4)
        a = att.skyformer_attention(inp, cfg)
        b = att.skyformer_attention(inp.replace(v=v2), cfg)
        ab = att.skyformer_attention(inp.replace(v=inp.v + v2), cfg)
        np.testing.assert_allclose(ab, a + b, atol=1e-12)

    def test_seed_determinism(self, rng):
        inp = rand_input(rng, 40)
        cfg = SkyformerConfig(12, seed=9)
        np.testing.assert_array_equal(att.skyformer_attention(inp, cfg), att.skyformer_attention(inp, cfg))

    def test_rank_bound(self, rng):
        inp = rand_input(rng, 64, 8)
        d = 12
        f = att.skyformer_factors(inp, SkyformerConfig(d, seed=1))
        sv = matcore.singular_value_spectrum(f.dense())
        assert sv[d] <= 1e-8 * sv[0]

    def test_iterative_matches_pinv(self, rng):
        inp = rand_input(rng, 256, 8)
        s = att.draw_sample(SkyformerConfig(64, seed=3), 512)
        exact = att.skyformer_attention(inp, SkyformerConfig(64), s)
        it = att.skyformer_attention(inp, SkyformerConfig(64, inverse_mode=InverseMode.ITERATIVE), s)
        assert rel_fro(it, exact) < 1e-3

    def test_divergence_propagates(self, rng, monkeypatch):
        def boom(m, cfg):
            raise sketch.DivergenceError("stalled")
        monkeypatch.setattr(sketch, "iterative_inverse", boom)
        with pytest.raises(sketch.DivergenceError):
            att.skyformer_attention(rand_input(rng, 8), SkyformerConfig(4, inverse_mode="iter"))


class TestApproxSoftmax:
    def test_full_sampling(self, rng):
        inp = rand_input(rng, 32, 4, scale=0.7)
        out = att.approx_softmax_attention(inp, SkyformerConfig(64, kernel="sm"), full_sample(64))
        assert rel_fro(out, att.softmax_attention_exact(inp)) < 1e-5

    def test_single_row(self, rng):
        inp = rand_input(rng, 1, 4)
        out = att.approx_softmax_attention(inp, SkyformerConfig(2, kernel="sm"), full_sample(2))
        np.testing.assert_allclose(out, inp.v, rtol=1e-12)

    def test_rows_sum_to_one_when_unclamped(self, rng):
        inp = rand_input(rng, 128, 8)
        cfg = SkyformerConfig(64, kernel="sm", seed=2)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", att.ClampWarning)
            res = att.approx_softmax_attention(inp.replace(v=np.ones((128, 1))), cfg,
                                               return_details=True)
            f = att.skyformer_factors(inp, cfg, kernel="sm")
        raw = f.apply(np.ones(128))
        ok = raw >= 1e-6 * raw.max()
        assert ok.any()
        np.testing.assert_allclose(res.output[ok, 0], 1.0, atol=1e-6)
        assert np.isfinite(matcore.norm2(f.dense() - kernel_matrix(KernelSpec.softmax(8), inp.q, inp.k)))

    def test_clamp_warning(self, rng, monkeypatch):
        inp = rand_input(rng, 20)
        real = sketch.lifted_nystrom

        def negated(*a, **kw):
            f = real(*a, **kw)
            left = f.left.copy()
            left[:5] *= -1  # a quarter of the rows get negative sums
            return sketch.NystromFactors(left, f.core_pinv, f.right, f.landmarks)

        monkeypatch.setattr(sketch, "lifted_nystrom", negated)
        with pytest.warns(att.ClampWarning):
            res = att.approx_softmax_attention(inp, SkyformerConfig(40, kernel="sm"), full_sample(40),
                                               return_details=True)
        assert res.warned and res.clamped == 5
        assert np.all(res.row_sums > 0) and np.all(np.isfinite(res.output))


class TestTruncatedSVD:
    def test_full_rank_exact(self, rng):
        m = rng.standard_normal((6, 6))
        np.testing.assert_allclose(att.truncated_svd_baseline(m, 6), m, atol=1e-12)

    def test_diag(self):
        out = att.truncated_svd_baseline(np.diag([3.0, 1.0]), 1)
        np.testing.assert_allclose(out, np.diag([3.0, 0.0]), atol=1e-15)
        assert matcore.norm2(np.diag([3.0, 1.0]) - out) == pytest.approx(1.0)

    def test_eckart_young(self, rng):
        m = rng.standard_normal((64, 64))
        sv = matcore.singular_value_spectrum(m)
        for r in (1, 10, 40):
            assert matcore.norm2(m - att.truncated_svd_baseline(m, r)) == pytest.approx(sv[r], abs=1e-8)

    def test_rank_clamped(self, rng):
        m = rng.standard_normal((3, 5))
        np.testing.assert_allclose(att.truncated_svd_baseline(m, 99), m, atol=1e-12)
