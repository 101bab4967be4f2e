import math

import numpy as np
import pytest

from affnet import autodiff as ad
from affnet import spectral
from affnet.autodiff import ParamStore, Tape, gradcheck
from affnet.errors import DeterminismError, RankError, ShapeError
from affnet.mixers import AffMixerParams, MixerKind, apply_mixer
from affnet.verify import _op_cases, adjoint_cases, adjoint_error, block_case, project

OP_CASES = [(seed, name) for seed in range(3) for name, _, _ in _op_cases(seed)]


def make_store(**vals):
    st = ParamStore(np.float64)
    for k, v in vals.items():
        st.add(k, np.asarray(v, dtype=np.float64))
    return st


class TestParamStore:
    def test_duplicate_name(self):
        st = make_store(a=np.ones(2))
        with pytest.raises(KeyError):
            st.add("a", np.ones(2))

    def test_set_checks_shape(self):
        st = make_store(a=np.ones(2))
        with pytest.raises(ShapeError):
            st.set("a", np.ones(3))

    def test_grad_shape_and_zeroing(self):
        st = make_store(a=np.ones((2, 3)))
        st.accumulate("a", np.ones((2, 3)))
        assert st.grad("a").shape == (2, 3)
        st.zero_grad()
        assert not st.grad("a").any()

    def test_astype_copies(self):
        st = make_store(a=np.ones(2))
        st32 = st.astype(np.float32)
        assert st32["a"].dtype == np.float32
        st32["a"][0] = 5
        assert st["a"][0] == 1


class TestTapeBasics:
    def test_relu_subgradient(self):
        st = make_store(x=[-1.0, 2.0])
        t = Tape(st)
        t.backward(ad.sum_all(ad.relu(t.param("x"))))
        np.testing.assert_array_equal(st.grad("x"), [0.0, 1.0])

    def test_relu_at_zero_is_zero(self):
        st = make_store(x=[0.0])
        t = Tape(st)
        t.backward(ad.sum_all(ad.relu(t.param("x"))))
        assert st.grad("x")[0] == 0.0

    def test_product_rule(self, rng):
        x, y = rng.standard_normal((2, 5))
        st = make_store(x=x, y=y)
        t = Tape(st)
        t.backward(ad.sum_all(ad.mul(t.param("x"), t.param("y"))))
        np.testing.assert_array_equal(st.grad("x"), y)
        np.testing.assert_array_equal(st.grad("y"), x)

    def test_fan_out_accumulates(self, rng):
        x = rng.standard_normal(4)
        st = make_store(x=x)
        t = Tape(st)
        xv = t.param("x")
        t.backward(ad.sum_all(ad.mul(xv, xv)))
        np.testing.assert_allclose(st.grad("x"), 2 * x)

    def test_constants_get_no_gradient(self, rng):
        st = make_store(x=rng.standard_normal(3))
        t = Tape(st)
        c = t.constant(np.ones(3))
        out = t.backward(ad.sum_all(ad.mul(t.param("x"), c)))
        assert out == {}
        assert st.names() == ["x"]

    def test_non_scalar_loss(self):
        st = make_store(x=np.ones(3))
        t = Tape(st)
        with pytest.raises(RankError):
            t.backward(ad.relu(t.param("x")))

    def test_single_use(self):
        st = make_store(x=np.ones(3))
        t = Tape(st)
        loss = ad.sum_all(t.param("x"))
        t.backward(loss)
        with pytest.raises(RuntimeError):
            t.backward(loss)

    def test_reverse_order_matches_append_order(self):
        st = make_store(x=np.ones(2))
        t = Tape(st)
        ad.sum_all(ad.relu(t.param("x")))
        assert t.kinds == ["param", "relu", "sum"]

    def test_softmax_ce_ln2(self):
        t = Tape(make_store(z=np.zeros((1, 2))))
        loss = ad.softmax_cross_entropy(t.param("z"), np.array([0]), smoothing=0.0)
        assert math.isclose(float(loss.value), math.log(2), rel_tol=1e-15)

    def test_label_smoothing_lowers_confident_loss(self):
        z = np.array([[10.0, -10.0]])
        t0 = Tape(make_store(z=z))
        t1 = Tape(make_store(z=z))
        plain = float(ad.softmax_cross_entropy(t0.param("z"), np.array([0]), 0.0).value)
        smooth = float(ad.softmax_cross_entropy(t1.param("z"), np.array([0]), 0.1).value)
        assert smooth > plain

    def test_layer_norm_constant_input(self):
        st = make_store(x=np.full((1, 4, 2, 2), 3.0), g=np.ones(4), b=np.zeros(4))
        t = Tape(st)
        out = ad.layer_norm(t.param("x"), t.param("g"), t.param("b"))
        np.testing.assert_allclose(out.value, 0.0, atol=1e-12)


class TestComplexRules:
    def test_fft2_adjoint_is_scaled_inverse(self, rng):
        x = rng.standard_normal((1, 1, 4, 8)) + 1j * rng.standard_normal((1, 1, 4, 8))
        y = rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
        t = Tape(ParamStore(np.float64))
        xv = t.watch(x)
        z = ad.fft2_diff(xv)
        loss = ad.add(ad.sum_all(ad.mul(ad.real_part_diff(z), t.constant(y.real))),
                      ad.sum_all(ad.mul(ad.imag_part_diff(z), t.constant(y.imag))))
        g = t.backward(loss)[xv.index]
        np.testing.assert_allclose(g, 32 * spectral.ifft2(y), atol=1e-12)

    def test_hadamard_rule(self, rng):
        a = rng.standard_normal((1, 2, 2, 2)) + 1j * rng.standard_normal((1, 2, 2, 2))
        b = rng.standard_normal(a.shape) + 1j * rng.standard_normal(a.shape)
        t = Tape(ParamStore(np.float64))
        av = t.watch(a)
        loss = ad.sum_all(ad.real_part_diff(ad.complex_hadamard(av, t.constant(b))))
        g = t.backward(loss)[av.index]
        # d Re(a b) / d Re(a) = Re(b), / d Im(a) = -Im(b)  ->  g = conj(b)
        np.testing.assert_allclose(g, np.conj(b), atol=1e-15)

    def test_real_part_injects_real_gradient(self, rng):
        z = rng.standard_normal((1, 1, 2, 2)) + 1j * rng.standard_normal((1, 1, 2, 2))
        t = Tape(ParamStore(np.float64))
        zv = t.watch(z)
        g = t.backward(ad.sum_all(ad.real_part_diff(zv)))[zv.index]
        np.testing.assert_array_equal(g, np.ones(z.shape, complex))

    @pytest.mark.parametrize("name,x,fwd", adjoint_cases(), ids=[c[0] for c in adjoint_cases()])
    def test_dot_product_adjoint(self, name, x, fwd):
        assert adjoint_error(x, fwd) <= 1e-10


class TestGradcheck:
    @pytest.mark.parametrize("seed,name", OP_CASES, ids=[f"{n}-{s}" for s, n in OP_CASES])
    def test_every_op_64bit(self, seed, name):
        _, st, frag = next(c for c in _op_cases(seed) if c[0] == name)
        rep = gradcheck(frag, st, eps=1e-6, tol=1e-6)
        assert rep.passed, str(rep)

    @pytest.mark.parametrize("name", [n for n, _, _ in _op_cases(1)])
    def test_every_op_32bit_backward(self, name):
        _, st, frag = next(c for c in _op_cases(1) if c[0] == name)
        rep = gradcheck(frag, st, eps=1e-6, tol=1e-4, analytic_dtype=np.float32)
        assert rep.passed, str(rep)

    def test_fft2_sum_of_real_part(self, rng):
        st = make_store(x=rng.standard_normal((1, 1, 4, 4)))
        rep = gradcheck(lambda t: ad.sum_all(ad.real_part_diff(ad.fft2_diff(t.param("x")))), st)
        assert rep.passed and rep.max_error <= 1e-6

    def test_single_group_linear(self, rng):
        st = make_store(x=rng.standard_normal((1, 8, 2, 2)), w=rng.standard_normal((2, 4, 4)),
                        b=rng.standard_normal(8))
        rep = gradcheck(lambda t: project(t, ad.group_pointwise_linear(t.param("x"), t.param("w"),
                                                                         t.param("b"))), st)
        assert rep.passed, str(rep)

    def test_layer_norm_scale_gradient(self, rng):
        st = make_store(x=rng.standard_normal((2, 4, 3, 3)), g=rng.uniform(0.5, 2, 4), b=np.zeros(4))
        rep = gradcheck(lambda t: project(t, ad.layer_norm(t.param("x"), t.param("g"), t.param("b"))), st,
                        eps=1e-4, tol=1e-4, names=["g"])
        assert rep.passed, str(rep)

    def test_aff_mixer_end_to_end(self, rng):
        p = AffMixerParams.init(2, 2, rng, out_scale=1.0)
        st = make_store(x=rng.standard_normal((1, 2, 4, 4)), **p.as_dict())

        def frag(t):
            params = {k: t.param(k) for k in ("w1", "w2", "b1", "b2")}
            return ad.sum_all(apply_mixer(MixerKind.AFF_FFT, t.param("x"), params))

        rep = gradcheck(frag, st, eps=1e-4, tol=1e-4)
        assert rep.passed, str(rep)

    @pytest.mark.parametrize("kind", [MixerKind.AFF_FFT, MixerKind.AFF_SUM, MixerKind.SPATIAL_SHARED_MASK])
    def test_full_block(self, kind):
        st, frag = block_case(seed=3, kind=kind)
        rep = gradcheck(frag, st, eps=1e-6, tol=1e-4)
        assert rep.passed, str(rep)

    def test_corrupted_backward_is_caught(self, rng, monkeypatch):
        st = make_store(x=rng.standard_normal((1, 4, 2, 2)), w=rng.standard_normal((2, 2, 2)))
        original = ad._group_matmul_backward

        def broken(g, xg, w):
            dx, dw = original(g, xg, w)
            return dx, dw * 1.01

        monkeypatch.setattr(ad, "_group_matmul_backward", broken)
        rep = gradcheck(lambda t: project(t, ad.group_pointwise_linear(t.param("x"), t.param("w"))), st)
        assert not rep.passed
        assert rep.failures == ["w"]
        assert "FAIL w" in str(rep)

    def test_nondeterministic_fragment(self):
        st = make_store(x=np.ones(2))
        noise = iter(np.arange(100.0))

        def frag(t):
            return ad.sum_all(ad.scale(t.param("x"), next(noise)))

        with pytest.raises(DeterminismError):
            gradcheck(frag, st)

    def test_requires_64bit(self):
        st = ParamStore(np.float32)
        st.add("x", np.ones(2))
        with pytest.raises(ValueError):
            gradcheck(lambda t: ad.sum_all(t.param("x")), st)


class TestGradientLinearity:
    def test_linear_combination_of_losses(self, rng):
        vals = dict(x=rng.standard_normal((1, 4, 4, 4)), g=np.ones(4), b=np.zeros(4))

        def grads(alpha, beta):
            st = make_store(**vals)
            t = Tape(st)
            y = ad.layer_norm(t.param("x"), t.param("g"), t.param("b"))
            l1 = project(t, ad.relu(y), seed=1)
            l2 = project(t, ad.real_part_diff(ad.fft2_diff(y)), seed=2)
            t.backward(ad.add(ad.scale(l1, alpha), ad.scale(l2, beta)))
            return {k: st.grad(k).copy() for k in vals}

        g1, g2, g12 = grads(1.0, 0.0), grads(0.0, 1.0), grads(0.7, -1.9)
        for k in vals:
            np.testing.assert_allclose(g12[k], 0.7 * g1[k] - 1.9 * g2[k], atol=1e-12)
