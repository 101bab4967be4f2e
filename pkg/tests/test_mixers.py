import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from affnet.errors import ConfigError, PlanError, ShapeError, SizeError
from affnet.mixers import (AffMixerParams, MixerKind, aff_forward, aff_param_count, circular_dwconv_oracle,
                           commutativity_check, effective_kernel, frequency_mask, init_mixer, split_relu,
                           variant_forward)
from affnet.verify import convolution_theorem_error, equivalence_cases


def numpy_mask(spec, p):
    """Mask network written directly with numpy (independent of the tape)."""
    c = spec.shape[1]
    stacked = np.concatenate([spec.real, spec.imag], axis=1)

    def glin(x, w, b):
        g, per, _ = w.shape
        xg = x.reshape(x.shape[0], g, per, *x.shape[2:])
        out = np.einsum("goi,bgihw->bgohw", w, xg).reshape(x.shape)
        return out + b[None, :, None, None]

    hidden = np.maximum(glin(stacked, p.w1, p.b1), 0)
    out = glin(hidden, p.w2, p.b2)
    return out[:, :c] + 1j * out[:, c:]


def identity_params(c, groups=2):
    per = 2 * c // groups
    b2 = np.concatenate([np.ones(c), np.zeros(c)])
    return AffMixerParams(np.zeros((groups, per, per)), np.zeros((groups, per, per)), np.zeros(2 * c), b2)


def random_params(rng, c, groups=2, scale=0.1):
    p = AffMixerParams.init(c, groups, rng, out_scale=1.0)
    p.b1[:] = rng.standard_normal(2 * c) * scale
    p.b2[:] = rng.standard_normal(2 * c) * scale
    return p


class TestParams:
    def test_closed_form_examples(self):
        # one grouped layer on 2C=8 with groups=2: 8*8/2 weights + 8 biases
        assert 8 * 8 // 2 + 8 == 40
        assert aff_param_count(4, 2) == 2 * 40
        assert aff_param_count(64, 8) == 4352
        assert aff_param_count(64, 8, bias=False) == 4096

    @pytest.mark.parametrize("c,g", [(2, 2), (4, 8), (32, 8), (96, 4), (64, 16)])
    def test_enumeration_matches_closed_form(self, rng, c, g):
        assert AffMixerParams.init(c, g, rng).num_params() == aff_param_count(c, g)

    def test_groups_must_divide(self, rng):
        with pytest.raises(ConfigError):
            AffMixerParams.init(3, 4, rng)

    def test_initial_mask_is_small(self, rng):
        p = AffMixerParams.init(8, 8, rng)
        x = rng.standard_normal((1, 8, 8, 8))
        assert np.abs(aff_forward(x, p)).max() < 0.5 * np.abs(x).max()


class TestAffForward:
    def test_unit_mask_is_identity(self, rng):
        x = rng.standard_normal((2, 4, 8, 8))
        np.testing.assert_allclose(aff_forward(x, identity_params(4)), x, atol=1e-14)

    def test_matches_numpy_reference(self, rng):
        x = rng.standard_normal((2, 4, 8, 16))
        p = random_params(rng, 4)
        spec = np.fft.fft2(x)
        expected = np.fft.ifft2(numpy_mask(spec, p) * spec).real
        np.testing.assert_allclose(aff_forward(x, p), expected, atol=1e-12)

    def test_mask_matches_numpy_reference(self, rng):
        x = rng.standard_normal((1, 4, 4, 4))
        p = random_params(rng, 4)
        np.testing.assert_allclose(frequency_mask(x, p), numpy_mask(np.fft.fft2(x), p), atol=1e-12)

    def test_variable_size(self, rng):
        p = random_params(rng, 4)
        assert aff_forward(rng.standard_normal((1, 4, 8, 8)), p).shape == (1, 4, 8, 8)
        assert aff_forward(rng.standard_normal((1, 4, 16, 16)), p).shape == (1, 4, 16, 16)

    def test_non_pow2(self, rng):
        with pytest.raises(PlanError):
            aff_forward(rng.standard_normal((1, 4, 6, 8)), random_params(rng, 4))

    def test_channel_mismatch(self, rng):
        with pytest.raises(ConfigError):
            aff_forward(rng.standard_normal((1, 2, 8, 8)), random_params(rng, 4))

    def test_rank_checked(self, rng):
        with pytest.raises(ShapeError):
            aff_forward(rng.standard_normal((4, 8, 8)), random_params(rng, 4))


class TestEffectiveKernel:
    def test_unit_mask_gives_delta(self, rng):
        k = effective_kernel(rng.standard_normal((1, 3, 4, 4)), identity_params(3, groups=3))
        expected = np.zeros((1, 3, 4, 4))
        expected[..., 0, 0] = 1
        np.testing.assert_allclose(k, expected, atol=1e-15)

    def test_seeded_equivalence_example(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((1, 4, 8, 8))
        p = random_params(rng, 4)
        assert convolution_theorem_error(x, p) <= 1e-10

    @pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-10), (np.float32, 1e-4)])
    def test_reference_shapes(self, dtype, tol):
        cases = equivalence_cases(dtype=dtype)
        assert len(cases) >= 20
        assert {x.shape for x, _ in cases} == {(1, 2, 4, 4), (1, 4, 8, 8), (2, 8, 16, 16)}
        assert max(convolution_theorem_error(x, p, dtype) for x, p in cases) <= tol

    @given(st.sampled_from([1, 2, 4]), st.sampled_from([2, 4, 8]), st.sampled_from([2, 4, 8]),
           st.integers(0, 2**31 - 1))
    def test_equivalence_property(self, c, h, w, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((1, c, h, w))
        p = random_params(rng, c, groups=2)
        assert convolution_theorem_error(x, p) <= 1e-10

    def test_adaptive(self, rng):
        p = random_params(rng, 4)
        k1 = effective_kernel(rng.standard_normal((1, 4, 8, 8)), p)
        k2 = effective_kernel(rng.standard_normal((1, 4, 8, 8)), p)
        assert np.abs(k1 - k2).max() > 1e-3

    def test_not_permutation_equivariant(self, rng):
        p = random_params(rng, 4)
        x = rng.standard_normal((1, 4, 8, 8))
        perm = [1, 0, 3, 2]
        k = effective_kernel(x, p)
        k_perm = effective_kernel(x[:, perm], p)
        assert np.abs(k_perm - k[:, perm]).max() > 1e-3

    def test_channels_differ(self, rng):
        k = effective_kernel(rng.standard_normal((1, 4, 8, 8)), random_params(rng, 4))
        assert np.abs(k[0, 0] - k[0, 1]).max() > 1e-3


class TestOracle:
    def test_delta_identity(self, rng):
        x = rng.standard_normal((1, 2, 4, 8))
        k = np.zeros_like(x)
        k[..., 0, 0] = 1
        np.testing.assert_array_equal(circular_dwconv_oracle(x, k), x)

    def test_delta_shift(self, rng):
        x = rng.standard_normal((1, 2, 4, 8))
        k = np.zeros_like(x)
        k[..., 0, 1] = 1
        np.testing.assert_array_equal(circular_dwconv_oracle(x, k), np.roll(x, 1, axis=-1))

    def test_matches_loop_definition(self, rng):
        x = rng.standard_normal((1, 1, 3, 4))
        k = rng.standard_normal((1, 1, 3, 4))
        out = np.zeros((3, 4))
        for h in range(3):
            for w in range(4):
                out[h, w] = sum(k[0, 0, i, j] * x[0, 0, (h - i) % 3, (w - j) % 4]
                                for i in range(3) for j in range(4))
        np.testing.assert_allclose(circular_dwconv_oracle(x, k)[0, 0], out, atol=1e-13)

    def test_convolution_theorem(self, rng):
        x = rng.standard_normal((2, 3, 8, 8))
        k = rng.standard_normal((2, 3, 8, 8))
        via_fft = np.fft.ifft2(np.fft.fft2(k) * np.fft.fft2(x)).real
        np.testing.assert_allclose(circular_dwconv_oracle(x, k), via_fft, atol=1e-12)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            circular_dwconv_oracle(np.ones((1, 1, 4, 4)), np.ones((1, 1, 4, 2)))


class TestVariants:
    def test_identity(self, rng):
        x = rng.standard_normal((1, 2, 4, 4))
        np.testing.assert_array_equal(variant_forward(x, MixerKind.IDENTITY), x)

    def test_static_ones_is_identity(self, rng):
        x = rng.standard_normal((2, 3, 8, 8))
        params = {"mask_re": np.ones((3, 8, 8)), "mask_im": np.zeros((3, 8, 8))}
        np.testing.assert_allclose(variant_forward(x, "static_mask", params), x, atol=1e-14)

    def test_static_rejects_resize(self, rng):
        params = init_mixer(MixerKind.STATIC_MASK, 3, 1, rng, resolution=8, dtype=np.float64)
        with pytest.raises(SizeError):
            variant_forward(rng.standard_normal((1, 3, 16, 16)), MixerKind.STATIC_MASK, params)

    def test_static_is_instance_independent(self, rng):
        params = {"mask_re": rng.standard_normal((2, 4, 4)), "mask_im": rng.standard_normal((2, 4, 4))}
        x = rng.standard_normal((2, 2, 4, 4))
        both = variant_forward(x, MixerKind.STATIC_MASK, params)
        np.testing.assert_allclose(both[1], variant_forward(x[1:], MixerKind.STATIC_MASK, params)[0])

    def test_spatial_shared_kernel_is_channel_identical(self, rng):
        k = effective_kernel(rng.standard_normal((1, 4, 8, 8)), random_params(rng, 4),
                             MixerKind.SPATIAL_SHARED_MASK)
        for c in range(1, 4):
            np.testing.assert_array_equal(k[0, c], k[0, 0])

    def test_spatial_shared_matches_numpy(self, rng):
        x = rng.standard_normal((1, 4, 8, 8))
        p = random_params(rng, 4)
        spec = np.fft.fft2(x)
        mask = numpy_mask(spec, p).mean(axis=1, keepdims=True)
        np.testing.assert_allclose(variant_forward(x, MixerKind.SPATIAL_SHARED_MASK, p),
                                   np.fft.ifft2(mask * spec).real, atol=1e-12)

    def test_no_fft_matches_numpy(self, rng):
        x = rng.standard_normal((1, 4, 4, 4))
        p = random_params(rng, 4)
        expected = (numpy_mask(x.astype(complex), p) * x).real
        np.testing.assert_allclose(variant_forward(x, MixerKind.AFF_NO_FFT, p), expected, atol=1e-12)

    def test_sum_matches_numpy(self, rng):
        x = rng.standard_normal((1, 4, 4, 8))
        p = random_params(rng, 4)
        spec = np.fft.fft2(x)
        np.testing.assert_allclose(variant_forward(x, MixerKind.AFF_SUM, p),
                                   np.fft.ifft2(numpy_mask(spec, p) + spec).real, atol=1e-12)

    def test_conv3x3_is_local(self, rng):
        params = init_mixer(MixerKind.CONV3X3, 2, 1, rng, dtype=np.float64)
        x = np.zeros((1, 2, 8, 8))
        x[..., 4, 4] = 1
        out = variant_forward(x, MixerKind.CONV3X3, params)
        assert np.count_nonzero(np.abs(out) > 0) <= 2 * 9

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            MixerKind.parse("attention")


class TestCommutativity:
    def test_identity_weights(self, rng):
        assert commutativity_check(rng.standard_normal((1, 4, 8, 8)), np.eye(4)) == 0.0

    def test_random_weights(self, rng):
        assert commutativity_check(rng.standard_normal((1, 4, 8, 8)), rng.standard_normal((4, 4))) <= 1e-10

    def test_relu_control(self, rng):
        assert commutativity_check(rng.standard_normal((1, 4, 8, 8)), fn=split_relu) > 1e-3

    @given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31 - 1))
    def test_property(self, cin, cout, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((1, cin, 4, 8))
        assert commutativity_check(x, rng.standard_normal((cout, cin))) <= 1e-10
