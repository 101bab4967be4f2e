"""Token mixers: adaptive frequency filtering and its ablation variants.

The adaptive frequency filter takes ``x[B, C, H, W]``, moves it to the
frequency domain, predicts a complex mask from the spectrum with a small
grouped network and multiplies the two before transforming back.  Because a
product of spectra is a circular convolution in space, the same output is
obtained by convolving ``x`` with the per-instance, per-channel kernel
``ifft2(mask)``; :func:`effective_kernel` and :func:`circular_dwconv_oracle`
expose that identity directly.

Mask network layout: the real and imaginary planes of the spectrum are
stacked as ``2C`` real channels ``[re_0..re_{C-1}, im_0..im_{C-1}]``, then
go through grouped linear -> ReLU -> grouped linear, and the ``2C`` outputs
are split back into a ``C``-channel complex mask.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import spectral
from ._backend import kernels
from .errors import ConfigError, PlanError, ShapeError, SizeError


class MixerKind(str, enum.Enum):
    AFF_FFT = "aff_fft"
    AFF_NO_FFT = "aff_no_fft"
    AFF_SUM = "aff_sum"
    STATIC_MASK = "static_mask"
    SPATIAL_SHARED_MASK = "spatial_shared_mask"
    CONV3X3 = "conv3x3"
    IDENTITY = "identity"

    @classmethod
    def parse(cls, value) -> "MixerKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ConfigError(f"unknown mixer {value!r}; choose from {choices}") from None

    @property
    def uses_mask_network(self) -> bool:
        return self in _MASK_KINDS


_MASK_KINDS = {MixerKind.AFF_FFT, MixerKind.AFF_NO_FFT, MixerKind.AFF_SUM,
               MixerKind.SPATIAL_SHARED_MASK}


def aff_param_count(channels: int, groups: int, bias: bool = True) -> int:
    """Closed form for the mask network size: ``2 * (2C)^2 / g (+ 2 * 2C)``."""
    width = 2 * channels
    return 2 * width * width // groups + (2 * width if bias else 0)


@dataclass
class AffMixerParams:
    """Weights of the two grouped linear layers of the mask network.

    ``w1`` and ``w2`` have shape ``[groups, 2C/groups, 2C/groups]``.
    """

    w1: np.ndarray
    w2: np.ndarray
    b1: np.ndarray | None = None
    b2: np.ndarray | None = None

    def __post_init__(self):
        if self.w1.ndim != 3 or self.w1.shape != self.w2.shape or self.w1.shape[1] != self.w1.shape[2]:
            raise ConfigError(f"bad mask weights {self.w1.shape} / {self.w2.shape}")
        width = self.groups * self.w1.shape[1]
        for b in (self.b1, self.b2):
            if b is not None and b.shape != (width,):
                raise ConfigError(f"bias must have shape ({width},), got {b.shape}")

    @property
    def groups(self) -> int:
        return self.w1.shape[0]

    @property
    def channels(self) -> int:
        return self.groups * self.w1.shape[1] // 2

    @property
    def bias(self) -> bool:
        return self.b1 is not None

    @classmethod
    def init(cls, channels, groups=8, rng=None, bias=True, out_scale=0.1, dtype=np.float64):
        """Uniform(+-1/sqrt(fan_in)) weights, zero biases, second layer scaled down.

        With the default ``out_scale`` the initial mask is close to zero, so a
        freshly built block is dominated by its skip connection.
        """
        width = 2 * channels
        if width % groups:
            raise ConfigError(f"2C={width} is not divisible by groups={groups}")
        rng = np.random.default_rng() if rng is None else rng
        per = width // groups
        bound = 1.0 / np.sqrt(per)
        w1 = rng.uniform(-bound, bound, (groups, per, per))
        w2 = rng.uniform(-bound, bound, (groups, per, per)) * out_scale
        b1 = np.zeros(width) if bias else None
        b2 = np.zeros(width) if bias else None
        cast = (lambda a: None if a is None else a.astype(dtype))
        return cls(cast(w1), cast(w2), cast(b1), cast(b2))

    def as_dict(self) -> dict[str, np.ndarray]:
        out = {"w1": self.w1, "w2": self.w2}
        if self.bias:
            out.update(b1=self.b1, b2=self.b2)
        return out

    def num_params(self) -> int:
        return sum(v.size for v in self.as_dict().values())


# --- differentiable building blocks -----------------------------------------


def mask_network(spec: ad.Var, p) -> ad.Var:
    """Complex mask ``M(spec)`` from a complex ``spec[B, C, H, W]``.

    ``p`` maps ``w1, w2`` (and optionally ``b1, b2``) to tape variables.
    """
    c = spec.shape[1]
    width = p["w1"].shape[0] * p["w1"].shape[1]
    if width != 2 * c:
        raise ConfigError(f"mask network expects {width // 2} channels, got {c}")
    stacked = ad.concat_channels(ad.real_part_diff(spec), ad.imag_part_diff(spec))
    hidden = ad.relu(ad.group_pointwise_linear(stacked, p["w1"], p.get("b1")))
    out = ad.group_pointwise_linear(hidden, p["w2"], p.get("b2"))
    return ad.make_complex_diff(ad.channel_slice(out, 0, c), ad.channel_slice(out, c, 2 * c))


def apply_mixer(kind: MixerKind, x: ad.Var, p) -> ad.Var:
    """Run one token mixer of the given kind on ``x[B, C, H, W]``."""
    kind = MixerKind(kind)
    if kind is MixerKind.IDENTITY:
        return x
    if kind is MixerKind.CONV3X3:
        return ad.add_bias(ad.depthwise_conv3x3(x, p["w"]), p["b"])
    if kind is MixerKind.AFF_NO_FFT:
        # same mask network and product, applied to x itself (zero imaginary part)
        xc = ad.make_complex_diff(x, x.tape.constant(np.zeros_like(x.value)))
        return ad.real_part_diff(ad.complex_hadamard(mask_network(xc, p), xc))
    _check_pow2(x.shape)
    spec = ad.fft2_diff(x)
    if kind is MixerKind.STATIC_MASK:
        want = p["mask_re"].shape
        if x.shape[1:] != want:
            raise SizeError(f"static mask is trained for {want}, input is {x.shape[1:]}")
        mask = ad.tile_batch(ad.make_complex_diff(p["mask_re"], p["mask_im"]), x.shape[0])
        return ad.real_part_diff(ad.ifft2_diff(ad.complex_hadamard(mask, spec)))
    mask = mask_network(spec, p)
    if kind is MixerKind.AFF_SUM:
        return ad.real_part_diff(ad.ifft2_diff(ad.add(mask, spec)))
    if kind is MixerKind.SPATIAL_SHARED_MASK:
        mask = ad.channel_mean(mask)
    return ad.real_part_diff(ad.ifft2_diff(ad.complex_hadamard(mask, spec)))


def init_mixer(kind: MixerKind, channels: int, groups: int, rng, resolution=None,
               dtype=np.float32) -> dict[str, np.ndarray]:
    """Fresh parameters for one mixer, keyed by the names :func:`apply_mixer` reads."""
    kind = MixerKind(kind)
    if kind.uses_mask_network:
        return AffMixerParams.init(channels, groups, rng, dtype=dtype).as_dict()
    if kind is MixerKind.CONV3X3:
        std = np.sqrt(2.0 / 9)
        return {"w": (rng.standard_normal((channels, 3, 3)) * std).astype(dtype),
                "b": np.zeros(channels, dtype)}
    if kind is MixerKind.STATIC_MASK:
        if resolution is None:
            raise ConfigError("static mask needs the stage resolution")
        h, w = (resolution, resolution) if np.isscalar(resolution) else resolution
        return {"mask_re": np.ones((channels, h, w), dtype),
                "mask_im": np.zeros((channels, h, w), dtype)}
    return {}


def _check_pow2(shape):
    h, w = shape[-2:]
    if not (spectral.is_pow2(h) and spectral.is_pow2(w)):
        raise PlanError(f"spatial size {h}x{w} is not a power of two")


# --- plain-array API --------------------------------------------------------


def _consts(tape, params: dict):
    return {k: tape.constant(v) for k, v in params.items() if v is not None}


def _as_dict(params):
    if isinstance(params, AffMixerParams):
        return params.as_dict()
    return dict(params or {})


def _validate(x, params: AffMixerParams | None):
    if x.ndim != 4:
        raise ShapeError(f"expected [B, C, H, W], got {x.shape}")
    _check_pow2(x.shape)
    if params is not None and 2 * x.shape[1] % params.groups:
        raise ConfigError(f"2C={2 * x.shape[1]} not divisible by groups={params.groups}")
    if params is not None and params.channels != x.shape[1]:
        raise ConfigError(f"params built for C={params.channels}, input has C={x.shape[1]}")


def aff_forward(x: np.ndarray, p: AffMixerParams) -> np.ndarray:
    """``real(ifft2(M(fft2(x)) * fft2(x)))`` for ``x[B, C, H, W]``."""
    x = np.asarray(x)
    _validate(x, p)
    tape = ad.Tape(grad=False)
    return apply_mixer(MixerKind.AFF_FFT, tape.constant(x), _consts(tape, p.as_dict())).value


def frequency_mask(x: np.ndarray, p: AffMixerParams, kind=MixerKind.AFF_FFT) -> np.ndarray:
    x = np.asarray(x)
    _validate(x, p)
    tape = ad.Tape(grad=False)
    mask = mask_network(ad.fft2_diff(tape.constant(x)), _consts(tape, p.as_dict()))
    if MixerKind(kind) is MixerKind.SPATIAL_SHARED_MASK:
        mask = ad.channel_mean(mask)
    return mask.value


def effective_kernel(x: np.ndarray, p: AffMixerParams, kind=MixerKind.AFF_FFT) -> np.ndarray:
    """The instance-adaptive depthwise kernel ``ifft2(M(fft2(x)))``, complex ``[B, C, H, W]``."""
    return spectral.ifft2(frequency_mask(x, p, kind))


def circular_dwconv_oracle(x: np.ndarray, k: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Direct per-channel circular convolution, O((HW)^2) per channel.

    ``out[b,c,h,w] = sum_{i,j} k[b,c,i,j] * x[b,c,(h-i) % H,(w-j) % W]``.
    """
    x = np.asarray(x)
    k = np.asarray(k)
    if x.shape != k.shape:
        raise ShapeError(f"kernel {k.shape} does not match input {x.shape}")
    if np.iscomplexobj(x) or np.iscomplexobj(k):
        raise TypeError("circular_dwconv_oracle works on real tensors")
    h, w = x.shape[-2:]
    xs = np.ascontiguousarray(x, dtype=dtype).reshape(-1, h, w)
    ks = np.ascontiguousarray(k, dtype=dtype).reshape(-1, h, w)
    return kernels.circular_conv(xs, ks).reshape(x.shape)


def variant_forward(x: np.ndarray, kind, params=None) -> np.ndarray:
    """Forward of any mixer variant on plain arrays.

    ``params`` is an :class:`AffMixerParams` for mask-network kinds, or a dict
    (``{"mask_re", "mask_im"}`` for the static mask, ``{"w", "b"}`` for the
    3x3 depthwise mixer).
    """
    kind = MixerKind.parse(kind)
    x = np.asarray(x)
    if x.ndim != 4:
        raise ShapeError(f"expected [B, C, H, W], got {x.shape}")
    if isinstance(params, AffMixerParams) and kind is not MixerKind.AFF_NO_FFT:
        _validate(x, params)
    tape = ad.Tape(grad=False)
    return apply_mixer(kind, tape.constant(x), _consts(tape, _as_dict(params))).value


def _channel_linear(a, w):
    return np.einsum("oc,bchw->bohw", w, a)


def commutativity_check(x: np.ndarray, w: np.ndarray | None = None, fn=None) -> float:
    """Max relative error between ``L(fft2(x))`` and ``fft2(L(x))``.

    ``L`` is the 1x1 channel map ``w[Cout, C]`` unless ``fn`` is given; ``fn``
    must accept both real and complex arrays.
    """
    x = np.asarray(x, dtype=np.float64)
    if fn is None:
        if w is None:
            raise ValueError("need channel weights or a function")
        w = np.asarray(w, dtype=np.float64)
        fn = lambda a: _channel_linear(a, w)  # noqa: E731
    lhs = fn(spectral.fft2_real(x))
    rhs = spectral.fft2(np.asarray(fn(x), dtype=np.complex128))
    scale = max(np.abs(rhs).max(), np.finfo(float).tiny)
    return float(np.abs(lhs - rhs).max() / scale)


def split_relu(a):
    """ReLU on a real array, or separately on the real/imaginary planes of a complex one."""
    if np.iscomplexobj(a):
        return np.maximum(a.real, 0) + 1j * np.maximum(a.imag, 0)
    return np.maximum(a, 0)
