"""Executable invariant suites behind ``affnet verify``.

Each suite returns a list of :class:`Check` results; a check records the
largest observed error (or witness value) and the bound it was held to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import spectral
from .autodiff import ParamStore, Tape, gradcheck
from .errors import ConfigError, SizeError
from .mixers import (AffMixerParams, MixerKind, aff_forward, aff_param_count, circular_dwconv_oracle,
                     commutativity_check, effective_kernel, split_relu, variant_forward)

SUITES = ("fft", "gradcheck", "equivalence", "properties")
EQUIV_SHAPES = [(1, 2, 4, 4), (1, 4, 8, 8), (2, 8, 16, 16)]

TOL = {
    "f64": dict(fft=1e-10, inversion=1e-12, linearity=1e-12, parseval=1e-12, equivalence=1e-10,
                commute=1e-10, op_grad=1e-6, block_grad=1e-4, adjoint=1e-10, network=1e-8),
    "f32": dict(fft=1e-5, inversion=1e-5, linearity=1e-5, parseval=1e-5, equivalence=1e-4,
                commute=1e-5, op_grad=1e-4, block_grad=1e-4, adjoint=1e-5, network=1e-4),
}


@dataclass
class Check:
    suite: str
    name: str
    value: float
    bound: float
    # "max" checks need value <= bound, "min" checks need value >= bound
    kind: str = "max"

    @property
    def passed(self) -> bool:
        if self.kind == "max":
            return bool(self.value <= self.bound)
        return bool(self.value >= self.bound)

    def line(self) -> str:
        op = "<=" if self.kind == "max" else ">="
        return (f"{'PASS' if self.passed else 'FAIL'} [{self.suite}] {self.name}: "
                f"{self.value:.3e} {op} {self.bound:.0e}")


def rel_err(a, b) -> float:
    """Normwise relative error ``max|a - b| / max|b|``."""
    a = np.asarray(a)
    b = np.asarray(b)
    scale = max(float(np.abs(b).max(initial=0.0)), np.finfo(np.float64).tiny)
    return float(np.abs(a - b).max(initial=0.0) / scale)


def _dtypes(precision):
    if precision not in TOL:
        raise ConfigError(f"precision must be f32 or f64, got {precision!r}")
    return (np.float64, np.complex128) if precision == "f64" else (np.float32, np.complex64)


def _crandn(rng, shape, cdt):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)).astype(cdt)


# --- fft ------------------------------------------------------------------------


def fft_suite(precision="f64") -> list[Check]:
    rdt, cdt = _dtypes(precision)
    tol = TOL[precision]
    rng = np.random.default_rng(0)
    out = []
    sizes = [2, 4, 8, 16, 32]
    worst = {spectral.FORWARD: 0.0, spectral.INVERSE: 0.0}
    for h in sizes:
        for w in sizes:
            x = _crandn(rng, (2, h, w), cdt)
            for direction in worst:
                fast = spectral.fft2(x, spectral.get_plan(h, w, direction, cdt))
                worst[direction] = max(worst[direction], rel_err(fast, spectral.dft2_naive(x, direction)))
    out += [Check("fft", f"fft2 == dft2_naive ({d}, sizes 2..32)", e, tol["fft"]) for d, e in worst.items()]

    inv = 0.0
    for n in [2, 4, 8, 16, 32, 64, 128]:
        x = _crandn(rng, (n, n), cdt)
        inv = max(inv, rel_err(spectral.ifft2(spectral.fft2(x)), x))
    out.append(Check("fft", "ifft2(fft2(x)) == x (sizes 2..128)", inv, tol["inversion"]))

    x, y = _crandn(rng, (16, 16), cdt), _crandn(rng, (16, 16), cdt)
    a, b = 0.7 - 0.2j, -1.3 + 0.5j
    out.append(Check("fft", "linearity", rel_err(spectral.fft2(a * x + b * y),
                                                 a * spectral.fft2(x) + b * spectral.fft2(y)), tol["linearity"]))

    x = _crandn(rng, (8, 8), cdt)
    lhs = float(np.sum(np.abs(x.astype(np.complex128)) ** 2))
    rhs = float(np.sum(np.abs(spectral.fft2(x).astype(np.complex128)) ** 2)) / 64
    out.append(Check("fft", "Parseval (forward unnormalized)", abs(lhs - rhs) / lhs, tol["parseval"]))

    x = _crandn(rng, (8, 8), cdt)
    phase = np.exp(-2j * np.pi * np.arange(8) / 8)[:, None]
    out.append(Check("fft", "shift theorem (1 row)", rel_err(spectral.fft2(np.roll(x, 1, axis=0)),
                                                             spectral.fft2(x) * phase), tol["fft"]))

    xr = rng.standard_normal((8, 8)).astype(rdt)
    spec = spectral.fft2_real(xr)
    mirrored = np.conj(np.roll(spec[::-1, ::-1], 1, axis=(0, 1)))
    out.append(Check("fft", "real-input conjugate symmetry", rel_err(spec, mirrored), tol["fft"]))

    delta = np.zeros((4, 4), complex)
    delta[0, 0] = 1
    out.append(Check("fft", "impulse -> all ones", rel_err(spectral.dft2_naive(delta), np.ones((4, 4))), 1e-15))
    return out


# --- gradcheck ------------------------------------------------------------------


def _const(tape, arr):
    dt = tape.store.dtype
    arr = np.asarray(arr)
    return tape.constant(arr.astype(np.result_type(dt, np.complex64) if np.iscomplexobj(arr) else dt))


def project(tape, v: ad.Var, seed: int = 99) -> ad.Var:
    """Scalar ``<v, R>`` with a fixed random ``R`` (real and imaginary planes for complex ``v``)."""
    rng = np.random.default_rng(seed)
    parts = [ad.real_part_diff(v), ad.imag_part_diff(v)] if np.iscomplexobj(v.value) else [v]
    total = None
    for p in parts:
        term = ad.sum_all(ad.mul(p, _const(tape, rng.standard_normal(p.shape))))
        total = term if total is None else ad.add(total, term)
    return total


def _away_from(rng, shape, kinks, margin=0.05):
    x = rng.uniform(-2.0, 8.0, shape)
    for k in kinks:
        near = np.abs(x - k) < margin
        x[near] += 2 * margin
    return x


def _op_cases(seed):
    """(name, store, fragment) triples covering every differentiable op."""
    rng = np.random.default_rng(seed)
    b = 1 + seed % 2
    c = 2 * (1 + seed % 3)
    hw = [4, 8, 4][seed % 3]
    shape = (b, c, hw, hw)

    def store(**vals):
        s = ParamStore(np.float64)
        for k, v in vals.items():
            s.add(k, v)
        return s

    def cplx(t):
        return ad.make_complex_diff(t.param("re"), t.param("im"))

    x = rng.standard_normal(shape)
    g = 2
    per = c // g if c % g == 0 else c
    groups = c // per
    labels = rng.integers(0, 3, size=b)
    cases = [
        ("add", store(x=x, y=rng.standard_normal(shape)), lambda t: project(t, ad.add(t.param("x"), t.param("y")))),
        ("sub", store(x=x, y=rng.standard_normal(shape)), lambda t: project(t, ad.sub(t.param("x"), t.param("y")))),
        ("mul", store(x=x, y=rng.standard_normal(shape)), lambda t: project(t, ad.mul(t.param("x"), t.param("y")))),
        ("scale", store(x=x), lambda t: project(t, ad.scale(t.param("x"), -1.7))),
        ("mean_all", store(x=x), lambda t: ad.mean_all(ad.mul(t.param("x"), t.param("x")))),
        ("relu", store(x=_away_from(rng, shape, [0.0])), lambda t: project(t, ad.relu(t.param("x")))),
        ("relu6", store(x=_away_from(rng, shape, [0.0, 6.0])), lambda t: project(t, ad.relu6(t.param("x")))),
        ("add_bias", store(x=x, b=rng.standard_normal(c)), lambda t: project(t, ad.add_bias(t.param("x"), t.param("b")))),
        ("layer_norm", store(x=x, g=rng.uniform(0.5, 1.5, c), b=rng.standard_normal(c)),
         lambda t: project(t, ad.layer_norm(t.param("x"), t.param("g"), t.param("b")))),
        ("group_pointwise_linear",
         store(x=x, w=rng.standard_normal((groups, per, per)), b=rng.standard_normal(c)),
         lambda t: project(t, ad.group_pointwise_linear(t.param("x"), t.param("w"), t.param("b")))),
        ("pointwise_conv", store(x=x, w=rng.standard_normal((3, c)), b=rng.standard_normal(3)),
         lambda t: project(t, ad.pointwise_conv(t.param("x"), t.param("w"), t.param("b")))),
        ("depthwise_conv3x3 s1", store(x=x, w=rng.standard_normal((c, 3, 3))),
         lambda t: project(t, ad.depthwise_conv3x3(t.param("x"), t.param("w"), 1))),
        ("depthwise_conv3x3 s2", store(x=x, w=rng.standard_normal((c, 3, 3))),
         lambda t: project(t, ad.depthwise_conv3x3(t.param("x"), t.param("w"), 2))),
        ("conv3x3 s2", store(x=x, w=rng.standard_normal((3, c, 3, 3))),
         lambda t: project(t, ad.conv3x3(t.param("x"), t.param("w"), 2))),
        ("global_avg_pool", store(x=x), lambda t: project(t, ad.global_avg_pool(t.param("x")))),
        ("linear", store(x=rng.standard_normal((b, c)), w=rng.standard_normal((3, c)), b=rng.standard_normal(3)),
         lambda t: project(t, ad.linear(t.param("x"), t.param("w"), t.param("b")))),
        ("softmax_cross_entropy", store(z=rng.standard_normal((b, 3))),
         lambda t: ad.softmax_cross_entropy(t.param("z"), labels, 0.1)),
        ("fft2_diff", store(x=x), lambda t: project(t, ad.fft2_diff(t.param("x")))),
        ("fft2_diff complex", store(re=x, im=rng.standard_normal(shape)), lambda t: project(t, ad.fft2_diff(cplx(t)))),
        ("ifft2_diff", store(re=x, im=rng.standard_normal(shape)), lambda t: project(t, ad.ifft2_diff(cplx(t)))),
        ("complex_hadamard", store(re=x, im=rng.standard_normal(shape), r2=rng.standard_normal(shape),
                                   i2=rng.standard_normal(shape)),
         lambda t: project(t, ad.complex_hadamard(cplx(t), ad.make_complex_diff(t.param("r2"), t.param("i2"))))),
        ("real_part_diff", store(re=x, im=rng.standard_normal(shape)),
         lambda t: project(t, ad.real_part_diff(ad.mul(cplx(t), cplx(t))))),
        ("imag_part_diff", store(re=x, im=rng.standard_normal(shape)),
         lambda t: project(t, ad.imag_part_diff(ad.mul(cplx(t), cplx(t))))),
        ("concat/slice channels", store(x=x, y=rng.standard_normal(shape)),
         lambda t: project(t, ad.channel_slice(ad.concat_channels(t.param("x"), t.param("y")), 1, c + 1))),
        ("tile_batch", store(x=x[0]), lambda t: project(t, ad.tile_batch(t.param("x"), 3))),
        ("channel_mean", store(re=x, im=rng.standard_normal(shape)), lambda t: project(t, ad.channel_mean(cplx(t)))),
    ]
    return cases


def block_case(seed=0, channels=4, res=4, kind=MixerKind.AFF_FFT, batch=1):
    """Store and fragment for one complete AFF block at 64-bit."""
    from .network import add_block_params, aff_block

    rng = np.random.default_rng(seed)
    st = ParamStore(np.float64)
    add_block_params(st, rng, "blk", channels, 2, kind, 2, res)
    # random LN affine and biases so no gradient is trivially structured
    for name, v in st.items():
        if name.endswith((".b", ".b1", ".b2")):
            st.set(name, rng.standard_normal(v.shape) * 0.1)
        elif name.endswith(".w2"):
            st.set(name, v * 10)
    st.add("x", rng.standard_normal((batch, channels, res, res)))

    def fragment(t):
        params = {k.split(".")[-1]: t.param(k) for k in st.names() if k.startswith("blk.mixer.")}
        return project(t, aff_block(t, "blk", t.param("x"), kind, params))

    return st, fragment


def gradcheck_suite(precision="f64") -> list[Check]:
    tol = TOL[precision]
    analytic = None if precision == "f64" else np.float32
    worst: dict[str, float] = {}
    for seed in range(3):
        for name, st, frag in _op_cases(seed):
            rep = gradcheck(frag, st, eps=1e-6, tol=tol["op_grad"], analytic_dtype=analytic)
            worst[name] = max(worst.get(name, 0.0), rep.max_error)
    out = [Check("gradcheck", f"{name} (3 shapes)", e, tol["op_grad"]) for name, e in worst.items()]
    for kind in (MixerKind.AFF_FFT, MixerKind.AFF_NO_FFT, MixerKind.AFF_SUM, MixerKind.SPATIAL_SHARED_MASK,
                 MixerKind.STATIC_MASK, MixerKind.CONV3X3):
        st, frag = block_case(seed=1, kind=kind)
        rep = gradcheck(frag, st, eps=1e-6, tol=tol["block_grad"], analytic_dtype=analytic)
        out.append(Check("gradcheck", f"AFF block, mixer={kind.value}", rep.max_error, tol["block_grad"]))
    return out


# --- equivalence ----------------------------------------------------------------


def equivalence_cases(n_per_shape=7, seed=0, dtype=np.float64):
    """Seeded ``(x, params)`` pairs over the three reference shapes."""
    cases = []
    for si, shape in enumerate(EQUIV_SHAPES):
        c = shape[1]
        groups = min(8, 2 * c // 2)
        for i in range(n_per_shape):
            rng = np.random.default_rng([seed, si, i])
            x = rng.standard_normal(shape).astype(dtype)
            p = AffMixerParams.init(c, groups, rng, out_scale=1.0, dtype=dtype)
            p.b1[:] = rng.standard_normal(p.b1.shape) * 0.1
            p.b2[:] = rng.standard_normal(p.b2.shape) * 0.1
            cases.append((x, p))
    return cases


def convolution_theorem_error(x, p, dtype=np.float64) -> float:
    fast = aff_forward(x, p)
    k = effective_kernel(x, p).real
    return rel_err(fast.astype(np.float64), circular_dwconv_oracle(x, k, dtype=dtype).astype(np.float64))


def network_equivalence_error(seed=0) -> float:
    """Whole-network forward, FFT mixers vs direct circular convolution (64-bit)."""
    from .network import build_affnet, micro_config, oracle_mixer

    cfg = micro_config(stage_blocks=[1, 1, 1], num_classes=3)
    model = build_affnet(cfg, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed)
    for name, v in model.store.items():
        if ".mixer.w2" in name:
            model.store.set(name, v * 10)
    images = rng.standard_normal((2, 3, 32, 32))
    fast = model.logits(images)
    slow = model.logits(images, mixer_override=oracle_mixer)
    return rel_err(fast, slow)


def equivalence_suite(precision="f64") -> list[Check]:
    rdt, _ = _dtypes(precision)
    tol = TOL[precision]
    cases = equivalence_cases(dtype=rdt)
    worst = max(convolution_theorem_error(x, p, rdt) for x, p in cases)
    out = [Check("equivalence", f"aff_forward == circular conv with real(K) ({len(cases)} cases)",
                 worst, tol["equivalence"])]

    rng = np.random.default_rng(5)
    x = rng.standard_normal((1, 3, 8, 8)).astype(rdt)
    delta = np.zeros_like(x)
    delta[..., 0, 0] = 1
    out.append(Check("equivalence", "delta kernel is identity",
                     rel_err(circular_dwconv_oracle(x, delta, rdt), x), 0.0))
    shift = np.zeros_like(x)
    shift[..., 0, 1] = 1
    out.append(Check("equivalence", "delta at (0,1) shifts one column",
                     rel_err(circular_dwconv_oracle(x, shift, rdt), np.roll(x, 1, axis=-1)), 0.0))
    k = rng.standard_normal(x.shape).astype(rdt)
    via_fft = spectral.ifft2(spectral.fft2_real(k) * spectral.fft2_real(x)).real
    out.append(Check("equivalence", "direct conv == ifft2(fft2(k) fft2(x))",
                     rel_err(circular_dwconv_oracle(x, k, rdt), via_fft), tol["equivalence"]))

    x6 = rng.standard_normal((1, 3, 8, 8)).astype(rdt)
    out.append(Check("equivalence", "all-ones static mask is identity",
                     rel_err(variant_forward(x6, MixerKind.STATIC_MASK,
                                             {"mask_re": np.ones((3, 8, 8), rdt),
                                              "mask_im": np.zeros((3, 8, 8), rdt)}), x6),
                     tol["inversion"] * 10))
    if precision == "f64":
        out.append(Check("equivalence", "whole network FFT mixers == direct conv mixers",
                         network_equivalence_error(), tol["network"]))
    return out


# --- properties -----------------------------------------------------------------


def adjoint_cases(seed=0):
    """(name, input, forward) for linear ops; forward maps a complex or real
    input array to an output array through the tape."""
    rng = np.random.default_rng(seed)
    shape = (2, 4, 8, 8)
    w_group = rng.standard_normal((2, 2, 2))
    w_pw = rng.standard_normal((3, 4))
    w_dw = rng.standard_normal((4, 3, 3))
    w_full = rng.standard_normal((3, 4, 3, 3))
    real = rng.standard_normal(shape)
    cplx = real + 1j * rng.standard_normal(shape)
    return [
        ("fft2_diff", cplx, lambda t, x: ad.fft2_diff(x)),
        ("ifft2_diff", cplx, lambda t, x: ad.ifft2_diff(x)),
        ("group_pointwise_linear", real, lambda t, x: ad.group_pointwise_linear(x, t.constant(w_group))),
        ("pointwise_conv", real, lambda t, x: ad.pointwise_conv(x, t.constant(w_pw))),
        ("depthwise_conv3x3 s2", real, lambda t, x: ad.depthwise_conv3x3(x, t.constant(w_dw), 2)),
        ("conv3x3", real, lambda t, x: ad.conv3x3(x, t.constant(w_full), 1)),
        ("channel_mean", cplx, lambda t, x: ad.channel_mean(x)),
        ("real_part_diff", cplx, lambda t, x: ad.real_part_diff(x)),
        ("global_avg_pool", real, lambda t, x: ad.global_avg_pool(x)),
    ]


def _inner(a, b) -> float:
    """Real inner product, treating complex arrays as pairs of real planes."""
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.sum(a.real * b.real) + np.sum(a.imag * b.imag))


def adjoint_error(x, forward, seed=1) -> float:
    """``|<L x, y> - <x, L* y>|`` relative to the larger side, with ``L*``
    taken from the backward pass."""
    tape = Tape(ParamStore(np.float64))
    xv = tape.watch(x)
    out = forward(tape, xv)
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(out.shape)
    if np.iscomplexobj(out.value):
        y = y + 1j * rng.standard_normal(out.shape)
    lhs = _inner(out.value, y)
    parts = [ad.real_part_diff(out), ad.imag_part_diff(out)] if np.iscomplexobj(out.value) else [out]
    loss = ad.sum_all(ad.mul(parts[0], tape.constant(y.real)))
    if len(parts) == 2:
        loss = ad.add(loss, ad.sum_all(ad.mul(parts[1], tape.constant(y.imag))))
    grad = tape.backward(loss)[xv.index]
    rhs = _inner(x, grad)
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)


def property_witnesses(seed=0, dtype=np.float64) -> dict[str, float]:
    """Numbers behind the operator-property matrix for the AFF mixer."""
    rng = np.random.default_rng(seed)
    p = AffMixerParams.init(4, 8, rng, out_scale=1.0, dtype=dtype)
    x1 = rng.standard_normal((1, 4, 8, 8)).astype(dtype)
    x2 = rng.standard_normal((1, 4, 8, 8)).astype(dtype)
    k1 = effective_kernel(x1, p).real
    k2 = effective_kernel(x2, p).real
    shared = effective_kernel(x1, p, MixerKind.SPATIAL_SHARED_MASK).real
    chan_gap = max(np.abs(k1[0, i] - k1[0, j]).max() for i in range(4) for j in range(i + 1, 4))
    min_chan_gap = min(np.abs(k1[0, i] - k1[0, j]).max() for i in range(4) for j in range(i + 1, 4))
    shared_gap = max(np.abs(shared[0, i] - shared[0, 0]).max() for i in range(4))
    small = aff_forward(x1, p)
    big = aff_forward(rng.standard_normal((1, 4, 16, 16)).astype(dtype), p)
    static = {"mask_re": np.ones((4, 8, 8), dtype), "mask_im": np.zeros((4, 8, 8), dtype)}
    static_resize_rejected = 0.0
    try:
        variant_forward(rng.standard_normal((1, 4, 16, 16)).astype(dtype), MixerKind.STATIC_MASK, static)
    except SizeError:
        static_resize_rejected = 1.0
    return {
        "adaptive_gap": float(np.abs(k1 - k2).max()),
        "channel_gap": float(chan_gap),
        "min_channel_gap": float(min_chan_gap),
        "shared_channel_gap": float(shared_gap),
        "variable_size_ok": float(small.shape == (1, 4, 8, 8) and big.shape == (1, 4, 16, 16)),
        "static_resize_rejected": static_resize_rejected,
    }


def properties_suite(precision="f64") -> list[Check]:
    rdt, _ = _dtypes(precision)
    tol = TOL[precision]
    out = []
    rng = np.random.default_rng(11)
    comm = 0.0
    for i in range(10):
        x = rng.standard_normal((1 + i % 2, 4, 8, 8))
        comm = max(comm, commutativity_check(x, rng.standard_normal((4 + i % 3, 4))))
    out.append(Check("properties", "channel-linear commutes with fft2 (10 cases)", comm, tol["commute"]))
    out.append(Check("properties", "identity weights commute exactly",
                     commutativity_check(rng.standard_normal((1, 4, 8, 8)), np.eye(4)), 0.0))
    out.append(Check("properties", "ReLU does not commute with fft2 (control)",
                     commutativity_check(rng.standard_normal((1, 4, 8, 8)), fn=split_relu), 1e-3, "min"))

    w = property_witnesses(dtype=rdt)
    out.append(Check("properties", "semantic-adaptive: kernels differ across inputs", w["adaptive_gap"], 1e-3, "min"))
    out.append(Check("properties", "variable-size: one params value serves 8x8 and 16x16",
                     w["variable_size_ok"], 1.0, "min"))
    out.append(Check("properties", "static mask rejects resized input", w["static_resize_rejected"], 1.0, "min"))
    out.append(Check("properties", "channel-wise: AFF kernels differ across channels",
                     w["min_channel_gap"], 1e-3, "min"))
    out.append(Check("properties", "spatial-shared mask: kernels identical across channels",
                     w["shared_channel_gap"], 0.0))

    stub = AffMixerParams(np.zeros((2, 4, 4)), np.zeros((2, 4, 4)), np.zeros(8),
                          np.concatenate([np.ones(4), np.zeros(4)]))
    x = rng.standard_normal((1, 4, 8, 8))
    out.append(Check("properties", "mask == 1 gives the identity mixer",
                     rel_err(aff_forward(x, stub), x), TOL["f64"]["inversion"]))
    kd = effective_kernel(x, stub)
    delta = np.zeros_like(kd)
    delta[..., 0, 0] = 1
    out.append(Check("properties", "mask == 1 gives a delta kernel", rel_err(kd, delta), TOL["f64"]["inversion"]))

    worst = 0.0
    for name, xin, fwd in adjoint_cases():
        worst = max(worst, adjoint_error(xin, fwd))
    out.append(Check("properties", "adjoint dot-product tests (linear ops)", worst, TOL["f64"]["adjoint"]))

    acc = 0
    for c, g in [(8, 2), (32, 8), (64, 8), (96, 4)]:
        acc = max(acc, abs(AffMixerParams.init(c, g, rng).num_params() - aff_param_count(c, g)))
    out.append(Check("properties", "mask network size matches closed form", acc, 0))
    out.append(Check("properties", "parameter delta AFF - identity equals closed form",
                     abs(_param_delta_mismatch()), 0))
    return out


def _param_delta_mismatch() -> int:
    from .network import build_affnet, count_params, micro_config

    cfg = micro_config()
    aff = count_params(build_affnet(cfg))
    ident = count_params(build_affnet(cfg.replace(mixer=MixerKind.IDENTITY)))
    expected = sum(n * aff_param_count(c, cfg.groups) for c, n in zip(cfg.stage_channels, cfg.stage_blocks))
    return (aff - ident) - expected


RUNNERS = {"fft": fft_suite, "gradcheck": gradcheck_suite, "equivalence": equivalence_suite,
           "properties": properties_suite}


def run_suites(names, precision="f64") -> list[Check]:
    if names == "all" or names == ["all"]:
        names = list(SUITES)
    if isinstance(names, str):
        names = [names]
    checks = []
    for n in names:
        if n not in RUNNERS:
            raise ConfigError(f"unknown suite {n!r}")
        checks += RUNNERS[n](precision)
    return checks
