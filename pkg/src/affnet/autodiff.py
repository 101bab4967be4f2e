"""Minimal reverse-mode differentiation over numpy arrays.

A :class:`Tape` records every operation applied to :class:`Var` handles in
append order; :meth:`Tape.backward` walks that list in reverse and pushes
gradients into a :class:`ParamStore`.

Complex values use the real-loss convention: the gradient stored for a
complex node ``z`` is ``dL/dRe(z) + 1j * dL/dIm(z)``.  Under that convention
the backward rule of a linear map is its adjoint, and for ``z = a * b`` the
gradient flowing into ``a`` is ``g * conj(b)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import spectral
from ._backend import kernels
from .errors import DeterminismError, RankError, ShapeError


class ParamStore:
    """Ordered registry of named trainable arrays and their gradients."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._values: dict[str, np.ndarray] = {}
        self._grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value) -> np.ndarray:
        if name in self._values:
            raise KeyError(f"parameter {name!r} already registered")
        arr = np.array(value, dtype=self.dtype, order="C", copy=True)
        self._values[name] = arr
        self._grads[name] = np.zeros_like(arr)
        return arr

    def __contains__(self, name):
        return name in self._values

    def __getitem__(self, name) -> np.ndarray:
        return self._values[name]

    def __iter__(self):
        return iter(self._values)

    def __len__(self):
        return len(self._values)

    def names(self):
        return list(self._values)

    def items(self):
        return self._values.items()

    def grad(self, name) -> np.ndarray:
        return self._grads[name]

    def set(self, name, value):
        value = np.asarray(value)
        if value.shape != self._values[name].shape:
            raise ShapeError(f"{name}: expected {self._values[name].shape}, got {value.shape}")
        self._values[name][...] = value

    def accumulate(self, name, g):
        if g.shape != self._grads[name].shape:
            raise ShapeError(f"{name}: gradient shape {g.shape} != {self._grads[name].shape}")
        self._grads[name] += g

    def zero_grad(self):
        for g in self._grads.values():
            g.fill(0)

    def num_scalars(self) -> int:
        return sum(v.size for v in self._values.values())

    def astype(self, dtype) -> "ParamStore":
        out = ParamStore(dtype)
        for name, v in self._values.items():
            out.add(name, v)
        return out

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self._values.items()}


class Var:
    """Handle to one recorded node; arithmetic operators record on its tape."""

    __slots__ = ("tape", "index", "value")

    def __init__(self, tape, index, value):
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __repr__(self):
        return f"Var(#{self.index}, shape={self.shape}, dtype={self.dtype})"


class Tape:
    """Append-only record of operations; single use per forward pass.

    With ``grad=False`` nothing is retained for backward and ops only compute
    values, which is how the plain-array APIs reuse the differentiable code.
    """

    def __init__(self, store: ParamStore | None = None, grad: bool = True):
        self.store = store
        self.grad_enabled = grad
        self.kinds: list[str] = []
        self._inputs: list[tuple] = []
        self._backward: list = []
        self._needs: list[bool] = []
        self._dtypes: list[np.dtype] = []
        self._params: dict[str, Var] = {}
        self._watched: dict[int, Var] = {}
        self._used = False

    def __len__(self):
        return len(self.kinds)

    def _append(self, kind, inputs, value, backward, needs):
        self.kinds.append(kind)
        self._inputs.append(inputs)
        self._backward.append(backward if needs else None)
        self._needs.append(needs)
        self._dtypes.append(np.asarray(value).dtype)
        return Var(self, len(self.kinds) - 1, value)

    def param(self, name: str) -> Var:
        var = self._params.get(name)
        if var is None:
            var = self._append("param", (), self.store[name], None, self.grad_enabled)
            self._params[name] = var
        return var

    def constant(self, value) -> Var:
        return self._append("const", (), np.asarray(value), None, False)

    def watch(self, value) -> Var:
        """Leaf whose gradient is returned by :meth:`backward` (not stored)."""
        var = self._append("watch", (), np.asarray(value), None, self.grad_enabled)
        self._watched[var.index] = var
        return var

    def record(self, kind: str, inputs, value, backward) -> Var:
        """Append an op node.  ``backward(g)`` returns one gradient (or None) per input."""
        for v in inputs:
            if v.tape is not self:
                raise ValueError(f"{kind}: input recorded on a different tape")
        idx = tuple(v.index for v in inputs)
        needs = self.grad_enabled and any(self._needs[i] for i in idx)
        return self._append(kind, idx, value, backward, needs)

    def backward(self, loss: Var) -> dict[int, np.ndarray]:
        """Accumulate d(loss)/d(param) into the store; return watched-leaf grads."""
        if loss.value.size != 1 or loss.value.ndim != 0:
            raise RankError(f"backward needs a scalar loss, got shape {loss.value.shape}")
        if not self.grad_enabled:
            raise RuntimeError("tape was created with grad=False")
        if self._used:
            raise RuntimeError("tape already consumed by a backward pass")
        self._used = True
        n = len(self.kinds)
        grads: list = [None] * n
        grads[loss.index] = np.ones((), dtype=loss.value.dtype)
        keep = set(self._watched) | {v.index for v in self._params.values()}
        for i in range(n - 1, -1, -1):
            g = grads[i]
            fn = self._backward[i]
            if g is None or fn is None:
                continue
            for j, gj in zip(self._inputs[i], fn(g)):
                if gj is None or not self._needs[j]:
                    continue
                if np.iscomplexobj(gj) and self._dtypes[j].kind != "c":
                    gj = gj.real
                grads[j] = gj if grads[j] is None else grads[j] + gj
            if i not in keep:
                grads[i] = None
        for name, var in self._params.items():
            g = grads[var.index]
            if g is not None:
                self.store.accumulate(name, np.asarray(g, dtype=self.store.dtype))
        return {i: grads[i] for i in self._watched}


# --- op helpers ------------------------------------------------------------


def _rec(kind, inputs, value, backward):
    return inputs[0].tape.record(kind, inputs, value, backward)


def _same_shape(kind, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{kind}: shape mismatch {a.shape} vs {b.shape}")


def add(a: Var, b: Var) -> Var:
    _same_shape("add", a, b)
    return _rec("add", (a, b), a.value + b.value, lambda g: (g, g))


def sub(a: Var, b: Var) -> Var:
    _same_shape("sub", a, b)
    return _rec("sub", (a, b), a.value - b.value, lambda g: (g, -g))


def mul(a: Var, b: Var) -> Var:
    """Real elementwise product; see :func:`complex_hadamard` for complex."""
    _same_shape("mul", a, b)
    av, bv = a.value, b.value
    if np.iscomplexobj(av) or np.iscomplexobj(bv):
        return complex_hadamard(a, b)
    return _rec("mul", (a, b), av * bv, lambda g: (g * bv, g * av))


def scale(a: Var, c: float) -> Var:
    return _rec("scale", (a,), a.value * c, lambda g: (g * c,))


def sum_all(a: Var) -> Var:
    shape = a.shape
    return _rec("sum", (a,), np.sum(a.value), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean_all(a: Var) -> Var:
    return scale(sum_all(a), 1.0 / a.value.size)


def relu(x: Var) -> Var:
    mask = x.value > 0
    return _rec("relu", (x,), np.where(mask, x.value, 0).astype(x.dtype), lambda g: (g * mask,))


def relu6(x: Var) -> Var:
    v = x.value
    mask = (v > 0) & (v < 6)
    return _rec("relu6", (x,), np.clip(v, 0, 6), lambda g: (g * mask,))


def add_bias(x: Var, b: Var) -> Var:
    """Add a per-channel bias ``b[C]`` to ``x[B, C, ...]``."""
    if b.value.ndim != 1 or b.shape[0] != x.shape[1]:
        raise ShapeError(f"bias {b.shape} does not match channels of {x.shape}")
    bshape = (1, -1) + (1,) * (x.value.ndim - 2)
    def backward(g):
        # summing the contiguous trailing axes first is much faster than axis=(0, 2, 3)
        return g, g.reshape(g.shape[0], g.shape[1], -1).sum(axis=2).sum(axis=0)

    return _rec("add_bias", (x, b), x.value + b.value.reshape(bshape), backward)


def layer_norm(x: Var, gamma: Var, beta: Var, eps: float = 1e-5) -> Var:
    """Normalize ``x[B, C, H, W]`` over channels at every spatial position."""
    v = x.value
    c = v.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"layer_norm affine params must be ({c},)")
    mu = v.mean(axis=1, keepdims=True)
    xc = v - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=1, keepdims=True) + eps)
    xhat = xc * inv
    gv = gamma.value.reshape(1, c, 1, 1)
    out = xhat * gv + beta.value.reshape(1, c, 1, 1)

    def backward(g):
        dxhat = g * gv
        dx = inv * (dxhat - dxhat.mean(axis=1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
        return dx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return _rec("layer_norm", (x, gamma, beta), out.astype(v.dtype, copy=False), backward)


def _group_matmul_backward(g, xg, w):
    """Gradients of ``y = w @ xg`` for grouped 1x1 linear layers."""
    dx = np.matmul(w.transpose(0, 2, 1), g)
    dw = np.matmul(g, xg.transpose(0, 1, 3, 2)).sum(axis=0)
    return dx, dw


def group_pointwise_linear(x: Var, w: Var, b: Var | None = None) -> Var:
    """Grouped 1x1 linear map over channels of ``x[B, Cin, H, W]``.

    ``w`` has shape ``[groups, Cout/groups, Cin/groups]``; channel ``c`` of the
    input belongs to group ``c // (Cin/groups)``.
    """
    bsz, cin = x.shape[:2]
    spatial = x.shape[2:]
    groups, co_g, ci_g = w.shape
    if groups * ci_g != cin:
        raise ShapeError(f"weights {w.shape} expect {groups * ci_g} input channels, got {cin}")
    xg = x.value.reshape(bsz, groups, ci_g, -1)
    wv = w.value
    y = np.matmul(wv, xg).reshape(bsz, groups * co_g, *spatial)

    def backward(g):
        dx, dw = _group_matmul_backward(g.reshape(bsz, groups, co_g, -1), xg, wv)
        return dx.reshape(x.shape), dw

    out = _rec("group_linear", (x, w), y, backward)
    return add_bias(out, b) if b is not None else out


def pointwise_conv(x: Var, w: Var, b: Var | None = None) -> Var:
    """Dense 1x1 convolution, ``w[Cout, Cin]``."""
    bsz, cin = x.shape[:2]
    spatial = x.shape[2:]
    cout = w.shape[0]
    if w.shape[1] != cin:
        raise ShapeError(f"pointwise weights {w.shape} vs input channels {cin}")
    xf = x.value.reshape(bsz, cin, -1)
    wv = w.value
    y = np.matmul(wv, xf).reshape(bsz, cout, *spatial)

    def backward(g):
        gf = g.reshape(bsz, cout, -1)
        dx = np.matmul(wv.T, gf).reshape(x.shape)
        dw = np.matmul(gf, xf.transpose(0, 2, 1)).sum(axis=0)
        return dx, dw

    out = _rec("pointwise_conv", (x, w), y, backward)
    return add_bias(out, b) if b is not None else out


def _out_size(n, stride):
    return (n - 1) // stride + 1


def depthwise_conv3x3(x: Var, w: Var, stride: int = 1) -> Var:
    """Per-channel 3x3 convolution with zero padding 1; ``w[C, 3, 3]``."""
    if stride not in (1, 2):
        raise ValueError("stride must be 1 or 2")
    c = x.shape[1]
    if x.value.ndim != 4 or w.shape != (c, 3, 3):
        raise ShapeError(f"depthwise weights must be ({c}, 3, 3), got {w.shape}")
    if w.dtype != x.dtype:
        raise TypeError(f"dtype mismatch: input {x.dtype}, weights {w.dtype}")
    xv = np.ascontiguousarray(x.value)
    wv = np.ascontiguousarray(w.value)
    out = kernels.dwconv3x3(xv, wv, stride)
    return _rec("depthwise_conv3x3", (x, w), out,
                lambda g: kernels.dwconv3x3_backward(np.ascontiguousarray(g), xv, wv, stride))


def conv3x3(x: Var, w: Var, stride: int = 1) -> Var:
    """Dense 3x3 convolution with zero padding 1; ``w[Cout, Cin, 3, 3]`` (im2col)."""
    bsz, cin, h, wd = x.shape
    cout = w.shape[0]
    if w.shape != (cout, cin, 3, 3):
        raise ShapeError(f"conv weights {w.shape} vs input channels {cin}")
    ho, wo = _out_size(h, stride), _out_size(wd, stride)
    xp = np.pad(x.value, ((0, 0), (0, 0), (1, 1), (1, 1)))
    taps = [(i, j) for i in range(3) for j in range(3)]
    cols = np.stack([xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] for i, j in taps], axis=2)
    cols = cols.reshape(bsz, cin * 9, ho * wo)
    wm = w.value.reshape(cout, cin * 9)
    y = np.matmul(wm, cols).reshape(bsz, cout, ho, wo)

    def backward(g):
        gf = g.reshape(bsz, cout, ho * wo)
        dw = np.matmul(gf, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
        dcols = np.matmul(wm.T, gf).reshape(bsz, cin, 9, ho, wo)
        dxp = np.zeros_like(xp)
        for t, (i, j) in enumerate(taps):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[:, :, t]
        return dxp[:, :, 1:-1, 1:-1], dw

    return _rec("conv3x3", (x, w), y, backward)


def global_avg_pool(x: Var) -> Var:
    bsz, c, h, wd = x.shape
    n = h * wd
    return _rec("global_avg_pool", (x,), x.value.mean(axis=(2, 3)),
                lambda g: (np.broadcast_to(g[:, :, None, None] / n, x.shape).copy(),))


def linear(x: Var, w: Var, b: Var | None = None) -> Var:
    """``x[B, Cin] @ w[Cout, Cin].T (+ b)``."""
    xv, wv = x.value, w.value
    if wv.shape[1] != xv.shape[1]:
        raise ShapeError(f"linear weights {wv.shape} vs input {xv.shape}")
    if b is None:
        return _rec("linear", (x, w), xv @ wv.T, lambda g: (g @ wv, g.T @ xv))
    return _rec("linear", (x, w, b), xv @ wv.T + b.value,
                lambda g: (g @ wv, g.T @ xv, g.sum(axis=0)))


def softmax_cross_entropy(logits: Var, labels, smoothing: float = 0.0) -> Var:
    """Mean cross entropy against label-smoothed one-hot targets."""
    z = logits.value
    labels = np.asarray(labels)
    bsz, k = z.shape
    if labels.shape != (bsz,):
        raise ShapeError(f"labels shape {labels.shape} vs batch {bsz}")
    zs = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(zs).sum(axis=1, keepdims=True))
    logp = zs - lse
    q = np.full_like(z, smoothing / k)
    q[np.arange(bsz), labels] += 1.0 - smoothing
    loss = -(q * logp).sum() / bsz
    probs = np.exp(logp)
    return _rec("softmax_cross_entropy", (logits,), np.asarray(loss, dtype=z.dtype),
                lambda g: (g * (probs - q) / bsz,))


# --- complex / spectral ops --------------------------------------------------


def fft2_diff(x: Var) -> Var:
    """Unnormalized forward 2D FFT; accepts real or complex input."""
    h, w = x.shape[-2:]
    v = x.value
    out = spectral.fft2_real(v) if not np.iscomplexobj(v) else spectral.fft2(v)
    # adjoint of the unnormalized DFT is H*W times the inverse DFT
    return _rec("fft2", (x,), out, lambda g: (spectral.ifft2(g) * (h * w),))


def ifft2_diff(z: Var) -> Var:
    h, w = z.shape[-2:]
    return _rec("ifft2", (z,), spectral.ifft2(z.value),
                lambda g: (spectral.fft2(g) * (1.0 / (h * w)),))


def complex_hadamard(a: Var, b: Var) -> Var:
    _same_shape("complex_hadamard", a, b)
    av, bv = a.value, b.value
    return _rec("complex_hadamard", (a, b), av * bv,
                lambda g: (g * np.conj(bv), g * np.conj(av)))


def real_part_diff(z: Var) -> Var:
    return _rec("real_part", (z,), np.ascontiguousarray(z.value.real),
                lambda g: (g.astype(z.dtype),))


def imag_part_diff(z: Var) -> Var:
    return _rec("imag_part", (z,), np.ascontiguousarray(z.value.imag),
                lambda g: ((1j * g).astype(z.dtype),))


def make_complex_diff(re: Var, im: Var) -> Var:
    _same_shape("make_complex", re, im)
    return _rec("make_complex", (re, im), re.value + 1j * im.value,
                lambda g: (g.real.copy(), g.imag.copy()))


def concat_channels(a: Var, b: Var) -> Var:
    ca = a.shape[1]
    return _rec("concat_channels", (a, b), np.concatenate((a.value, b.value), axis=1),
                lambda g: (g[:, :ca].copy(), g[:, ca:].copy()))


def channel_slice(x: Var, start: int, stop: int) -> Var:
    def backward(g):
        full = np.zeros_like(x.value)
        full[:, start:stop] = g
        return (full,)

    return _rec("channel_slice", (x,), x.value[:, start:stop].copy(), backward)


def tile_batch(x: Var, batch: int) -> Var:
    """Repeat an unbatched tensor ``x[...]`` to ``[batch, ...]``."""
    return _rec("tile_batch", (x,), np.broadcast_to(x.value, (batch,) + x.shape).copy(),
                lambda g: (g.sum(axis=0),))


def channel_mean(x: Var) -> Var:
    """Average over channels, broadcast back so the shape is unchanged."""
    c = x.shape[1]
    m = x.value.mean(axis=1, keepdims=True)
    return _rec("channel_mean", (x,), np.broadcast_to(m, x.shape).copy(),
                lambda g: (np.broadcast_to(g.mean(axis=1, keepdims=True), x.shape).copy(),))


# --- gradient checking --------------------------------------------------------


@dataclass
class GradcheckReport:
    """Per-parameter max relative error between analytic and numeric gradients.

    The relative error of a parameter is ``max|a - n| / max(max|a|, max|n|, floor)``,
    i.e. measured against that parameter's own gradient scale.
    """

    errors: dict[str, float]
    tolerance: float
    eps: float
    failures: list[str] = field(init=False)

    def __post_init__(self):
        self.failures = [k for k, e in self.errors.items() if not e <= self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def __str__(self):
        lines = [f"gradcheck eps={self.eps:g} tol={self.tolerance:g}: "
                 f"{'PASS' if self.passed else 'FAIL'} (max rel err {self.max_error:.3e})"]
        for name, err in self.errors.items():
            mark = "FAIL" if name in self.failures else "ok"
            lines.append(f"  {mark:4s} {name}: {err:.3e}")
        return "\n".join(lines)


def _loss_value(fragment, store):
    return float(fragment(Tape(store, grad=False)).value)


def _analytic_grads(fragment, store: ParamStore, names) -> dict[str, np.ndarray]:
    store.zero_grad()
    tape = Tape(store)
    tape.backward(fragment(tape))
    grads = {n: store.grad(n).astype(np.float64) for n in names}
    store.zero_grad()
    return grads


def gradcheck(fragment, store: ParamStore, eps: float = 1e-6, tol: float = 1e-6,
              names=None, floor: float = 1e-10, analytic_dtype=None) -> GradcheckReport:
    """Compare backward-pass gradients with central differences.

    ``fragment(tape)`` must build a scalar loss from ``tape.param(...)`` only.
    Every scalar of every parameter in ``names`` (default: all) is perturbed.
    Finite differences always run in 64-bit; ``analytic_dtype=np.float32``
    checks a 32-bit backward pass against them.
    """
    if store.dtype != np.float64:
        raise ValueError("gradcheck runs in 64-bit; convert with store.astype(np.float64)")
    first, second = _loss_value(fragment, store), _loss_value(fragment, store)
    if first != second:
        raise DeterminismError(f"fragment is not deterministic: {first!r} != {second!r}")
    names = store.names() if names is None else list(names)
    if analytic_dtype is None or np.dtype(analytic_dtype) == np.float64:
        grads = _analytic_grads(fragment, store, names)
    else:
        grads = _analytic_grads(fragment, store.astype(analytic_dtype), names)
    errors = {}
    for name in names:
        analytic = grads[name]
        value = store[name]
        numeric = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            orig = value[idx]
            value[idx] = orig + eps
            up = _loss_value(fragment, store)
            value[idx] = orig - eps
            down = _loss_value(fragment, store)
            value[idx] = orig
            numeric[idx] = (up - down) / (2 * eps)
        scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
        errors[name] = float(np.abs(analytic - numeric).max(initial=0.0) / scale)
    store.zero_grad()
    return GradcheckReport(errors, tol, eps)
