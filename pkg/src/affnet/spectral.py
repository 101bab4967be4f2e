"""2D discrete Fourier transforms.

Convention used throughout the package: the forward transform is
unnormalized, ``X(u, v) = sum_{h,w} x(h, w) exp(-2i*pi*(u*h/H + v*w/W))``,
and the inverse carries the ``1/(H*W)`` factor.  The effective-kernel
identity in :mod:`affnet.mixers` depends on this choice.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .errors import PlanError, ShapeError
from .tensor import complex_dtype_for

FORWARD = "forward"
INVERSE = "inverse"


def is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _bitrev(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int_)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _twiddles(n: int, sign: int, dtype) -> np.ndarray:
    k = np.arange(max(n // 2, 1))
    return np.exp(sign * 2j * np.pi * k / n).astype(dtype)


@dataclass(frozen=True, eq=False)
class FftPlan:
    """Precomputed permutation and twiddle tables for one (H, W, direction)."""

    height: int
    width: int
    direction: str = FORWARD
    dtype: np.dtype = np.dtype(np.complex128)
    _tables: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.direction not in (FORWARD, INVERSE):
            raise ValueError(f"direction must be {FORWARD!r} or {INVERSE!r}")
        for n in (self.height, self.width):
            if not is_pow2(n):
                raise PlanError(f"fast path needs power-of-two sizes, got {self.height}x{self.width}")
        sign = -1 if self.direction == FORWARD else 1
        dt = np.dtype(self.dtype)
        object.__setattr__(self, "dtype", dt)
        tables = {}
        for n in {self.height, self.width}:
            tw = _twiddles(n, sign, dt)
            tw.flags.writeable = False
            br = _bitrev(n)
            br.flags.writeable = False
            tables[n] = (br, tw)
        object.__setattr__(self, "_tables", tables)

    def rows(self, n):
        return self._tables[n]


@functools.lru_cache(maxsize=128)
def get_plan(height: int, width: int, direction: str = FORWARD, dtype=np.complex128) -> FftPlan:
    return FftPlan(height, width, direction, np.dtype(dtype))


def _check_spatial(x: np.ndarray):
    if x.ndim < 2:
        raise ShapeError(f"need at least 2 axes (..., H, W), got shape {x.shape}")


def _run(x: np.ndarray, plan: FftPlan) -> np.ndarray:
    h, w = x.shape[-2:]
    if (h, w) != (plan.height, plan.width):
        raise PlanError(f"plan is {plan.height}x{plan.width}, input is {h}x{w}")
    planes = np.ascontiguousarray(x, dtype=plan.dtype).reshape(-1, h, w)
    out = kernels.fft2_planes(planes, *plan.rows(h), *plan.rows(w)).reshape(x.shape)
    if plan.direction == INVERSE:
        out *= 1.0 / (h * w)
    return out


def fft2(x: np.ndarray, plan: FftPlan | None = None) -> np.ndarray:
    """Fast 2D transform over the last two axes (row-column, radix-2).

    The direction comes from ``plan``; without a plan a cached forward plan
    is used.  Leading axes are treated as batch.
    """
    x = np.asarray(x)
    _check_spatial(x)
    if not np.iscomplexobj(x):
        raise TypeError("fft2 takes a complex tensor; use fft2_real for real input")
    if plan is None:
        plan = get_plan(x.shape[-2], x.shape[-1], FORWARD, x.dtype)
    return _run(x, plan)


def ifft2(x: np.ndarray, plan: FftPlan | None = None) -> np.ndarray:
    x = np.asarray(x)
    _check_spatial(x)
    if not np.iscomplexobj(x):
        raise TypeError("ifft2 takes a complex tensor")
    if plan is None:
        plan = get_plan(x.shape[-2], x.shape[-1], INVERSE, x.dtype)
    elif plan.direction != INVERSE:
        raise PlanError("ifft2 called with a forward plan")
    return _run(x, plan)


def fft2_real(x: np.ndarray, direction: str = FORWARD) -> np.ndarray:
    """Embed a real tensor as complex and transform it."""
    x = np.asarray(x)
    if np.iscomplexobj(x):
        raise TypeError("fft2_real takes a real tensor")
    _check_spatial(x)
    cdt = complex_dtype_for(x.dtype)
    plan = get_plan(x.shape[-2], x.shape[-1], direction, cdt)
    return _run(x.astype(cdt), plan)


def dft2_naive(x: np.ndarray, direction: str = FORWARD) -> np.ndarray:
    """Brute-force O(N^2)-per-plane 2D DFT in 64-bit; any H, W >= 1.

    Each output frequency is an explicit double sum over every input
    sample, with no separability or factorization shortcuts.
    """
    x = np.asarray(x, dtype=np.complex128)
    _check_spatial(x)
    h, w = x.shape[-2:]
    sign = -1.0 if direction == FORWARD else 1.0
    # reduce u*h mod H in integers before scaling to keep the phase exact
    ph = (np.outer(np.arange(h), np.arange(h)) % h) / h
    pw = (np.outer(np.arange(w), np.arange(w)) % w) / w
    phase = ph[:, None, :, None] + pw[None, :, None, :]  # [u, v, h, w]
    basis = np.exp(sign * 2j * np.pi * phase).reshape(h * w, h * w)
    out = x.reshape(-1, h * w) @ basis.T
    out = out.reshape(x.shape)
    if direction == INVERSE:
        out /= h * w
    return out


def dft2(x: np.ndarray, direction: str = FORWARD) -> np.ndarray:
    """Fast path when possible, brute force (with a warning) otherwise."""
    x = np.asarray(x)
    h, w = x.shape[-2:]
    if is_pow2(h) and is_pow2(w):
        if not np.iscomplexobj(x):
            return fft2_real(x, direction)
        plan = get_plan(h, w, direction, x.dtype)
        return _run(x, plan)
    warnings.warn(f"{h}x{w} is not a power of two; using the O(N^2) transform",
                  RuntimeWarning, stacklevel=2)
    return dft2_naive(x, direction)
