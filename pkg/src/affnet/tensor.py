"""Dense real/complex tensor primitives.

Tensors are plain :class:`numpy.ndarray` values in C (row-major) order with
the innermost axis being the image width.  The helpers here add the strict
contracts the rest of the package relies on: no broadcasting, no silent
real/complex promotion and no non-finite results.
"""

from __future__ import annotations

import operator

import numpy as np

from .errors import AxisError, NonFiniteError, ShapeError

_BINARY = {"add": operator.add, "sub": operator.sub, "mul": operator.mul}


def as_tensor(data, dtype=np.float64) -> np.ndarray:
    arr = np.ascontiguousarray(data, dtype=dtype)
    if arr.ndim == 0:
        return arr
    if any(d < 1 for d in arr.shape):
        raise ShapeError(f"all dims must be >= 1, got {arr.shape}")
    return arr


def is_complex(a: np.ndarray) -> bool:
    return np.iscomplexobj(a)


def check_finite(a: np.ndarray, what: str = "result") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{what} contains NaN or Inf")
    return a


def elementwise_binary(a: np.ndarray, b: np.ndarray, op: str) -> np.ndarray:
    """Apply ``add``, ``sub`` or ``mul`` to two same-shape tensors.

    Both operands must be real or both complex.
    """
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    if is_complex(a) != is_complex(b):
        raise TypeError("cannot mix real and complex tensors")
    try:
        fn = _BINARY[op]
    except KeyError:
        raise ValueError(f"unknown op {op!r}; expected one of {sorted(_BINARY)}") from None
    with np.errstate(over="ignore", invalid="ignore"):
        out = fn(a, b)
    return check_finite(out, f"elementwise {op}")


def reduce_sum(a: np.ndarray, axes=()) -> np.ndarray:
    axes = tuple(axes)
    for ax in axes:
        if not -a.ndim <= ax < a.ndim:
            raise AxisError(f"axis {ax} out of range for rank {a.ndim}")
    norm = {ax % a.ndim for ax in axes} if a.ndim else set()
    if len(norm) != len(axes):
        raise AxisError(f"repeated axis in {axes}")
    if not axes:
        return a.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.sum(a, axis=axes)
    return check_finite(np.asarray(out), "reduce_sum")


def real_part(z: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.real(z))


def imag_part(z: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.imag(z))


def make_complex(re: np.ndarray, im: np.ndarray) -> np.ndarray:
    if re.shape != im.shape:
        raise ShapeError(f"shape mismatch: {re.shape} vs {im.shape}")
    if is_complex(re) or is_complex(im):
        raise TypeError("make_complex takes two real tensors")
    dtype = np.complex64 if re.dtype == np.float32 and im.dtype == np.float32 else np.complex128
    out = np.empty(re.shape, dtype=dtype)
    out.real = re
    out.imag = im
    return out


def complex_dtype_for(dtype) -> np.dtype:
    return np.dtype(np.complex64) if np.dtype(dtype) == np.float32 else np.dtype(np.complex128)


def real_dtype_for(dtype) -> np.dtype:
    return np.dtype(np.float32) if np.dtype(dtype) in (np.float32, np.complex64) else np.dtype(np.float64)
