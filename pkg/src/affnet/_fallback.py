"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable or when
``AFF_BACKEND=python`` is set.  Signatures mirror ``_kernels.pyx`` exactly.
"""

import numpy as np

NAME = "python"


def fft_rows(a, bitrev, twiddles):
    """Unnormalized radix-2 DIT transform along the last axis of a 2D array.

    ``twiddles[k] = exp(sign * 2j*pi*k/n)`` for ``k < n/2``; the sign picks
    the direction.  Returns a new array, the input is left untouched.
    """
    m_rows, n = a.shape
    out = a[:, bitrev]
    size = 2
    while size <= n:
        half = size // 2
        tw = twiddles[:: n // size][:half]
        blocks = out.reshape(m_rows, n // size, size)
        top = blocks[:, :, :half]
        bot = blocks[:, :, half:] * tw
        out = np.concatenate((top + bot, top - bot), axis=2).reshape(m_rows, n)
        size *= 2
    return out


def circular_conv(x, k):
    """Direct circular convolution of each plane of ``x`` with its kernel.

    ``out[p, h, w] = sum_{i, j} k[p, i, j] * x[p, (h - i) % H, (w - j) % W]``.
    """
    planes, height, width = x.shape
    out = np.zeros_like(x)
    for i in range(height):
        xi = np.roll(x, i, axis=1)
        for j in range(width):
            out += k[:, i, j, None, None] * np.roll(xi, j, axis=2)
    return out


def fft2_planes(x, bitrev_h, tw_h, bitrev_w, tw_w):
    """Unnormalized 2D transform of every ``[H, W]`` plane of ``x[P, H, W]``."""
    planes, h, w = x.shape
    out = x
    if w > 1:
        out = fft_rows(out.reshape(-1, w), bitrev_w, tw_w).reshape(planes, h, w)
    if h > 1:
        cols = np.ascontiguousarray(out.transpose(0, 2, 1)).reshape(-1, h)
        out = fft_rows(cols, bitrev_h, tw_h).reshape(planes, w, h).transpose(0, 2, 1)
    return np.array(out, order="C", copy=True)


_TAPS = [(i, j) for i in range(3) for j in range(3)]


def _window(i, j, ho, wo, stride):
    return (slice(None), slice(None), slice(i, i + stride * ho, stride), slice(j, j + stride * wo, stride))


def dwconv3x3(x, w, stride):
    """Depthwise 3x3 convolution, zero padding 1, no bias."""
    bsz, c, h, wd = x.shape
    ho, wo = (h - 1) // stride + 1, (wd - 1) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.zeros((bsz, c, ho, wo), dtype=x.dtype)
    for i, j in _TAPS:
        out += w[None, :, i, j, None, None] * xp[_window(i, j, ho, wo, stride)]
    return out


def dwconv3x3_backward(g, x, w, stride):
    ho, wo = g.shape[2:]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    dxp = np.zeros_like(xp)
    dw = np.empty_like(w)
    for i, j in _TAPS:
        win = _window(i, j, ho, wo, stride)
        dxp[win] += w[None, :, i, j, None, None] * g
        dw[:, i, j] = np.einsum("bchw,bchw->c", g, xp[win])
    return dxp[:, :, 1:-1, 1:-1], dw
