# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: radix-2 FFT butterflies and direct circular convolution.

Signatures mirror ``_fallback.py``.
"""

import numpy as np

ctypedef fused cplx:
    float complex
    double complex

ctypedef fused real:
    float
    double

NAME = "compiled"


cdef void _fft_inplace(cplx[:, ::1] out, const long[::1] bitrev,
                       const cplx[::1] tw) noexcept nogil:
    cdef Py_ssize_t rows = out.shape[0], n = out.shape[1]
    cdef Py_ssize_t r, i, j, start, k, size, half, step
    cdef cplx t, u, v
    for r in range(rows):
        for i in range(n):
            j = bitrev[i]
            if j > i:
                t = out[r, i]
                out[r, i] = out[r, j]
                out[r, j] = t
        size = 2
        while size <= n:
            half = size >> 1
            step = n // size
            start = 0
            while start < n:
                for k in range(half):
                    u = out[r, start + k]
                    v = out[r, start + k + half] * tw[k * step]
                    out[r, start + k] = u + v
                    out[r, start + k + half] = u - v
                start += size
            size <<= 1


def fft_rows(cplx[:, :] a, const long[::1] bitrev, const cplx[::1] twiddles):
    out = np.ascontiguousarray(np.array(a, copy=True))
    cdef cplx[:, ::1] view = out
    with nogil:
        _fft_inplace(view, bitrev, twiddles)
    return out


def circular_conv(real[:, :, ::1] x, real[:, :, ::1] k):
    cdef Py_ssize_t planes = x.shape[0], height = x.shape[1], width = x.shape[2]
    out = np.zeros_like(np.asarray(x))
    cdef real[:, :, ::1] o = out
    cdef Py_ssize_t p, i, j, h, w, src
    cdef real kv
    with nogil:
        for p in range(planes):
            for i in range(height):
                for j in range(width):
                    kv = k[p, i, j]
                    for h in range(height):
                        src = h - i
                        if src < 0:
                            src = src + height
                        # (w - j) mod W splits into two contiguous runs
                        for w in range(j):
                            o[p, h, w] += kv * x[p, src, w - j + width]
                        for w in range(j, width):
                            o[p, h, w] += kv * x[p, src, w - j]
    return out


cdef void _fft_cols(cplx[:, :, ::1] a, const long[::1] bitrev, const cplx[::1] tw,
                    cplx[::1] buf) noexcept nogil:
    cdef Py_ssize_t planes = a.shape[0], n = a.shape[1], width = a.shape[2]
    cdef Py_ssize_t p, col, i, k, start, size, half, step
    cdef cplx u, v
    for p in range(planes):
        for col in range(width):
            for i in range(n):
                buf[i] = a[p, bitrev[i], col]
            size = 2
            while size <= n:
                half = size >> 1
                step = n // size
                start = 0
                while start < n:
                    for k in range(half):
                        u = buf[start + k]
                        v = buf[start + k + half] * tw[k * step]
                        buf[start + k] = u + v
                        buf[start + k + half] = u - v
                    start += size
                size <<= 1
            for i in range(n):
                a[p, i, col] = buf[i]


def fft2_planes(cplx[:, :, :] x, const long[::1] bitrev_h, const cplx[::1] tw_h,
                const long[::1] bitrev_w, const cplx[::1] tw_w):
    """Unnormalized 2D transform of every ``[H, W]`` plane (rows, then columns)."""
    out = np.ascontiguousarray(np.array(x, copy=True))
    cdef Py_ssize_t planes = out.shape[0], height = out.shape[1], width = out.shape[2]
    cdef cplx[:, ::1] rows = out.reshape(planes * height, width)
    cdef cplx[:, :, ::1] cube = out
    cdef cplx[::1] buf = np.empty(height, dtype=out.dtype)
    with nogil:
        if width > 1:
            _fft_inplace(rows, bitrev_w, tw_w)
        if height > 1:
            _fft_cols(cube, bitrev_h, tw_h, buf)
    return out


cdef inline void _tap_range(Py_ssize_t n, Py_ssize_t nout, Py_ssize_t tap, int stride,
                            Py_ssize_t* lo, Py_ssize_t* hi) noexcept nogil:
    # outputs o with 0 <= o*stride + tap - 1 < n
    lo[0] = 1 if tap == 0 else 0
    hi[0] = (n - tap) // stride + 1 if n - tap >= 0 else 0
    if hi[0] > nout:
        hi[0] = nout


def dwconv3x3(real[:, :, :, ::1] x, real[:, :, ::1] w, int stride):
    """Depthwise 3x3 convolution, zero padding 1, no bias."""
    cdef Py_ssize_t bsz = x.shape[0], chans = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t ho = (h - 1) // stride + 1, wo = (wd - 1) // stride + 1
    out = np.zeros((bsz, chans, ho, wo), dtype=np.asarray(x).dtype)
    cdef real[:, :, :, ::1] o = out
    cdef Py_ssize_t b, c, i, j, oh, ow, lo_h, hi_h, lo_w, hi_w
    cdef real kv
    cdef real* orow
    cdef const real* xrow
    with nogil:
        for b in range(bsz):
            for c in range(chans):
                for i in range(3):
                    _tap_range(h, ho, i, stride, &lo_h, &hi_h)
                    for j in range(3):
                        kv = w[c, i, j]
                        _tap_range(wd, wo, j, stride, &lo_w, &hi_w)
                        for oh in range(lo_h, hi_h):
                            orow = &o[b, c, oh, 0]
                            xrow = &x[b, c, oh * stride + i - 1, 0]
                            if stride == 1:
                                xrow = xrow + j - 1
                                for ow in range(lo_w, hi_w):
                                    orow[ow] += kv * xrow[ow]
                            else:
                                for ow in range(lo_w, hi_w):
                                    orow[ow] += kv * xrow[2 * ow + j - 1]
    return out


def dwconv3x3_backward(real[:, :, :, ::1] g, real[:, :, :, ::1] x, real[:, :, ::1] w, int stride):
    """Gradients ``(dx, dw)`` of :func:`dwconv3x3`."""
    cdef Py_ssize_t bsz = x.shape[0], chans = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t ho = g.shape[2], wo = g.shape[3]
    dx_arr = np.zeros_like(np.asarray(x))
    dw_arr = np.zeros_like(np.asarray(w))
    cdef real[:, :, :, ::1] dx = dx_arr
    cdef real[:, :, ::1] dw = dw_arr
    cdef Py_ssize_t b, c, i, j, oh, ow, lo_h, hi_h, lo_w, hi_w
    cdef real kv, acc
    cdef real* drow
    cdef const real* xrow
    cdef const real* grow
    with nogil:
        for b in range(bsz):
            for c in range(chans):
                for i in range(3):
                    _tap_range(h, ho, i, stride, &lo_h, &hi_h)
                    for j in range(3):
                        kv = w[c, i, j]
                        _tap_range(wd, wo, j, stride, &lo_w, &hi_w)
                        acc = 0
                        for oh in range(lo_h, hi_h):
                            grow = &g[b, c, oh, 0]
                            drow = &dx[b, c, oh * stride + i - 1, 0]
                            xrow = &x[b, c, oh * stride + i - 1, 0]
                            if stride == 1:
                                drow = drow + j - 1
                                xrow = xrow + j - 1
                                for ow in range(lo_w, hi_w):
                                    drow[ow] += kv * grow[ow]
                                    acc = acc + grow[ow] * xrow[ow]
                            else:
                                for ow in range(lo_w, hi_w):
                                    drow[2 * ow + j - 1] += kv * grow[ow]
                                    acc = acc + grow[ow] * xrow[2 * ow + j - 1]
                        dw[c, i, j] += acc
    return dx_arr, dw_arr
