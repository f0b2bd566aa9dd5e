# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_fallback.py``."""
import numpy as np
from libc.math cimport floor


cdef inline double _clip(double v, double hi) nogil:
    if v < 0.0:
        return 0.0
    if v > hi:
        return hi
    return v


def bilinear_forward(const double[:, :, ::1] img, const double[::1] x, const double[::1] y):
    cdef Py_ssize_t H = img.shape[0], W = img.shape[1], C = img.shape[2]
    cdef Py_ssize_t M = x.shape[0], m, c, x0, x1, y0, y1
    cdef double xc, yc, wx, wy
    out_arr = np.empty((M, C), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for m in range(M):
            xc = _clip(x[m], W - 1.0)
            yc = _clip(y[m], H - 1.0)
            x0 = <Py_ssize_t>floor(xc)
            y0 = <Py_ssize_t>floor(yc)
            x1 = x0 + 1 if x0 + 1 < W else W - 1
            y1 = y0 + 1 if y0 + 1 < H else H - 1
            wx = xc - x0
            wy = yc - y0
            for c in range(C):
                out[m, c] = ((1.0 - wx) * (1.0 - wy) * img[y0, x0, c]
                             + wx * (1.0 - wy) * img[y0, x1, c]
                             + (1.0 - wx) * wy * img[y1, x0, c]
                             + wx * wy * img[y1, x1, c])
    return out_arr


def bilinear_backward(const double[:, :, ::1] img, const double[::1] x, const double[::1] y,
                      const double[:, ::1] grad_out):
    cdef Py_ssize_t H = img.shape[0], W = img.shape[1], C = img.shape[2]
    cdef Py_ssize_t M = x.shape[0], m, c, x0, x1, y0, y1
    cdef double xc, yc, wx, wy, g, sx, sy
    gi_arr = np.zeros((H, W, C), dtype=np.float64)
    gx_arr = np.zeros(M, dtype=np.float64)
    gy_arr = np.zeros(M, dtype=np.float64)
    cdef double[:, :, ::1] gi = gi_arr
    cdef double[::1] gx = gx_arr, gy = gy_arr
    with nogil:
        for m in range(M):
            xc = _clip(x[m], W - 1.0)
            yc = _clip(y[m], H - 1.0)
            x0 = <Py_ssize_t>floor(xc)
            y0 = <Py_ssize_t>floor(yc)
            x1 = x0 + 1 if x0 + 1 < W else W - 1
            y1 = y0 + 1 if y0 + 1 < H else H - 1
            wx = xc - x0
            wy = yc - y0
            sx = 0.0
            sy = 0.0
            for c in range(C):
                g = grad_out[m, c]
                gi[y0, x0, c] += (1.0 - wx) * (1.0 - wy) * g
                gi[y0, x1, c] += wx * (1.0 - wy) * g
                gi[y1, x0, c] += (1.0 - wx) * wy * g
                gi[y1, x1, c] += wx * wy * g
                sx += ((1.0 - wy) * (img[y0, x1, c] - img[y0, x0, c])
                       + wy * (img[y1, x1, c] - img[y1, x0, c])) * g
                sy += ((1.0 - wx) * (img[y1, x0, c] - img[y0, x0, c])
                       + wx * (img[y1, x1, c] - img[y0, x1, c])) * g
            if 0.0 <= x[m] <= W - 1.0:
                gx[m] = sx
            if 0.0 <= y[m] <= H - 1.0:
                gy[m] = sy
    return gi_arr, gx_arr, gy_arr


def count_forward(const double[::1] V, Py_ssize_t N):
    cdef Py_ssize_t n = V.shape[0], j, i
    cdef double v
    out_arr = np.zeros(N, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for j in range(n):
            v = V[j]
            if v == floor(v) and v >= 0 and v < N:
                i = <Py_ssize_t>v
                out[i] += 1.0
    return out_arr


def count_backward(const double[::1] V, const double[::1] grad_C, bint inclusive=False):
    cdef Py_ssize_t n = V.shape[0], N = grad_C.shape[0], j, lo, hi
    cdef double v, f, acc
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for j in range(n):
            v = V[j]
            f = floor(v)
            if v != f:
                lo = <Py_ssize_t>f
                hi = lo + 1
            elif inclusive:
                lo = <Py_ssize_t>f - 1
                hi = <Py_ssize_t>f + 1
            else:
                continue
            acc = 0.0
            if 0 <= hi < N:
                acc += grad_C[hi]
            if 0 <= lo < N:
                acc -= grad_C[lo]
            out[j] = 2.0 * acc
    return out_arr


cdef inline double _sample_chw(const double[:, :, ::1] src, Py_ssize_t c, double x, double y,
                               double* dx, double* dy) noexcept nogil:
    """Bilinear sample of channel c; writes d/dx, d/dy of the clamped sample."""
    cdef Py_ssize_t H = src.shape[1], W = src.shape[2], x0, x1, y0, y1
    cdef double xc = _clip(x, W - 1.0), yc = _clip(y, H - 1.0), wx, wy
    cdef double i00, i01, i10, i11
    x0 = <Py_ssize_t>floor(xc)
    y0 = <Py_ssize_t>floor(yc)
    x1 = x0 + 1 if x0 + 1 < W else W - 1
    y1 = y0 + 1 if y0 + 1 < H else H - 1
    wx = xc - x0
    wy = yc - y0
    i00 = src[c, y0, x0]
    i01 = src[c, y0, x1]
    i10 = src[c, y1, x0]
    i11 = src[c, y1, x1]
    dx[0] = (1.0 - wy) * (i01 - i00) + wy * (i11 - i10)
    dy[0] = (1.0 - wx) * (i10 - i00) + wx * (i11 - i01)
    return ((1.0 - wx) * (1.0 - wy) * i00 + wx * (1.0 - wy) * i01
            + (1.0 - wx) * wy * i10 + wx * wy * i11)


def deform_forward(const double[:, :, ::1] src, const double[:, :, ::1] off, const double[:, ::1] w):
    cdef Py_ssize_t C = src.shape[0], H = src.shape[1], W = src.shape[2]
    cdef Py_ssize_t G = w.shape[0], T = w.shape[1], cg = C // G
    cdef Py_ssize_t n = <Py_ssize_t>(T ** 0.5 + 0.5), r = n // 2
    cdef Py_ssize_t g, k, c, py, px, ch
    cdef double x, y, wk, dx, dy
    out_arr = np.zeros((C, H, W), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    with nogil:
        for g in range(G):
            for k in range(T):
                ch = g * 2 * T + 2 * k
                wk = w[g, k]
                for py in range(H):
                    for px in range(W):
                        x = px + (k % n - r) + off[ch, py, px]
                        y = py + (k // n - r) + off[ch + 1, py, px]
                        for c in range(g * cg, (g + 1) * cg):
                            out[c, py, px] += wk * _sample_chw(src, c, x, y, &dx, &dy)
    return out_arr


def deform_backward(const double[:, :, ::1] src, const double[:, :, ::1] off, const double[:, ::1] w,
                    const double[:, :, ::1] grad_out):
    cdef Py_ssize_t C = src.shape[0], H = src.shape[1], W = src.shape[2]
    cdef Py_ssize_t G = w.shape[0], T = w.shape[1], cg = C // G
    cdef Py_ssize_t n = <Py_ssize_t>(T ** 0.5 + 0.5), r = n // 2
    cdef Py_ssize_t g, k, c, py, px, ch, x0, x1, y0, y1
    cdef double x, y, xc, yc, wx, wy, wk, dx, dy, go, sx, sy, sw, s
    gs_arr = np.zeros((C, H, W), dtype=np.float64)
    go_arr = np.zeros((off.shape[0], H, W), dtype=np.float64)
    gw_arr = np.zeros((G, T), dtype=np.float64)
    cdef double[:, :, ::1] gs = gs_arr, goff = go_arr
    cdef double[:, ::1] gw = gw_arr
    with nogil:
        for g in range(G):
            for k in range(T):
                ch = g * 2 * T + 2 * k
                wk = w[g, k]
                sw = 0.0
                for py in range(H):
                    for px in range(W):
                        x = px + (k % n - r) + off[ch, py, px]
                        y = py + (k // n - r) + off[ch + 1, py, px]
                        xc = _clip(x, W - 1.0)
                        yc = _clip(y, H - 1.0)
                        x0 = <Py_ssize_t>floor(xc)
                        y0 = <Py_ssize_t>floor(yc)
                        x1 = x0 + 1 if x0 + 1 < W else W - 1
                        y1 = y0 + 1 if y0 + 1 < H else H - 1
                        wx = xc - x0
                        wy = yc - y0
                        sx = 0.0
                        sy = 0.0
                        for c in range(g * cg, (g + 1) * cg):
                            go = grad_out[c, py, px]
                            s = _sample_chw(src, c, x, y, &dx, &dy)
                            sw += go * s
                            sx += wk * go * dx
                            sy += wk * go * dy
                            gs[c, y0, x0] += (1.0 - wx) * (1.0 - wy) * wk * go
                            gs[c, y0, x1] += wx * (1.0 - wy) * wk * go
                            gs[c, y1, x0] += (1.0 - wx) * wy * wk * go
                            gs[c, y1, x1] += wx * wy * wk * go
                        if 0.0 <= x <= W - 1.0:
                            goff[ch, py, px] = sx
                        if 0.0 <= y <= H - 1.0:
                            goff[ch + 1, py, px] = sy
                gw[g, k] = sw
    return gs_arr, go_arr, gw_arr
