"""Numpy implementations of the hot kernels.

Semantics are the reference for ``_ckernels.pyx``; both must agree to
floating-point summation order.
"""
import numpy as np


def _corners(shape, x, y):
    H, W = shape[0], shape[1]
    xc = np.clip(x, 0.0, W - 1.0)
    yc = np.clip(y, 0.0, H - 1.0)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    return x0, x1, y0, y1, xc - x0, yc - y0


def bilinear_forward(img, x, y):
    """Sample ``img`` (H, W, C) at float pixel coords; returns (M, C)."""
    x0, x1, y0, y1, wx, wy = _corners(img.shape, x, y)
    wx = wx[:, None]
    wy = wy[:, None]
    return ((1.0 - wx) * (1.0 - wy) * img[y0, x0]
            + wx * (1.0 - wy) * img[y0, x1]
            + (1.0 - wx) * wy * img[y1, x0]
            + wx * wy * img[y1, x1])


def bilinear_backward(img, x, y, grad_out):
    """Adjoint of :func:`bilinear_forward`; returns (grad_img, grad_x, grad_y)."""
    H, W, C = img.shape
    x0, x1, y0, y1, wx, wy = _corners(img.shape, x, y)
    g = grad_out
    wxc = wx[:, None]
    wyc = wy[:, None]
    chan = np.arange(C)
    size = H * W * C
    grad_img = np.zeros(size)
    for yy, xx, w in ((y0, x0, (1.0 - wxc) * (1.0 - wyc)),
                      (y0, x1, wxc * (1.0 - wyc)),
                      (y1, x0, (1.0 - wxc) * wyc),
                      (y1, x1, wxc * wyc)):
        flat = ((yy * W + xx)[:, None] * C + chan[None, :]).ravel()
        grad_img += np.bincount(flat, weights=(w * g).ravel(), minlength=size)
    i00, i01 = img[y0, x0], img[y0, x1]
    i10, i11 = img[y1, x0], img[y1, x1]
    inside_x = (x >= 0.0) & (x <= W - 1.0)
    inside_y = (y >= 0.0) & (y <= H - 1.0)
    dx = ((1.0 - wyc) * (i01 - i00) + wyc * (i11 - i10)) * g
    dy = ((1.0 - wxc) * (i10 - i00) + wxc * (i11 - i01)) * g
    grad_x = np.where(inside_x, dx.sum(axis=1), 0.0)
    grad_y = np.where(inside_y, dy.sum(axis=1), 0.0)
    return grad_img.reshape(H, W, C), grad_x, grad_y


def count_forward(V, N):
    """Exact-match counting: C[i] = #{j : V[j] == i}."""
    V = np.asarray(V, dtype=np.float64)
    keep = (V == np.floor(V)) & (V >= 0) & (V < N)
    return np.bincount(V[keep].astype(np.intp), minlength=N).astype(np.float64)


def count_backward(V, grad_C, inclusive=False):
    """Gradient of C_i = n - sum_j sign_ste(|V_j - i|) w.r.t. V.

    The sign surrogate passes 2*g where 0 < |V_j - i| < 1 (or <= 1 when
    ``inclusive``); |.| contributes sign(V_j - i), zero at 0.
    """
    V = np.asarray(V, dtype=np.float64)
    N = grad_C.shape[0]
    f = np.floor(V)
    frac = V != f
    lo = np.where(frac, f, f - 1.0)
    hi = f + 1.0
    active = frac | bool(inclusive)

    def pick(idx):
        ok = active & (idx >= 0) & (idx < N)
        out = np.zeros_like(V)
        out[ok] = grad_C[idx[ok].astype(np.intp)]
        return out

    return 2.0 * (pick(hi) - pick(lo))


def _taps(n):
    r = n // 2
    ky, kx = np.mgrid[-r:r + 1, -r:r + 1]
    return kx.ravel().astype(np.float64), ky.ravel().astype(np.float64)


def _deform_setup(src, off, w):
    C, H, W = src.shape
    G, T = w.shape
    n = int(round(np.sqrt(T)))
    v, u = np.mgrid[0:H, 0:W].astype(np.float64)
    return C, H, W, G, T, n, C // G, u.ravel(), v.ravel()


def deform_forward(src, off, w):
    """out_c(p) = sum_k w[g, k] * src_c(p + p_k + off_{g,k}(p)) on (C, H, W) maps."""
    C, H, W, G, T, n, cg, u, v = _deform_setup(src, off, w)
    kx, ky = _taps(n)
    out = np.zeros((C, H * W))
    for g in range(G):
        img = np.ascontiguousarray(src[g * cg:(g + 1) * cg].transpose(1, 2, 0))
        for k in range(T):
            ch = g * 2 * T + 2 * k
            x = u + kx[k] + off[ch].ravel()
            y = v + ky[k] + off[ch + 1].ravel()
            out[g * cg:(g + 1) * cg] += (w[g, k] * bilinear_forward(img, x, y)).T
    return out.reshape(C, H, W)


def deform_backward(src, off, w, grad_out):
    """Returns (grad_src, grad_off, grad_w) for :func:`deform_forward`."""
    C, H, W, G, T, n, cg, u, v = _deform_setup(src, off, w)
    kx, ky = _taps(n)
    grad_src = np.zeros((C, H, W))
    grad_off = np.zeros(off.shape)
    grad_w = np.zeros((G, T))
    for g in range(G):
        img = np.ascontiguousarray(src[g * cg:(g + 1) * cg].transpose(1, 2, 0))
        go = grad_out[g * cg:(g + 1) * cg].reshape(cg, H * W).T
        for k in range(T):
            ch = g * 2 * T + 2 * k
            x = u + kx[k] + off[ch].ravel()
            y = v + ky[k] + off[ch + 1].ravel()
            gi, gx, gy = bilinear_backward(img, x, y, w[g, k] * go)
            grad_src[g * cg:(g + 1) * cg] += gi.transpose(2, 0, 1)
            grad_off[ch] = gx.reshape(H, W)
            grad_off[ch + 1] = gy.reshape(H, W)
            grad_w[g, k] = np.sum(go * bilinear_forward(img, x, y))
    return grad_src, grad_off, grad_w
