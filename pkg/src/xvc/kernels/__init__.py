"""Hot kernels: bilinear gather/scatter, deformable sampling and STE voxel counting.

The compiled extension is used when importable; set ``XVC_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("XVC_PURE_PYTHON", "") != "1":
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def bilinear_forward(img, x, y, impl=None):
    impl = impl or _impl
    return impl.bilinear_forward(_f64(img), _f64(x).ravel(), _f64(y).ravel())


def bilinear_backward(img, x, y, grad_out, impl=None):
    impl = impl or _impl
    return impl.bilinear_backward(_f64(img), _f64(x).ravel(), _f64(y).ravel(), _f64(grad_out))


def count_forward(V, N, impl=None):
    impl = impl or _impl
    return impl.count_forward(_f64(V).ravel(), int(N))


def count_backward(V, grad_C, inclusive=False, impl=None):
    impl = impl or _impl
    return impl.count_backward(_f64(V).ravel(), _f64(grad_C).ravel(), bool(inclusive))


def deform_forward(src, off, w, impl=None):
    impl = impl or _impl
    return impl.deform_forward(_f64(src), _f64(off), _f64(w))


def deform_backward(src, off, w, grad_out, impl=None):
    impl = impl or _impl
    return impl.deform_backward(_f64(src), _f64(off), _f64(w), _f64(grad_out))


def available_backends():
    """Map backend name to implementation module for every importable backend."""
    out = {"python": _fallback}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
