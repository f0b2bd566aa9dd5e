import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xvc import kernels

BACKENDS = kernels.available_backends()
needs_ext = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")


def test_backend_reported():
    assert kernels.BACKEND in BACKENDS


def test_pure_python_switch():
    env = dict(os.environ, XVC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import xvc.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_ext
@settings(max_examples=40, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_bilinear_parity(H, W, C, seed):
    rng = np.random.default_rng(seed)
    img = rng.normal(size=(H, W, C))
    x = rng.uniform(-2, W + 1, 50)
    y = rng.uniform(-2, H + 1, 50)
    x[:5] = np.round(x[:5])
    g = rng.normal(size=(50, C))
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    np.testing.assert_array_equal(kernels.bilinear_forward(img, x, y, impl=py),
                                  kernels.bilinear_forward(img, x, y, impl=cy))
    for a, b in zip(kernels.bilinear_backward(img, x, y, g, impl=py),
                    kernels.bilinear_backward(img, x, y, g, impl=cy)):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


@needs_ext
@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(1, 200), st.booleans(), st.integers(0, 2 ** 32 - 1))
def test_count_parity(N, n, inclusive, seed):
    rng = np.random.default_rng(seed)
    V = rng.uniform(-1, N + 1, n)
    V[: n // 2] = np.floor(V[: n // 2])
    g = rng.normal(size=N)
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    np.testing.assert_array_equal(kernels.count_forward(V, N, impl=py), kernels.count_forward(V, N, impl=cy))
    np.testing.assert_array_equal(kernels.count_backward(V, g, inclusive, impl=py),
                                  kernels.count_backward(V, g, inclusive, impl=cy))


@needs_ext
@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.sampled_from([1, 3, 5]), st.integers(0, 2 ** 32 - 1))
def test_deform_parity(G, n, seed):
    rng = np.random.default_rng(seed)
    C, H, W = 2 * G, 6, 7
    src = rng.normal(size=(C, H, W))
    off = rng.normal(scale=2.0, size=(G * 2 * n * n, H, W))
    w = rng.normal(size=(G, n * n))
    g = rng.normal(size=(C, H, W))
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    np.testing.assert_array_equal(kernels.deform_forward(src, off, w, impl=py),
                                  kernels.deform_forward(src, off, w, impl=cy))
    for a, b in zip(kernels.deform_backward(src, off, w, g, impl=py),
                    kernels.deform_backward(src, off, w, g, impl=cy)):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
