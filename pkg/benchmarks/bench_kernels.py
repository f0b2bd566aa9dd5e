"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--size 64]

Prints one row per kernel with the best wall time of each backend and the
speed-up.  Requires the extension to be built; otherwise only the fallback
column is filled.
"""
import argparse
import timeit

import numpy as np

from xvc import kernels


def workloads(size, rng):
    H = W = size
    img = rng.normal(size=(H, W, 3))
    x = rng.uniform(-1, W, H * W)
    y = rng.uniform(-1, H, H * W)
    g = rng.normal(size=(H * W, 3))
    N = size ** 2
    V = rng.integers(0, N, 20 * N).astype(float)
    V[::2] += rng.uniform(0.01, 0.99, V[::2].shape)
    gN = rng.normal(size=N)
    G, n = 8, 3
    src = rng.normal(size=(2 * G, H // 2, W // 2))
    off = rng.normal(scale=1.5, size=(G * 2 * n * n, H // 2, W // 2))
    w = rng.normal(size=(G, n * n))
    gd = rng.normal(size=src.shape)
    return {
        "bilinear_forward": lambda m: kernels.bilinear_forward(img, x, y, impl=m),
        "bilinear_backward": lambda m: kernels.bilinear_backward(img, x, y, g, impl=m),
        "count_forward": lambda m: kernels.count_forward(V, N, impl=m),
        "count_backward": lambda m: kernels.count_backward(V, gN, False, impl=m),
        "deform_forward": lambda m: kernels.deform_forward(src, off, w, impl=m),
        "deform_backward": lambda m: kernels.deform_backward(src, off, w, gd, impl=m),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=64, help="image side in pixels")
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    jobs = workloads(args.size, np.random.default_rng(0))
    print(f"{'kernel':<18} {'python ms':>10} {'cython ms':>10} {'speed-up':>9}")
    for name, fn in jobs.items():
        best = {}
        for label, mod in backends.items():
            t = timeit.Timer(lambda: fn(mod))
            number = max(1, t.autorange()[0] // 4)
            best[label] = min(t.repeat(args.repeat, number)) / number * 1e3
        py = best["python"]
        cy = best.get("cython")
        cy_txt = f"{cy:10.3f}" if cy is not None else f"{'n/a':>10}"
        ratio = f"{py / cy:8.1f}x" if cy else f"{'':>9}"
        print(f"{name:<18} {py:10.3f} {cy_txt} {ratio}")


if __name__ == "__main__":
    main()
