"""Compare the compiled kernels against the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 3] [--quick]

Prints median wall time per kernel for both backends and the speedup. Also
times one full CNN forward pass at the real sequence length (60,936 loci,
batch 16) with whatever backend is active.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from amrnet import _kernels
from amrnet.trees import GbtConfig, fit_gbt


def _time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def _cases(quick):
    rng = np.random.default_rng(0)
    L = 4096 if quick else 60936
    tokens = rng.integers(0, 5, (16, L), dtype=np.uint8)
    table = rng.standard_normal((7, 5, 128)).astype(np.float32)
    bias = np.zeros(128, dtype=np.float32)
    dy = rng.standard_normal((16, L, 128)).astype(np.float32)

    n, F = (300, 500) if quick else (650, 5000)
    X = rng.integers(0, 5, (n, F), dtype=np.uint8)
    rows = np.arange(n, dtype=np.int64)
    nodes = rng.integers(0, 8, n).astype(np.int64)
    feats = np.arange(F, dtype=np.int64)
    g, h = rng.standard_normal(n), rng.random(n)
    y = rng.integers(0, 2, n).astype(np.int8)
    w = np.ones(n)

    model = fit_gbt(X[:, :50], y, cfg=GbtConfig(n_rounds=20, max_depth=6, subsample=1, colsample=1))
    Xs = X[:, :50].copy()

    def shap(k):
        phi = np.zeros(Xs.shape)
        for t in model.trees:
            k.tree_shap_batch(t.feature, t.threshold, t.left, t.right, t.value, t.cover, Xs, phi, 0.05)

    return {
        "embed_conv_forward": lambda k: k.embed_conv_forward(tokens, table, bias),
        "embed_conv_backward": lambda k: k.embed_conv_backward(tokens, dy, 7),
        "gh_histogram": lambda k: k.gh_histogram(X, rows, nodes, feats, g, h, 8),
        "class_histogram": lambda k: k.class_histogram(X, rows, feats, y, w),
        "tree_shap_batch": shap,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="small inputs")
    args = ap.parse_args(argv)

    if _kernels.compiled is None:
        print("compiled extension not available; only the fallback is timed")
    print(f"{'kernel':<22}{'cython s':>12}{'python s':>12}{'speedup':>10}")
    for name, fn in _cases(args.quick).items():
        fast = _time(lambda: fn(_kernels.compiled), args.repeat) if _kernels.compiled else float("nan")
        slow = _time(lambda: fn(_kernels.fallback), args.repeat)
        print(f"{name:<22}{fast:>12.4f}{slow:>12.4f}{slow / fast:>10.1f}")

    if not args.quick:
        from amrnet.nn import build_amr_cnn

        model = build_amr_cnn(60936, seed=0)
        x = np.random.default_rng(1).integers(0, 5, (16, 60936), dtype=np.uint8)
        t = _time(lambda: model.forward(x, training=False), args.repeat)
        print(f"CNN forward, batch 16 x 60936 ({_kernels.BACKEND} backend): {t:.2f} s")


if __name__ == "__main__":
    main()
