"""The compiled kernels and the numpy fallback must agree."""

import numpy as np
import pytest

from amrnet import _kernels
from amrnet.trees import GbtConfig, fit_gbt

pytestmark = pytest.mark.skipif(_kernels.compiled is None, reason="compiled extension not built")

C, P = _kernels.compiled, _kernels.fallback


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("k", [1, 3, 7])
def test_embed_conv_forward_matches(dtype, k):
    rng = np.random.default_rng(k)
    tokens = rng.integers(0, 5, (3, 41), dtype=np.uint8)
    table = rng.standard_normal((k, 5, 6)).astype(dtype)
    bias = rng.standard_normal(6).astype(dtype)
    rtol = 1e-5 if dtype == np.float32 else 1e-12
    np.testing.assert_allclose(C.embed_conv_forward(tokens, table, bias),
                               P.embed_conv_forward(tokens, table, bias), rtol=rtol, atol=rtol)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("k", [1, 5])
def test_embed_conv_backward_matches(dtype, k):
    rng = np.random.default_rng(10 + k)
    tokens = rng.integers(0, 5, (2, 33), dtype=np.uint8)
    dy = rng.standard_normal((2, 33, 4)).astype(dtype)
    rtol = 1e-4 if dtype == np.float32 else 1e-12
    np.testing.assert_allclose(C.embed_conv_backward(tokens, dy, k),
                               P.embed_conv_backward(tokens, dy, k), rtol=rtol, atol=rtol)


def test_sequence_shorter_than_kernel():
    tokens = np.array([[0, 4]], dtype=np.uint8)
    table = np.arange(7 * 5 * 2, dtype=np.float64).reshape(7, 5, 2)
    bias = np.zeros(2)
    np.testing.assert_array_equal(C.embed_conv_forward(tokens, table, bias),
                                  P.embed_conv_forward(tokens, table, bias))


def test_gh_histogram_bit_identical():
    rng = np.random.default_rng(3)
    X = rng.integers(0, 5, (120, 30), dtype=np.uint8)
    rows = np.sort(rng.choice(120, 80, replace=False)).astype(np.int64)
    nodes = rng.integers(0, 4, 80).astype(np.int64)
    feats = np.sort(rng.choice(30, 12, replace=False)).astype(np.int64)
    g, h = rng.standard_normal(80), rng.random(80)
    gc, hc = C.gh_histogram(X, rows, nodes, feats, g, h, 4)
    gp, hp = P.gh_histogram(X, rows, nodes, feats, g, h, 4)
    np.testing.assert_array_equal(gc, gp)
    np.testing.assert_array_equal(hc, hp)


def test_gh_histogram_empty_rows():
    X = np.zeros((3, 2), dtype=np.uint8)
    empty = np.zeros(0, dtype=np.int64)
    gc, _ = C.gh_histogram(X, empty, empty, np.arange(2, dtype=np.int64), np.zeros(0), np.zeros(0), 2)
    assert gc.shape == (2, 2, 5) and not gc.any()


def test_class_histogram_bit_identical():
    rng = np.random.default_rng(4)
    X = rng.integers(0, 5, (90, 20), dtype=np.uint8)
    rows = np.arange(0, 90, 2, dtype=np.int64)
    feats = np.array([0, 3, 19], dtype=np.int64)
    y = rng.integers(0, 2, 45).astype(np.int8)
    w = rng.random(45)
    np.testing.assert_array_equal(C.class_histogram(X, rows, feats, y, w),
                                  P.class_histogram(X, rows, feats, y, w))


def test_class_histogram_totals():
    rng = np.random.default_rng(5)
    X = rng.integers(0, 5, (50, 4), dtype=np.uint8)
    y = rng.integers(0, 2, 50).astype(np.int8)
    hist = C.class_histogram(X, np.arange(50, dtype=np.int64), np.arange(4, dtype=np.int64), y, np.ones(50))
    np.testing.assert_array_equal(hist.sum(axis=1), np.tile([np.sum(y == 0), np.sum(y == 1)], (4, 1)))


def test_tree_shap_batch_matches():
    rng = np.random.default_rng(6)
    X = rng.integers(0, 5, (80, 8), dtype=np.uint8)
    y = (X[:, 0] + X[:, 3] > 4).astype(int)
    model = fit_gbt(X, y, cfg=GbtConfig(n_rounds=10, max_depth=4, subsample=1, colsample=1))
    phis = []
    for k in (C, P):
        phi = np.zeros(X.shape)
        for t in model.trees:
            k.tree_shap_batch(t.feature, t.threshold, t.left, t.right, t.value, t.cover, X, phi, 0.05)
        phis.append(phi)
    np.testing.assert_allclose(phis[0], phis[1], rtol=1e-12, atol=1e-14)


def test_active_backend_reported():
    assert _kernels.BACKEND in ("cython", "python")
    assert (_kernels.BACKEND == "cython") == (_kernels.compiled is not None)
