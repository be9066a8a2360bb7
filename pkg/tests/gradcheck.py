"""Central finite-difference checks for every CNN layer and the loss.

Each ``check_*`` draws a random shape from ``seed``, builds a scalar loss
``sum(r * layer(inputs))`` with a fixed random projection ``r``, and returns
the worst relative error between the analytic and numeric gradients over
all inputs and parameters. Everything runs in float64 with ``h = 1e-5``.
"""

from __future__ import annotations

import numpy as np

from amrnet.data import ClassWeights
from amrnet.nn import ops
from oracles import max_rel_error, numeric_grad

H = 1e-5


def _worst(pairs):
    return max(max_rel_error(a, n) for a, n in pairs)


def check_embedding(seed):
    rng = np.random.default_rng(seed)
    B, L, D = rng.integers(1, 4), rng.integers(2, 9), rng.integers(1, 6)
    tokens = rng.integers(0, 5, (B, L))
    table = rng.standard_normal((5, D))
    r = rng.standard_normal((B, L, D))
    f = lambda: float(np.sum(r * ops.embedding_forward(tokens, table)))  # noqa: E731
    return _worst([(ops.embedding_backward(tokens, r), numeric_grad(f, table, H))])


def check_conv1d(seed):
    rng = np.random.default_rng(seed)
    B, L = rng.integers(1, 4), rng.integers(1, 10)
    cin, cout, k = rng.integers(1, 5), rng.integers(1, 5), int(rng.choice([1, 3, 5, 7]))
    x = rng.standard_normal((B, L, cin))
    kern = rng.standard_normal((k, cin, cout))
    bias = rng.standard_normal(cout)
    r = rng.standard_normal((B, L, cout))
    f = lambda: float(np.sum(r * ops.conv1d_forward(x, kern, bias)))  # noqa: E731
    dx, dk, db = ops.conv1d_backward(x, kern, r)
    return _worst([(dx, numeric_grad(f, x, H)), (dk, numeric_grad(f, kern, H)), (db, numeric_grad(f, bias, H))])


def check_embed_conv(seed):
    rng = np.random.default_rng(seed)
    B, L = rng.integers(1, 4), rng.integers(1, 10)
    D, cout, k = rng.integers(1, 5), rng.integers(1, 5), int(rng.choice([1, 3, 5, 7]))
    tokens = rng.integers(0, 5, (B, L)).astype(np.uint8)
    table = rng.standard_normal((5, D))
    kern = rng.standard_normal((k, D, cout))
    bias = rng.standard_normal(cout)
    r = rng.standard_normal((B, L, cout))
    f = lambda: float(np.sum(r * ops.embed_conv_forward(tokens, table, kern, bias)))  # noqa: E731
    dt, dk, db = ops.embed_conv_backward(tokens, table, kern, r)
    return _worst([(dt, numeric_grad(f, table, H)), (dk, numeric_grad(f, kern, H)), (db, numeric_grad(f, bias, H))])


def check_batchnorm(seed):
    rng = np.random.default_rng(seed)
    B, L, C = rng.integers(2, 4), rng.integers(1, 6), rng.integers(1, 5)
    x = rng.standard_normal((B, L, C)) * rng.uniform(0.5, 3) + rng.uniform(-2, 2)
    scale = rng.uniform(0.5, 2, C)
    shift = rng.standard_normal(C)
    r = rng.standard_normal((B, L, C))

    def f():
        out, _ = ops.batchnorm_forward(x, scale, shift, np.zeros(C), np.ones(C), True)
        return float(np.sum(r * out))

    _, cache = ops.batchnorm_forward(x, scale, shift, np.zeros(C), np.ones(C), True)
    dx, ds, db = ops.batchnorm_backward(r, cache)
    return _worst([(dx, numeric_grad(f, x, H)), (ds, numeric_grad(f, scale, H)), (db, numeric_grad(f, shift, H))])


def check_maxpool(seed):
    rng = np.random.default_rng(seed)
    B, C, pool = rng.integers(1, 4), rng.integers(1, 4), int(rng.choice([2, 3]))
    L = rng.integers(pool, 12)
    x = rng.permutation(B * L * C).reshape(B, L, C) / 7.0  # distinct values, no ties
    Lo = L // pool
    r = rng.standard_normal((B, Lo, C))
    f = lambda: float(np.sum(r * ops.maxpool1d_forward(x, pool)[0]))  # noqa: E731
    _, cache = ops.maxpool1d_forward(x, pool)
    return _worst([(ops.maxpool1d_backward(r, cache), numeric_grad(f, x, H))])


def check_global_maxpool(seed):
    rng = np.random.default_rng(seed)
    B, L, C = rng.integers(1, 4), rng.integers(1, 9), rng.integers(1, 4)
    x = rng.permutation(B * L * C).reshape(B, L, C) / 7.0
    r = rng.standard_normal((B, C))
    f = lambda: float(np.sum(r * ops.global_maxpool_forward(x)[0]))  # noqa: E731
    _, cache = ops.global_maxpool_forward(x)
    return _worst([(ops.global_maxpool_backward(r, cache), numeric_grad(f, x, H))])


def check_relu(seed):
    rng = np.random.default_rng(seed)
    shape = tuple(rng.integers(1, 5, size=3))
    x = rng.standard_normal(shape)
    x[np.abs(x) < 1e-3] = 0.5  # keep away from the kink
    r = rng.standard_normal(shape)
    f = lambda: float(np.sum(r * ops.relu_forward(x)[0]))  # noqa: E731
    _, mask = ops.relu_forward(x)
    return _worst([(ops.relu_backward(r, mask), numeric_grad(f, x, H))])


def check_dense(seed):
    rng = np.random.default_rng(seed)
    B, nin, nout = rng.integers(1, 5), rng.integers(1, 6), rng.integers(1, 6)
    x = rng.standard_normal((B, nin))
    W = rng.standard_normal((nin, nout))
    b = rng.standard_normal(nout)
    r = rng.standard_normal((B, nout))
    f = lambda: float(np.sum(r * ops.dense_forward(x, W, b)))  # noqa: E731
    dx, dW, db = ops.dense_backward(x, W, r)
    return _worst([(dx, numeric_grad(f, x, H)), (dW, numeric_grad(f, W, H)), (db, numeric_grad(f, b, H))])


def check_dropout(seed):
    rng = np.random.default_rng(seed)
    shape = tuple(rng.integers(1, 6, size=2))
    x = rng.standard_normal(shape)
    rate = rng.uniform(0.1, 0.6)
    r = rng.standard_normal(shape)
    f = lambda: float(np.sum(r * ops.dropout_forward(x, rate, True, np.random.default_rng(seed))[0]))  # noqa: E731
    _, mask = ops.dropout_forward(x, rate, True, np.random.default_rng(seed))
    return _worst([(ops.dropout_backward(r, mask), numeric_grad(f, x, H))])


def check_sigmoid(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(rng.integers(1, 12)) * 4
    r = rng.standard_normal(x.shape)
    f = lambda: float(np.sum(r * ops.sigmoid(x)))  # noqa: E731
    return _worst([(ops.sigmoid_backward(r, ops.sigmoid(x)), numeric_grad(f, x, H))])


def check_weighted_bce(seed):
    rng = np.random.default_rng(seed)
    n = rng.integers(1, 20)
    p = rng.uniform(0.02, 0.98, n)
    y = rng.integers(0, 2, n)
    w = ClassWeights(*rng.uniform(0.3, 3, 2))
    f = lambda: ops.weighted_bce(p, y, w)[0]  # noqa: E731
    return _worst([(ops.weighted_bce(p, y, w)[1], numeric_grad(f, p, H))])


def check_bce_logits(seed):
    rng = np.random.default_rng(seed)
    n = rng.integers(1, 20)
    z = rng.standard_normal(n) * 3
    y = rng.integers(0, 2, n)
    w = ClassWeights(*rng.uniform(0.3, 3, 2))
    f = lambda: ops.weighted_bce(ops.sigmoid(z), y, w)[0]  # noqa: E731
    return _worst([(ops.weighted_bce_logits_grad(ops.sigmoid(z), y, w), numeric_grad(f, z, H))])


CHECKS = {
    "embedding": check_embedding,
    "conv1d": check_conv1d,
    "embed_conv": check_embed_conv,
    "batchnorm": check_batchnorm,
    "maxpool1d": check_maxpool,
    "global_maxpool": check_global_maxpool,
    "relu": check_relu,
    "dense": check_dense,
    "dropout": check_dropout,
    "sigmoid": check_sigmoid,
    "weighted_bce": check_weighted_bce,
    "bce_logits": check_bce_logits,
}
