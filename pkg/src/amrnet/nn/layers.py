"""Stateful layer wrappers around :mod:`amrnet.nn.ops`.

A layer keeps its parameters and, while training, the cache from its last
forward call so ``backward`` can run without arguments besides the upstream
gradient.
"""

from __future__ import annotations

import numpy as np

from . import ops


class Parameter:
    """A trainable array, its gradient and its L2 coefficient."""

    __slots__ = ("name", "value", "grad", "l2")

    def __init__(self, name, value, l2=0.0):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)
        self.l2 = float(l2)

    def zero_grad(self):
        self.grad.fill(0)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape}, l2={self.l2})"


class Layer:
    def parameters(self):
        return []

    def buffers(self):
        """Non-trainable state that still has to be serialized."""
        return {}

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


def _he_uniform(rng, shape, fan_in, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Embedding(Layer):
    def __init__(self, n_tokens, dim, rng, dtype=np.float32):
        self.table = Parameter("embedding", rng.uniform(-0.05, 0.05, (n_tokens, dim)).astype(dtype))
        self._tokens = None

    def parameters(self):
        return [self.table]

    def forward(self, x, training=False):
        self._tokens = x if training else None
        return ops.embedding_forward(x, self.table.value)

    def backward(self, dout):
        self.table.grad += ops.embedding_backward(self._tokens, dout, self.table.value.shape[0])
        return None


class Conv1D(Layer):
    def __init__(self, name, cin, cout, k, rng, l2=0.0, dtype=np.float32):
        self.kernel = Parameter(f"{name}.kernel", _he_uniform(rng, (k, cin, cout), k * cin, dtype), l2)
        self.bias = Parameter(f"{name}.bias", np.zeros(cout, dtype=dtype))
        self._x = None

    def parameters(self):
        return [self.kernel, self.bias]

    def forward(self, x, training=False):
        self._x = x if training else None
        return ops.conv1d_forward(x, self.kernel.value, self.bias.value)

    def backward(self, dout):
        dx, dk, db = ops.conv1d_backward(self._x, self.kernel.value, dout)
        self.kernel.grad += dk
        self.bias.grad += db
        self._x = None
        return dx


class EmbedConv1D(Layer):
    """Embedding followed by the first convolution, evaluated as one lookup."""

    def __init__(self, n_tokens, dim, cout, k, rng, l2=0.0, dtype=np.float32):
        self.embedding = Embedding(n_tokens, dim, rng, dtype)
        self.conv = Conv1D("block1.conv", dim, cout, k, rng, l2, dtype)
        self._tokens = None

    def parameters(self):
        return [self.embedding.table, self.conv.kernel, self.conv.bias]

    def forward(self, x, training=False):
        self._tokens = x if training else None
        return ops.embed_conv_forward(
            x, self.embedding.table.value, self.conv.kernel.value, self.conv.bias.value
        )

    def backward(self, dout):
        dt, dk, db = ops.embed_conv_backward(
            self._tokens, self.embedding.table.value, self.conv.kernel.value, dout
        )
        self.embedding.table.grad += dt
        self.conv.kernel.grad += dk
        self.conv.bias.grad += db
        self._tokens = None
        return None


class BatchNorm(Layer):
    def __init__(self, name, channels, momentum=0.9, eps=1e-5, dtype=np.float32):
        self.name = name
        self.scale = Parameter(f"{name}.scale", np.ones(channels, dtype=dtype))
        self.shift = Parameter(f"{name}.shift", np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps
        self._cache = None

    def parameters(self):
        return [self.scale, self.shift]

    def buffers(self):
        return {f"{self.name}.running_mean": self.running_mean, f"{self.name}.running_var": self.running_var}

    def forward(self, x, training=False):
        out, self._cache = ops.batchnorm_forward(
            x, self.scale.value, self.shift.value, self.running_mean, self.running_var,
            training, self.momentum, self.eps,
        )
        return out

    def backward(self, dout):
        dx, ds, db = ops.batchnorm_backward(dout, self._cache)
        self.scale.grad += ds
        self.shift.grad += db
        self._cache = None
        return dx


class ReLU(Layer):
    def forward(self, x, training=False):
        if not training:
            return np.maximum(x, 0, out=x if x.flags.writeable else None)
        out, self._mask = ops.relu_forward(x)
        return out

    def backward(self, dout):
        return ops.relu_backward(dout, self._mask)


class MaxPool1D(Layer):
    def __init__(self, pool=2):
        self.pool = pool

    def forward(self, x, training=False):
        out, cache = ops.maxpool1d_forward(x, self.pool, need_cache=training)
        self._cache = cache if training else None
        return out

    def backward(self, dout):
        return ops.maxpool1d_backward(dout, self._cache)


class GlobalMaxPool(Layer):
    def forward(self, x, training=False):
        out, cache = ops.global_maxpool_forward(x)
        self._cache = cache if training else None
        return out

    def backward(self, dout):
        return ops.global_maxpool_backward(dout, self._cache)


class Dense(Layer):
    def __init__(self, name, nin, nout, rng, l2=0.0, dtype=np.float32):
        self.W = Parameter(f"{name}.kernel", _he_uniform(rng, (nin, nout), nin, dtype), l2)
        self.b = Parameter(f"{name}.bias", np.zeros(nout, dtype=dtype))

    def parameters(self):
        return [self.W, self.b]

    def forward(self, x, training=False):
        self._x = x if training else None
        return ops.dense_forward(x, self.W.value, self.b.value)

    def backward(self, dout):
        dx, dW, db = ops.dense_backward(self._x, self.W.value, dout)
        self.W.grad += dW
        self.b.grad += db
        return dx


class Dropout(Layer):
    def __init__(self, rate, rng):
        self.rate = rate
        self.rng = rng

    def forward(self, x, training=False):
        out, self._mask = ops.dropout_forward(x, self.rate, training, self.rng)
        return out

    def backward(self, dout):
        return ops.dropout_backward(dout, self._mask)
