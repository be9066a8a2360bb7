"""Forward/backward pairs for every layer of the SNP CNN.

Activations use a channels-last layout: sequences are ``(batch, length,
channels)``. Each ``*_forward`` returns the output plus whatever its
``*_backward`` needs; nothing here holds state.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .. import _kernels
from ..data import ClassWeights
from ..errors import InputError, StructuralError

N_TOKENS = 5
PROB_EPS = 1e-7

# rows of an im2col chunk are sized so a chunk stays around 8 MB
_CHUNK_ELEMS = 1 << 21


# --------------------------------------------------------------------------
# embedding


def _check_tokens(tokens, n_rows):
    tokens = np.asarray(tokens)
    if tokens.size and (tokens.min() < 0 or tokens.max() >= n_rows):
        raise InputError(f"token outside 0..{n_rows - 1}")
    return tokens


def embedding_forward(tokens, table):
    """Row lookup: ``(B, L)`` integer tokens -> ``(B, L, D)``."""
    tokens = _check_tokens(tokens, table.shape[0])
    return table[tokens]


def embedding_backward(tokens, dout, n_rows=N_TOKENS):
    """Gradient w.r.t. the table; only looked-up rows receive mass."""
    D = dout.shape[-1]
    flat = np.asarray(tokens).reshape(-1).astype(np.intp)
    dtable = np.zeros((n_rows, D), dtype=dout.dtype)
    for r in range(n_rows):
        sel = flat == r
        if sel.any():
            dtable[r] = dout.reshape(-1, D)[sel].sum(axis=0)
    return dtable


# --------------------------------------------------------------------------
# convolution


def _check_conv(x, kernel, bias):
    if x.ndim != 3 or kernel.ndim != 3:
        raise StructuralError("conv1d expects x (B, L, Cin) and kernel (k, Cin, Cout)")
    k, cin, cout = kernel.shape
    if k % 2 == 0:
        raise StructuralError(f"kernel size {k} must be odd for same padding")
    if x.shape[2] != cin:
        raise StructuralError(f"input has {x.shape[2]} channels, kernel expects {cin}")
    if bias.shape != (cout,):
        raise StructuralError(f"bias shape {bias.shape} != ({cout},)")


def _windows(xp, k):
    """Overlapping ``(L, k*Cin)`` view of a padded, C-contiguous ``(L+k-1, Cin)``."""
    Lp, cin = xp.shape
    return as_strided(xp, shape=(Lp - k + 1, k * cin), strides=xp.strides, writeable=False)


def _pad(x, k):
    B, L, C = x.shape
    pad = (k - 1) // 2
    xp = np.zeros((B, L + k - 1, C), dtype=x.dtype)
    xp[:, pad : pad + L] = x
    return xp


def conv1d_forward(x, kernel, bias):
    """Same-padded cross-correlation.

    ``out[b, l, o] = bias[o] + sum_{t, c} xpad[b, l + t, c] * kernel[t, c, o]``
    with ``(k - 1) / 2`` zeros on each side.
    """
    _check_conv(x, kernel, bias)
    B, L, cin = x.shape
    k, _, cout = kernel.shape
    xp = _pad(x, k)
    W = kernel.reshape(k * cin, cout)
    out = np.empty((B, L, cout), dtype=np.result_type(x, kernel))
    step = max(1, _CHUNK_ELEMS // (k * cin))
    for b in range(B):
        win = _windows(xp[b], k)
        for s in range(0, L, step):
            e = min(L, s + step)
            np.matmul(np.ascontiguousarray(win[s:e]), W, out=out[b, s:e])
    out += bias
    return out


def conv1d_backward(x, kernel, dout):
    """Returns ``(dx, dkernel, dbias)``."""
    B, L, cin = x.shape
    k, _, cout = kernel.shape
    pad = (k - 1) // 2
    xp = _pad(x, k)
    W = kernel.reshape(k * cin, cout)
    dW = np.zeros_like(W)
    dxp = np.zeros_like(xp)
    step = max(1, _CHUNK_ELEMS // (k * cin))
    for b in range(B):
        win = _windows(xp[b], k)
        for s in range(0, L, step):
            e = min(L, s + step)
            g = dout[b, s:e]
            dW += np.ascontiguousarray(win[s:e]).T @ g
            dcol = g @ W.T
            for t in range(k):
                dxp[b, s + t : e + t] += dcol[:, t * cin : (t + 1) * cin]
    return dxp[:, pad : pad + L], dW.reshape(kernel.shape), dout.sum(axis=(0, 1))


def embed_conv_forward(tokens, table, kernel, bias):
    """``conv1d(embedding(tokens))`` without materializing the embedding.

    With a five-token vocabulary every tap reduces to a lookup in
    ``table @ kernel[t]``, so the first block costs O(B*L*k*Cout) instead of
    O(B*L*k*D*Cout).
    """
    tokens = _check_tokens(tokens, table.shape[0])
    if kernel.shape[0] % 2 == 0:
        raise StructuralError("kernel size must be odd")
    if kernel.shape[1] != table.shape[1]:
        raise StructuralError("embedding width does not match kernel input channels")
    taps = np.ascontiguousarray(np.einsum("ve,kec->kvc", table, kernel), dtype=kernel.dtype)
    return _kernels.embed_conv_forward(_as_u8(tokens), taps, np.ascontiguousarray(bias))


def embed_conv_backward(tokens, table, kernel, dout):
    """Returns ``(dtable, dkernel, dbias)`` for :func:`embed_conv_forward`."""
    k = kernel.shape[0]
    scatter = _kernels.embed_conv_backward(_as_u8(tokens), np.ascontiguousarray(dout), k)
    dkernel = np.einsum("ve,kvc->kec", table, scatter)
    dtable = np.einsum("kvc,kec->ve", scatter, kernel)
    return dtable, dkernel, dout.sum(axis=(0, 1))


def _as_u8(tokens):
    return np.ascontiguousarray(tokens, dtype=np.uint8)


# --------------------------------------------------------------------------
# batch normalization


def batchnorm_forward(
    x, scale, shift, running_mean, running_var, training, momentum=0.9, eps=1e-5
):
    """Per-channel normalization over every axis but the last.

    In training mode batch statistics are used and the running buffers are
    updated in place as ``running = momentum * running + (1 - momentum) * batch``.
    """
    axes = tuple(range(x.ndim - 1))
    if x.shape[-1] != scale.shape[0]:
        raise StructuralError("channel count does not match batchnorm parameters")
    if not training:
        inv = 1.0 / np.sqrt(running_var + eps)
        return x * (scale * inv) + (shift - running_mean * scale * inv), None
    if x.size == 0:
        raise InputError("batchnorm in training mode needs a non-empty batch")
    mean = x.mean(axis=axes)
    var = x.var(axis=axes)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv
    running_mean *= momentum
    running_mean += (1 - momentum) * mean
    running_var *= momentum
    running_var += (1 - momentum) * var
    return xhat * scale + shift, (xhat, inv, scale)


def batchnorm_backward(dout, cache):
    """Returns ``(dx, dscale, dshift)``."""
    xhat, inv, scale = cache
    axes = tuple(range(dout.ndim - 1))
    n = dout.size // dout.shape[-1]
    dshift = dout.sum(axis=axes)
    dscale = (dout * xhat).sum(axis=axes)
    dx = (scale * inv / n) * (n * dout - dshift - xhat * dscale)
    return dx, dscale, dshift


# --------------------------------------------------------------------------
# pooling, activations, dense, dropout


def maxpool1d_forward(x, pool=2, need_cache=True):
    """Non-overlapping max pool along the length axis; an odd tail is dropped.

    The cache records, per output cell, which slot of the window won (first
    occurrence on ties).
    """
    B, L, C = x.shape
    if pool > L:
        raise StructuralError(f"pool size {pool} exceeds sequence length {L}")
    Lo = L // pool
    out = x[:, 0 : Lo * pool : pool].copy()
    arg = np.zeros(out.shape, dtype=np.int8) if need_cache else None
    for j in range(1, pool):
        cand = x[:, j : Lo * pool : pool]
        if need_cache:
            arg[cand > out] = j
        np.maximum(out, cand, out=out)
    return out, (arg, L, pool)


def maxpool1d_backward(dout, cache):
    arg, L, pool = cache
    B, Lo, C = dout.shape
    dx = np.zeros((B, L, C), dtype=dout.dtype)
    for j in range(pool):
        dx[:, j : Lo * pool : pool] = np.where(arg == j, dout, 0)
    return dx


def global_maxpool_forward(x):
    """``(B, L, C)`` -> ``(B, C)``; gradient goes to the first maximum."""
    arg = x.argmax(axis=1)
    return np.take_along_axis(x, arg[:, None, :], axis=1)[:, 0, :], (arg, x.shape)


def global_maxpool_backward(dout, cache):
    arg, shape = cache
    dx = np.zeros(shape, dtype=dout.dtype)
    np.put_along_axis(dx, arg[:, None, :], dout[:, None, :], axis=1)
    return dx


def relu_forward(x):
    return np.maximum(x, 0), x > 0


def relu_backward(dout, mask):
    return dout * mask


def dense_forward(x, W, b):
    if x.shape[-1] != W.shape[0]:
        raise StructuralError(f"dense input width {x.shape[-1]} != {W.shape[0]}")
    return x @ W + b


def dense_backward(x, W, dout):
    """Returns ``(dx, dW, db)``."""
    return dout @ W.T, x.T @ dout, dout.sum(axis=0)


def dropout_forward(x, rate, training, rng):
    """Inverted dropout; the identity outside training."""
    if not training or rate <= 0:
        return x, None
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * keep, keep


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


def sigmoid(x):
    x = np.asarray(x)
    out = np.empty_like(x, dtype=np.result_type(x, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(dout, out):
    return dout * out * (1.0 - out)


# --------------------------------------------------------------------------
# loss


def _per_sample_weights(y, w):
    if w is None:
        return np.ones(len(y))
    if isinstance(w, ClassWeights):
        return w.sample_weights(y)
    return np.asarray(w, dtype=np.float64)


def weighted_bce(p, y, w=None):
    """Class-weighted binary cross-entropy.

    ``loss = -mean_i w_i [y_i log p_i + (1 - y_i) log(1 - p_i)]`` with ``p``
    clamped to ``[1e-7, 1 - 1e-7]``. Returns ``(loss, dloss/dp)``; the
    gradient is zero where the clamp is active.
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise InputError(f"probabilities {p.shape} and labels {y.shape} differ in shape")
    sw = _per_sample_weights(y, w)
    pc = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    n = max(len(p), 1)
    loss = -np.sum(sw * (y * np.log(pc) + (1 - y) * np.log1p(-pc))) / n
    grad = -sw * (y / pc - (1 - y) / (1 - pc)) / n
    grad = np.where((p > PROB_EPS) & (p < 1.0 - PROB_EPS), grad, 0.0)
    return float(loss), grad


def weighted_bce_logits_grad(p, y, w=None):
    """dloss/dlogit for ``p = sigmoid(logit)``: ``w_i (p_i - y_i) / n``."""
    y = np.asarray(y, dtype=np.float64)
    sw = _per_sample_weights(y, w)
    return sw * (np.asarray(p, dtype=np.float64) - y) / max(len(y), 1)
