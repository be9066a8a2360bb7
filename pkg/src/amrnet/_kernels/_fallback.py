"""Pure numpy/Python versions of the hot kernels.

Each function here has a compiled twin in ``_ext.pyx`` with the same
signature. Histogram kernels accumulate in row-major (row, feature) order so
both backends produce bit-identical sums.
"""

import numpy as np

N_TOKENS = 5

# rows per bincount chunk; bounds temporary memory on wide matrices
_CHUNK_CELLS = 1 << 22


def embed_conv_forward(tokens, table, bias):
    """``out[b, l] = bias + sum_t table[t, tokens[b, l + t - pad]]``.

    ``table`` has shape (k, 5, C); out-of-range taps contribute nothing
    (zero padding of the embedded sequence).
    """
    B, L = tokens.shape
    k, _, C = table.shape
    pad = (k - 1) // 2
    out = np.empty((B, L, C), dtype=table.dtype)
    out[...] = bias
    tok = tokens.astype(np.intp)
    for t in range(k):
        shift = t - pad
        lo, hi = max(0, -shift), min(L, L - shift)
        if lo >= hi:
            continue
        out[:, lo:hi] += table[t][tok[:, lo + shift : hi + shift]]
    return out


def embed_conv_backward(tokens, dy, k):
    """Scatter ``dy`` by token: ``S[t, v] = sum of dy[b, l]`` where the tap
    ``t`` of position ``l`` reads token ``v``."""
    B, L, C = dy.shape
    pad = (k - 1) // 2
    out = np.zeros((k, N_TOKENS, C), dtype=dy.dtype)
    tok = tokens.astype(np.intp)
    for t in range(k):
        shift = t - pad
        lo, hi = max(0, -shift), min(L, L - shift)
        if lo >= hi:
            continue
        src = tok[:, lo + shift : hi + shift].reshape(-1)
        rows = dy[:, lo:hi].reshape(-1, C)
        onehot = np.zeros((N_TOKENS, src.size), dtype=dy.dtype)
        onehot[src, np.arange(src.size)] = 1
        out[t] = onehot @ rows
    return out


def gh_histogram(X, rows, nodes, features, g, h, n_nodes):
    """Per-node, per-feature, per-token sums of gradient and hessian.

    Returns two arrays of shape (n_nodes, len(features), 5).
    """
    nf = len(features)
    G = np.zeros(n_nodes * nf * N_TOKENS)
    H = np.zeros(n_nodes * nf * N_TOKENS)
    if nf == 0 or len(rows) == 0:
        return G.reshape(n_nodes, nf, N_TOKENS), H.reshape(n_nodes, nf, N_TOKENS)
    feat_off = (np.arange(nf, dtype=np.intp) * N_TOKENS)[None, :]
    step = max(1, _CHUNK_CELLS // nf)
    for start in range(0, len(rows), step):
        r = rows[start : start + step]
        sub = X[np.ix_(r, features)].astype(np.intp)
        base = (nodes[start : start + step].astype(np.intp) * (nf * N_TOKENS))[:, None]
        idx = (base + feat_off + sub).ravel()
        G += np.bincount(idx, weights=np.repeat(g[start : start + step], nf), minlength=G.size)
        H += np.bincount(idx, weights=np.repeat(h[start : start + step], nf), minlength=H.size)
    return G.reshape(n_nodes, nf, N_TOKENS), H.reshape(n_nodes, nf, N_TOKENS)


def class_histogram(X, rows, features, y, weight):
    """Weighted class counts per (feature, token): shape (nf, 5, 2)."""
    nf = len(features)
    out = np.zeros(nf * N_TOKENS * 2)
    if nf == 0 or len(rows) == 0:
        return out.reshape(nf, N_TOKENS, 2)
    sub = X[np.ix_(rows, features)].astype(np.intp)
    idx = (np.arange(nf, dtype=np.intp) * (N_TOKENS * 2))[None, :] + sub * 2 + y.astype(np.intp)[:, None]
    out += np.bincount(idx.ravel(), weights=np.repeat(weight, nf), minlength=out.size)
    return out.reshape(nf, N_TOKENS, 2)


# --------------------------------------------------------------------------
# TreeSHAP (path-dependent), one tree at a time


class _Path:
    __slots__ = ("feature", "zero", "one", "weight")

    def __init__(self):
        self.feature = []
        self.zero = []
        self.one = []
        self.weight = []

    def copy(self):
        p = _Path()
        p.feature = self.feature[:]
        p.zero = self.zero[:]
        p.one = self.one[:]
        p.weight = self.weight[:]
        return p

    def extend(self, zero, one, feature):
        d = len(self.weight)
        self.feature.append(feature)
        self.zero.append(zero)
        self.one.append(one)
        self.weight.append(1.0 if d == 0 else 0.0)
        w = self.weight
        for i in range(d - 1, -1, -1):
            w[i + 1] += one * w[i] * (i + 1) / (d + 1)
            w[i] = zero * w[i] * (d - i) / (d + 1)

    def unwind(self, k):
        d = len(self.weight) - 1
        one, zero = self.one[k], self.zero[k]
        w = self.weight
        nxt = w[d]
        for i in range(d - 1, -1, -1):
            if one != 0:
                tmp = w[i]
                w[i] = nxt * (d + 1) / ((i + 1) * one)
                nxt = tmp - w[i] * zero * (d - i) / (d + 1)
            else:
                w[i] = w[i] * (d + 1) / (zero * (d - i))
        for lst in (self.feature, self.zero, self.one):
            del lst[k]
        w.pop()

    def unwound_sum(self, k):
        d = len(self.weight) - 1
        one, zero = self.one[k], self.zero[k]
        w = self.weight
        total = 0.0
        if one != 0:
            nxt = w[d]
            for i in range(d - 1, -1, -1):
                tmp = nxt * (d + 1) / ((i + 1) * one)
                total += tmp
                nxt = w[i] - tmp * zero * (d - i) / (d + 1)
        else:
            for i in range(d - 1, -1, -1):
                total += w[i] * (d + 1) / (zero * (d - i))
        return total


def tree_shap(feature, threshold, left, right, value, cover, x, phi, scale):
    """Add ``scale`` times the exact path-dependent SHAP values of one tree
    for sample ``x`` into ``phi`` (in place)."""

    def recurse(node, path, zero, one, feat):
        path.extend(zero, one, feat)
        if left[node] < 0:
            v = value[node] * scale
            for i in range(1, len(path.weight)):
                w = path.unwound_sum(i)
                phi[path.feature[i]] += w * (path.one[i] - path.zero[i]) * v
            return
        f = feature[node]
        if x[f] <= threshold[node]:
            hot, cold = left[node], right[node]
        else:
            hot, cold = right[node], left[node]
        in_zero, in_one = 1.0, 1.0
        if f in path.feature:
            k = path.feature.index(f)
            in_zero, in_one = path.zero[k], path.one[k]
            path.unwind(k)
        c = cover[node]
        recurse(hot, path.copy(), in_zero * cover[hot] / c, in_one, f)
        recurse(cold, path.copy(), in_zero * cover[cold] / c, 0.0, f)

    recurse(0, _Path(), 1.0, 1.0, -1)


def tree_shap_batch(feature, threshold, left, right, value, cover, X, phi, scale):
    for i in range(X.shape[0]):
        tree_shap(feature, threshold, left, right, value, cover, X[i], phi[i], scale)
