# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; signatures mirror ``_fallback.py``."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport calloc, free

cnp.import_array()

ctypedef fused real_t:
    float
    double

cdef enum:
    N_TOKENS = 5


def embed_conv_forward(const unsigned char[:, ::1] tokens, real_t[:, :, ::1] table, real_t[::1] bias):
    cdef Py_ssize_t B = tokens.shape[0], L = tokens.shape[1]
    cdef Py_ssize_t k = table.shape[0], C = table.shape[2]
    cdef Py_ssize_t pad = (k - 1) // 2
    cdef Py_ssize_t b, l, t, c, src
    cdef real_t *row
    cdef real_t *tap
    dtype = np.float32 if real_t is float else np.float64
    out_arr = np.empty((B, L, C), dtype=dtype)
    cdef real_t[:, :, ::1] out = out_arr
    with nogil:
        for b in range(B):
            for l in range(L):
                row = &out[b, l, 0]
                for c in range(C):
                    row[c] = bias[c]
                for t in range(k):
                    src = l + t - pad
                    if src < 0 or src >= L:
                        continue
                    tap = &table[t, tokens[b, src], 0]
                    for c in range(C):
                        row[c] += tap[c]
    return out_arr


def embed_conv_backward(const unsigned char[:, ::1] tokens, real_t[:, :, ::1] dy, Py_ssize_t k):
    cdef Py_ssize_t B = dy.shape[0], L = dy.shape[1], C = dy.shape[2]
    cdef Py_ssize_t pad = (k - 1) // 2
    cdef Py_ssize_t b, l, t, c, src
    cdef real_t *acc
    cdef real_t *grad
    dtype = np.float32 if real_t is float else np.float64
    out_arr = np.zeros((k, N_TOKENS, C), dtype=dtype)
    cdef real_t[:, :, ::1] out = out_arr
    with nogil:
        for b in range(B):
            for l in range(L):
                grad = &dy[b, l, 0]
                for t in range(k):
                    src = l + t - pad
                    if src < 0 or src >= L:
                        continue
                    acc = &out[t, tokens[b, src], 0]
                    for c in range(C):
                        acc[c] += grad[c]
    return out_arr


def gh_histogram(const unsigned char[:, ::1] X, const cnp.int64_t[::1] rows,
                 const cnp.int64_t[::1] nodes, const cnp.int64_t[::1] features,
                 const double[::1] g, const double[::1] h, Py_ssize_t n_nodes):
    cdef Py_ssize_t nf = features.shape[0], m = rows.shape[0]
    cdef Py_ssize_t i, j, r, off
    cdef double gi, hi
    G_arr = np.zeros((n_nodes, nf, N_TOKENS))
    H_arr = np.zeros((n_nodes, nf, N_TOKENS))
    cdef double[:, :, ::1] G = G_arr
    cdef double[:, :, ::1] H = H_arr
    cdef const unsigned char *xrow
    with nogil:
        for i in range(m):
            r = rows[i]
            off = nodes[i]
            gi = g[i]
            hi = h[i]
            xrow = &X[r, 0]
            for j in range(nf):
                G[off, j, xrow[features[j]]] += gi
                H[off, j, xrow[features[j]]] += hi
    return G_arr, H_arr


def class_histogram(const unsigned char[:, ::1] X, const cnp.int64_t[::1] rows,
                    const cnp.int64_t[::1] features, const cnp.int8_t[::1] y,
                    const double[::1] weight):
    cdef Py_ssize_t nf = features.shape[0], m = rows.shape[0]
    cdef Py_ssize_t i, j
    cdef double wi
    cdef int yi
    cdef const unsigned char *xrow
    out_arr = np.zeros((nf, N_TOKENS, 2))
    cdef double[:, :, ::1] out = out_arr
    with nogil:
        for i in range(m):
            xrow = &X[rows[i], 0]
            yi = y[i]
            wi = weight[i]
            for j in range(nf):
                out[j, xrow[features[j]], yi] += wi
    return out_arr


# --------------------------------------------------------------------------
# TreeSHAP

cdef struct PathElem:
    Py_ssize_t feature
    double zero
    double one
    double weight


cdef inline void _extend(PathElem *path, Py_ssize_t d, double zero, double one,
                         Py_ssize_t feature) noexcept nogil:
    cdef Py_ssize_t i
    path[d].feature = feature
    path[d].zero = zero
    path[d].one = one
    path[d].weight = 1.0 if d == 0 else 0.0
    i = d - 1
    while i >= 0:
        path[i + 1].weight += one * path[i].weight * (i + 1) / <double>(d + 1)
        path[i].weight = zero * path[i].weight * (d - i) / <double>(d + 1)
        i -= 1


cdef inline void _unwind(PathElem *path, Py_ssize_t d, Py_ssize_t k) noexcept nogil:
    cdef double one = path[k].one, zero = path[k].zero
    cdef double nxt = path[d].weight, tmp
    cdef Py_ssize_t i = d - 1
    while i >= 0:
        if one != 0:
            tmp = path[i].weight
            path[i].weight = nxt * (d + 1) / ((i + 1) * one)
            nxt = tmp - path[i].weight * zero * (d - i) / <double>(d + 1)
        else:
            path[i].weight = path[i].weight * (d + 1) / (zero * (d - i))
        i -= 1
    for i in range(k, d):
        path[i].feature = path[i + 1].feature
        path[i].zero = path[i + 1].zero
        path[i].one = path[i + 1].one


cdef inline double _unwound_sum(PathElem *path, Py_ssize_t d, Py_ssize_t k) noexcept nogil:
    cdef double one = path[k].one, zero = path[k].zero
    cdef double total = 0.0, nxt, tmp
    cdef Py_ssize_t i = d - 1
    if one != 0:
        nxt = path[d].weight
        while i >= 0:
            tmp = nxt * (d + 1) / ((i + 1) * one)
            total += tmp
            nxt = path[i].weight - tmp * zero * (d - i) / <double>(d + 1)
            i -= 1
    else:
        while i >= 0:
            total += path[i].weight * (d + 1) / (zero * (d - i))
            i -= 1
    return total


cdef void _recurse(const cnp.int64_t *feature, const cnp.int64_t *threshold,
                   const cnp.int64_t *left, const cnp.int64_t *right,
                   const double *value, const double *cover,
                   const unsigned char *x, double *phi, double scale,
                   Py_ssize_t node, PathElem *parent, Py_ssize_t d,
                   double zero, double one, Py_ssize_t feat) noexcept nogil:
    cdef PathElem *path = parent + d + 1
    cdef Py_ssize_t i, k, f, hot, cold
    cdef double v, w, in_zero = 1.0, in_one = 1.0
    for i in range(d + 1):
        path[i] = parent[i]
    _extend(path, d, zero, one, feat)
    if left[node] < 0:
        v = value[node] * scale
        for i in range(1, d + 1):
            w = _unwound_sum(path, d, i)
            phi[path[i].feature] += w * (path[i].one - path[i].zero) * v
        return
    f = feature[node]
    if x[f] <= threshold[node]:
        hot = left[node]
        cold = right[node]
    else:
        hot = right[node]
        cold = left[node]
    k = 0
    while k <= d:
        if path[k].feature == f:
            break
        k += 1
    if k <= d:
        in_zero = path[k].zero
        in_one = path[k].one
        _unwind(path, d, k)
        d -= 1
    _recurse(feature, threshold, left, right, value, cover, x, phi, scale,
             hot, path, d + 1, in_zero * cover[hot] / cover[node], in_one, f)
    _recurse(feature, threshold, left, right, value, cover, x, phi, scale,
             cold, path, d + 1, in_zero * cover[cold] / cover[node], 0.0, f)


def tree_shap_batch(const cnp.int64_t[::1] feature, const cnp.int64_t[::1] threshold,
                    const cnp.int64_t[::1] left, const cnp.int64_t[::1] right,
                    const double[::1] value, const double[::1] cover,
                    const unsigned char[:, ::1] X, double[:, ::1] phi, double scale):
    cdef Py_ssize_t n = X.shape[0], i
    # every node adds at most one path element; depth bound = node count
    cdef Py_ssize_t depth = feature.shape[0] + 1
    cdef Py_ssize_t size = (depth + 2) * (depth + 3) // 2
    cdef PathElem *buf = <PathElem *> calloc(size, sizeof(PathElem))
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                _recurse(&feature[0], &threshold[0], &left[0], &right[0], &value[0],
                         &cover[0], &X[i, 0], &phi[i, 0], scale, 0, buf, 0,
                         1.0, 1.0, -1)
    finally:
        free(buf)


def tree_shap(feature, threshold, left, right, value, cover, x, phi, scale):
    tree_shap_batch(feature, threshold, left, right, value, cover,
                    np.ascontiguousarray(x, dtype=np.uint8).reshape(1, -1),
                    phi.reshape(1, -1), scale)
