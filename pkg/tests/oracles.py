"""Slow, obviously-correct reference implementations used as test oracles."""

from __future__ import annotations

import math
from decimal import Decimal, getcontext
from fractions import Fraction
from itertools import product

import numpy as np

# --------------------------------------------------------------------------
# finite differences


def numeric_grad(f, x, h=1e-5):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``x`` (in place)."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def max_rel_error(analytic, numeric, floor=1e-8):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return float(np.max(np.abs(a - n) / np.maximum(floor, np.abs(a) + np.abs(n)), initial=0.0))


# --------------------------------------------------------------------------
# convolution


def naive_conv1d(x, kernel, bias):
    """Same-padded cross-correlation by explicit loops."""
    B, L, cin = x.shape
    k, _, cout = kernel.shape
    pad = (k - 1) // 2
    out = np.zeros((B, L, cout))
    for b in range(B):
        for l in range(L):
            for o in range(cout):
                acc = bias[o]
                for t in range(k):
                    src = l + t - pad
                    if 0 <= src < L:
                        for c in range(cin):
                            acc += x[b, src, c] * kernel[t, c, o]
                out[b, l, o] = acc
    return out


# --------------------------------------------------------------------------
# trees


def walk_tree(tree, x):
    node = 0
    while tree.left[node] >= 0:
        node = tree.left[node] if x[tree.feature[node]] <= tree.threshold[node] else tree.right[node]
    return tree.value[node]


def walk_gbt_margin(model, x):
    return model.base_score + sum(model.learning_rate * walk_tree(t, x) for t in model.trees)


def exhaustive_gbt_tree(X, g, h, max_depth, lam, min_child_weight, rtol=1e-12):
    """Depth-first greedy tree by brute-force enumeration of every split.

    Returns a nested structure: ``("leaf", value)`` or
    ``("split", feature, threshold, left, right)``.
    """

    def build(rows, depth):
        G, H = g[rows].sum(), h[rows].sum()
        leaf = ("leaf", -G / (H + lam))
        if depth >= max_depth:
            return leaf
        candidates = []  # (gain, feature, threshold) in feature-major order
        for f in range(X.shape[1]):
            for t in range(4):
                left = X[rows, f] <= t
                GL, HL = g[rows][left].sum(), h[rows][left].sum()
                GR, HR = G - GL, H - HL
                if HL < min_child_weight or HR < min_child_weight:
                    continue
                gain = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - G**2 / (H + lam))
                candidates.append((gain, f, t))
        if not candidates:
            return leaf
        best = max(c[0] for c in candidates)
        if best <= 1e-12:
            return leaf
        _, f, t = next(c for c in candidates if c[0] >= best - rtol * abs(best))
        left = rows[X[rows, f] <= t]
        right = rows[X[rows, f] > t]
        return ("split", f, t, build(left, depth + 1), build(right, depth + 1))

    return build(np.arange(len(g)), 0)


def tree_structure(tree, node=0):
    if tree.left[node] < 0:
        return ("leaf", float(tree.value[node]))
    return ("split", int(tree.feature[node]), int(tree.threshold[node]),
            tree_structure(tree, tree.left[node]), tree_structure(tree, tree.right[node]))


def same_structure(a, b, rtol=1e-9):
    if a[0] != b[0]:
        return False
    if a[0] == "leaf":
        return math.isclose(a[1], b[1], rel_tol=rtol, abs_tol=1e-12)
    return a[1:3] == b[1:3] and same_structure(a[3], b[3], rtol) and same_structure(a[4], b[4], rtol)


def gini_oracle(labels):
    labels = list(labels)
    n = len(labels)
    if n == 0:
        return 0.0
    p1 = sum(labels) / n
    return 1.0 - p1**2 - (1 - p1) ** 2


# --------------------------------------------------------------------------
# Shapley values by subset enumeration


def conditional_expectation(tree, x, known: set):
    """E[f(x) | x_S] under the tree's cover distribution."""

    def rec(node):
        if tree.left[node] < 0:
            return tree.value[node]
        f = tree.feature[node]
        l, r = tree.left[node], tree.right[node]
        if f in known:
            return rec(l if x[f] <= tree.threshold[node] else r)
        c = tree.cover[node]
        return (tree.cover[l] * rec(l) + tree.cover[r] * rec(r)) / c

    return rec(0)


def brute_force_shap(model, x):
    """Exact Shapley values of the margin game over the model's features."""
    M = model.n_features
    v = np.zeros(1 << M)
    for mask in range(1 << M):
        known = {j for j in range(M) if mask >> j & 1}
        v[mask] = model.base_score + sum(
            model.learning_rate * conditional_expectation(t, x, known) for t in model.trees
        )
    phi = np.zeros(M)
    fact = [math.factorial(i) for i in range(M + 1)]
    for mask in range(1 << M):
        s = bin(mask).count("1")
        if s == M:
            continue
        w = fact[s] * fact[M - s - 1] / fact[M]
        for j in range(M):
            if not mask >> j & 1:
                phi[j] += w * (v[mask | (1 << j)] - v[mask])
    return phi, v[0]


# --------------------------------------------------------------------------
# metrics in exact arithmetic


def metric_oracle(tp, fp, tn, fn):
    """All seven metrics with rationals (and 50-digit decimals for the root)."""
    getcontext().prec = 50
    n = tp + fp + tn + fn

    def ratio(a, b):
        return Fraction(a, b) if b else Fraction(0)

    precision = ratio(tp, tp + fp)
    recall = ratio(tp, tp + fn)
    f1 = ratio(2 * tp, 2 * tp + fp + fn)
    f1_neg = ratio(2 * tn, 2 * tn + fn + fp)
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = Decimal(tp * tn - fp * fn) / Decimal(den).sqrt() if den else Decimal(0)
    p_o = Fraction(tp + tn, n)
    p_e = Fraction((tp + fp) * (tp + fn) + (tn + fn) * (tn + fp), n * n)
    kappa = (p_o - p_e) / (1 - p_e) if p_e != 1 else Fraction(0)
    return {
        "accuracy": float(p_o),
        "precision_resistant": float(precision),
        "recall_resistant": float(recall),
        "f1_resistant": float(f1),
        "f1_macro": float((f1 + f1_neg) / 2),
        "mcc": float(mcc),
        "kappa": float(kappa),
    }


def all_token_rows(n_features):
    return np.array(list(product(range(5), repeat=n_features)), dtype=np.uint8)


# --------------------------------------------------------------------------
# random boosted models with consistent covers


def random_tree(rng, n_features, max_depth, p_split=0.8):
    """Random tree; features may repeat along a path; covers add up."""
    from amrnet.trees.tree import TreeBuilder

    b = TreeBuilder()

    def grow(depth):
        node = b.add(0.0, 0.0)
        if depth < max_depth and rng.random() < p_split:
            f, t = int(rng.integers(n_features)), int(rng.integers(4))
            left, right = grow(depth + 1), grow(depth + 1)
            b.split(node, f, t, left, right)
            b.cover[node] = b.cover[left] + b.cover[right]
        else:
            b.value[node] = float(rng.normal())
            b.cover[node] = float(rng.uniform(0.1, 5.0))
        return node

    grow(0)
    return b.build()


def random_gbt_model(rng, max_features=12, max_depth=3, max_trees=5):
    from amrnet.trees import GbtModel

    M = int(rng.integers(1, max_features + 1))
    trees = [random_tree(rng, M, int(rng.integers(1, max_depth + 1)))
             for _ in range(int(rng.integers(1, max_trees + 1)))]
    return GbtModel(float(rng.normal()), float(rng.uniform(0.05, 1.0)), M, trees)
