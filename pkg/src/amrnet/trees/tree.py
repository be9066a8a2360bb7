"""Array-backed binary decision tree over integer token features.

Every internal node tests ``x[feature] <= threshold``; true goes left.
Leaves have ``left == right == -1``. ``value`` holds a leaf score (boosting)
or a class-frequency row (forest); ``cover`` is the training mass reaching
each node and backs the path-dependent expectations used by TreeSHAP.
"""

from __future__ import annotations

import numpy as np

from ..errors import InputError, StructuralError

N_TOKENS = 5
THRESHOLDS = np.arange(N_TOKENS - 1)  # "token <= t" for t in 0..3

# gains within this relative distance of the best count as ties
TIE_RTOL = 1e-12


class DecisionTree:
    __slots__ = ("feature", "threshold", "left", "right", "value", "cover")

    def __init__(self, feature, threshold, left, right, value, cover):
        self.feature = np.ascontiguousarray(feature, dtype=np.int64)
        self.threshold = np.ascontiguousarray(threshold, dtype=np.int64)
        self.left = np.ascontiguousarray(left, dtype=np.int64)
        self.right = np.ascontiguousarray(right, dtype=np.int64)
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.cover = np.ascontiguousarray(cover, dtype=np.float64)
        n = len(self.feature)
        for name in ("threshold", "left", "right", "cover"):
            if len(getattr(self, name)) != n:
                raise StructuralError(f"tree array {name!r} has the wrong length")
        if len(self.value) != n:
            raise StructuralError("tree array 'value' has the wrong length")

    @classmethod
    def leaf(cls, value, cover):
        value = np.asarray(value, dtype=np.float64)
        return cls([-1], [-1], [-1], [-1], value.reshape((1,) + value.shape), [cover])

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, node) -> bool:
        return self.left[node] < 0

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):  # children always follow parents
            if self.left[node] >= 0:
                depth[self.left[node]] = depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def used_features(self) -> set[int]:
        return {int(f) for f, l in zip(self.feature, self.left) if l >= 0}

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        X = np.asarray(X)
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.left[node] >= 0)
        while len(active):
            n = node[active]
            go_left = X[active, self.feature[n]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])
            active = active[self.left[node[active]] >= 0]
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def expected_value(self):
        """Cover-weighted mean of the leaf values."""
        leaves = self.left < 0
        w = self.cover[leaves]
        return np.tensordot(w, self.value[leaves], axes=1) / w.sum()


class TreeBuilder:
    """Accumulates nodes in creation order (parents before children)."""

    def __init__(self):
        self.feature, self.threshold = [], []
        self.left, self.right = [], []
        self.value, self.cover = [], []

    def add(self, value, cover) -> int:
        self.feature.append(-1)
        self.threshold.append(-1)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.cover.append(cover)
        return len(self.feature) - 1

    def split(self, node, feature, threshold, left, right):
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.left[node] = left
        self.right[node] = right

    def build(self) -> DecisionTree:
        return DecisionTree(self.feature, self.threshold, self.left, self.right, self.value, self.cover)


def pick_best(gain: np.ndarray, min_gain: float):
    """First (feature-major, threshold-minor) index within tolerance of the max.

    Returns ``None`` if no candidate beats ``min_gain``.
    """
    flat = gain.reshape(-1)
    best = flat.max(initial=-np.inf)
    if not np.isfinite(best) or best <= min_gain:
        return None
    tol = TIE_RTOL * max(abs(best), 1e-300)
    return int(np.argmax(flat >= best - tol))


def check_features(X, n_features):
    X = np.asarray(getattr(X, "tokens", X))
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n_features:
        raise InputError(f"model expects {n_features} features, got shape {X.shape}")
    return np.ascontiguousarray(X, dtype=np.uint8)


def pack_trees(trees) -> dict:
    """Concatenate tree arrays into flat arrays plus offsets (for serialization)."""
    offsets = np.cumsum([0] + [t.n_nodes for t in trees]).astype(np.int64)
    if trees:
        cat = lambda name: np.concatenate([getattr(t, name) for t in trees])  # noqa: E731
        out = {name: cat(name) for name in DecisionTree.__slots__}
    else:
        out = {name: np.zeros(0, dtype=np.int64 if name not in ("value", "cover") else np.float64)
               for name in DecisionTree.__slots__}
    out["tree_offsets"] = offsets
    return out


def unpack_trees(arrays: dict) -> list[DecisionTree]:
    off = arrays["tree_offsets"]
    return [
        DecisionTree(*(arrays[name][off[i] : off[i + 1]] for name in DecisionTree.__slots__))
        for i in range(len(off) - 1)
    ]
