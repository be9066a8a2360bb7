"""Random Forest with Gini splits over random candidate features."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import _kernels
from ..data import ClassWeights
from ..errors import ConfigurationError
from .boosting import _check_xy
from .tree import N_TOKENS, DecisionTree, TreeBuilder, check_features, pick_best

MIN_GAIN = 1e-12


@dataclass
class RfConfig:
    n_trees: int = 400
    max_depth: int = 15
    max_features: int | str = "sqrt"
    bootstrap: bool = True
    min_samples_split: int = 2
    seed: int = 0
    n_jobs: int | None = None

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 0 or self.min_samples_split < 2:
            raise ConfigurationError("n_trees >= 1, max_depth >= 0, min_samples_split >= 2 required")
        if isinstance(self.max_features, str) and self.max_features not in ("sqrt", "all"):
            raise ConfigurationError(f"unknown max_features {self.max_features!r}")
        if isinstance(self.max_features, int) and self.max_features < 1:
            raise ConfigurationError("max_features must be >= 1")

    def n_candidates(self, n_features) -> int:
        if self.max_features == "sqrt":
            return max(1, math.isqrt(n_features))
        if self.max_features == "all":
            return n_features
        return min(int(self.max_features), n_features)

    def to_dict(self):
        return asdict(self)


@dataclass
class RfModel:
    """Probability = mean over trees of the leaf's resistant-class frequency."""

    n_features: int
    trees: list[DecisionTree] = field(default_factory=list)
    feature_names: tuple[str, ...] | None = None

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def tree_proba(self, X) -> np.ndarray:
        """``(n_trees, n)`` per-tree resistant probabilities."""
        X = check_features(X, self.n_features)
        return np.stack([t.predict(X)[:, 1] for t in self.trees])

    def predict_proba(self, X) -> np.ndarray:
        return self.tree_proba(X).mean(axis=0)


def gini(counts) -> np.ndarray:
    """Gini impurity of (..., 2) class-mass arrays; 0 where empty."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = counts / total[..., None]
        out = 1.0 - np.sum(p * p, axis=-1)
    return np.where(total > 0, out, 0.0)


def split_gains(hist) -> np.ndarray:
    """Weighted Gini decrease for every ``token <= t`` split.

    ``hist`` is the (nf, 5, 2) class mass per feature and token. Returns
    (nf, 4) gains with ``-inf`` where a side would be empty.
    """
    left = np.cumsum(hist[:, : N_TOKENS - 1], axis=1)
    total = hist.sum(axis=1, keepdims=True)
    right = total - left
    nl, nr, n = left.sum(-1), right.sum(-1), total.sum(-1)
    gain = gini(total) - (nl * gini(left) + nr * gini(right)) / n
    return np.where((nl > 0) & (nr > 0), gain, -np.inf)


def grow_tree(X, y, weight, cfg: RfConfig, rng) -> DecisionTree:
    """Depth-first CART tree on the rows with positive ``weight``."""
    X = np.ascontiguousarray(X, dtype=np.uint8)
    n, F = X.shape
    m = cfg.n_candidates(F)
    builder = TreeBuilder()
    rows0 = np.flatnonzero(weight > 0).astype(np.int64)
    y = np.ascontiguousarray(y, dtype=np.int8)
    weight = np.ascontiguousarray(weight, dtype=np.float64)

    def mass(rows):
        return np.bincount(y[rows], weights=weight[rows], minlength=2)

    c0 = mass(rows0)
    stack = [(builder.add(c0 / c0.sum(), c0.sum()), rows0, 0)]
    while stack:
        node, rows, depth = stack.pop()
        counts = np.asarray(builder.value[node]) * builder.cover[node]
        if depth >= cfg.max_depth or len(rows) < cfg.min_samples_split or np.count_nonzero(counts) < 2:
            continue
        feats = np.sort(rng.choice(F, m, replace=False)).astype(np.int64)
        hist = _kernels.class_histogram(X, rows, feats, y[rows], weight[rows])
        best = pick_best(split_gains(hist), MIN_GAIN)
        if best is None:
            continue
        fi, t = divmod(best, N_TOKENS - 1)
        f = int(feats[fi])
        go_left = X[rows, f] <= t
        lrows, rrows = rows[go_left], rows[~go_left]
        lc, rc = mass(lrows), mass(rrows)
        left = builder.add(lc / lc.sum(), lc.sum())
        right = builder.add(rc / rc.sum(), rc.sum())
        builder.split(node, f, int(t), left, right)
        # right pushed first so the left subtree is expanded first
        stack.append((right, rrows, depth + 1))
        stack.append((left, lrows, depth + 1))
    return builder.build()


def _fit_one(X, y, base_w, cfg, index):
    rng = np.random.default_rng([cfg.seed, index])
    n = len(y)
    if cfg.bootstrap:
        draws = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64)
        weight = draws * base_w
    else:
        weight = base_w.copy()
    return grow_tree(X, y, weight, cfg, rng)


def fit_random_forest(X, y, cfg: RfConfig | None = None, sample_weight=None, feature_names=None) -> RfModel:
    """Fit ``cfg.n_trees`` trees.

    Every tree owns a seed derived from ``(cfg.seed, tree index)``, so the
    forest is identical for any worker count. ``cfg.n_jobs`` (default:
    ``AMR_WORKERS`` or 1) sets the thread count.
    """
    cfg = cfg or RfConfig()
    if feature_names is None and hasattr(X, "feature_names"):
        feature_names = tuple(X.feature_names)
    X, y = _check_xy(X, y)
    if sample_weight is None:
        base_w = np.ones(len(y))
    elif isinstance(sample_weight, ClassWeights):
        base_w = sample_weight.sample_weights(y)
    else:
        base_w = np.asarray(sample_weight, dtype=np.float64)
    jobs = cfg.n_jobs or int(os.environ.get("AMR_WORKERS", "1") or 1)
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            trees = list(pool.map(lambda i: _fit_one(X, y, base_w, cfg, i), range(cfg.n_trees)))
    else:
        trees = [_fit_one(X, y, base_w, cfg, i) for i in range(cfg.n_trees)]
    return RfModel(X.shape[1], trees, None if feature_names is None else tuple(feature_names))


def predict_proba_rf(model: RfModel, X) -> np.ndarray:
    return model.predict_proba(X)
