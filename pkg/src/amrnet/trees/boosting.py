"""Gradient-boosted trees with the second-order logistic objective.

Trees grow level by level. Each level needs one pass over the active rows to
build per-node (feature, token) sums of gradient and hessian; with five token
values those sums make the split search exact.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import _kernels
from ..data import ClassWeights
from ..errors import ConfigurationError, InputError
from .tree import N_TOKENS, DecisionTree, TreeBuilder, check_features, pick_best

log = logging.getLogger(__name__)

MIN_GAIN = 1e-12


@dataclass
class GbtConfig:
    n_rounds: int = 300
    max_depth: int = 6
    learning_rate: float = 0.05
    subsample: float = 0.7
    colsample: float = 0.7
    reg_lambda: float = 1.0
    min_child_weight: float = 1.0
    early_stopping_rounds: int | None = 30
    seed: int = 0

    def __post_init__(self):
        if self.n_rounds < 0:
            raise ConfigurationError("n_rounds must be >= 0")
        if self.max_depth < 0:
            raise ConfigurationError("max_depth must be >= 0")
        for name in ("subsample", "colsample"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ConfigurationError(f"{name} must lie in (0, 1], got {v}")
        if self.learning_rate <= 0 or self.reg_lambda < 0 or self.min_child_weight < 0:
            raise ConfigurationError("learning_rate > 0, reg_lambda >= 0, min_child_weight >= 0 required")
        if self.early_stopping_rounds is not None and self.early_stopping_rounds < 1:
            raise ConfigurationError("early_stopping_rounds must be >= 1 or None")

    def to_dict(self):
        return asdict(self)


@dataclass
class GbtModel:
    """``p(x) = sigmoid(base_score + learning_rate * sum_t tree_t(x))``."""

    base_score: float
    learning_rate: float
    n_features: int
    trees: list[DecisionTree] = field(default_factory=list)
    reg_lambda: float = 1.0
    feature_names: tuple[str, ...] | None = None
    history: list[dict] = field(default_factory=list, repr=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def margin(self, X) -> np.ndarray:
        X = check_features(X, self.n_features)
        out = np.full(len(X), self.base_score)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out

    def predict_proba(self, X) -> np.ndarray:
        return _sigmoid(self.margin(X))

    def truncate(self, n_trees) -> "GbtModel":
        self.trees = self.trees[:n_trees]
        return self


def predict_proba_gbt(model: GbtModel, X) -> np.ndarray:
    return model.predict_proba(X)


def _sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def weighted_log_loss(margin, y, w) -> float:
    """Mean of ``w * logloss`` computed stably from margins."""
    # log(1 + e^z) - y z
    loss = np.logaddexp(0.0, margin) - y * margin
    return float(np.sum(w * loss) / len(y))


def _sample_weights(weights, y):
    if weights is None:
        return np.ones(len(y))
    if isinstance(weights, ClassWeights):
        return weights.sample_weights(y)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != y.shape:
        raise InputError("sample weights must match labels")
    return w


def _check_xy(X, y):
    X = np.ascontiguousarray(np.asarray(getattr(X, "tokens", X)), dtype=np.uint8)
    y = np.asarray(y).astype(np.int8)
    if X.ndim != 2 or len(X) != len(y):
        raise InputError(f"X of shape {X.shape} does not match {len(y)} labels")
    if len(y) == 0 or y.min() == y.max():
        raise ConfigurationError("training data must contain both classes")
    return X, y


def grow_tree(X, rows, features, g, h, max_depth, reg_lambda, min_child_weight) -> DecisionTree:
    """Greedy level-wise tree on ``rows`` using only ``features``.

    ``g`` and ``h`` are aligned with ``rows``. Leaf values are the Newton
    step ``-G / (H + lambda)``; ``cover`` is the hessian mass per node.
    """
    X = np.ascontiguousarray(X, dtype=np.uint8)
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    features = np.ascontiguousarray(features, dtype=np.int64)
    g = np.ascontiguousarray(g, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    lam = reg_lambda

    builder = TreeBuilder()
    G0, H0 = float(g.sum()), float(h.sum())
    frontier = [builder.add(-G0 / (H0 + lam), H0)]
    sums = np.array([[G0, H0]])
    local = np.zeros(len(rows), dtype=np.int64)  # frontier slot of every row

    for _ in range(max_depth):
        if not frontier or len(features) == 0:
            break
        Gh, Hh = _kernels.gh_histogram(X, rows, local, features, g, h, len(frontier))
        GL = np.cumsum(Gh[:, :, : N_TOKENS - 1], axis=2)
        HL = np.cumsum(Hh[:, :, : N_TOKENS - 1], axis=2)
        Gt = sums[:, 0][:, None, None]
        Ht = sums[:, 1][:, None, None]
        GR, HR = Gt - GL, Ht - HL
        gain = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - Gt**2 / (Ht + lam))
        ok = (HL >= min_child_weight) & (HR >= min_child_weight)
        gain = np.where(ok, gain, -np.inf)

        next_frontier, next_sums = [], []
        slot_map = np.full(2 * len(frontier), -1, dtype=np.int64)
        split_feat = np.full(len(frontier), -1, dtype=np.int64)
        split_thr = np.zeros(len(frontier), dtype=np.int64)
        for j, node in enumerate(frontier):
            best = pick_best(gain[j], MIN_GAIN)
            if best is None:
                continue
            fi, t = divmod(best, N_TOKENS - 1)
            gl, hl = GL[j, fi, t], HL[j, fi, t]
            gr, hr = sums[j, 0] - gl, sums[j, 1] - hl
            lc = builder.add(-gl / (hl + lam), hl)
            rc = builder.add(-gr / (hr + lam), hr)
            builder.split(node, int(features[fi]), int(t), lc, rc)
            split_feat[j], split_thr[j] = features[fi], t
            slot_map[2 * j] = len(next_frontier)
            next_frontier.append(lc)
            next_sums.append((gl, hl))
            slot_map[2 * j + 1] = len(next_frontier)
            next_frontier.append(rc)
            next_sums.append((gr, hr))
        if not next_frontier:
            break

        f = split_feat[local]
        keep = f >= 0
        rows, local, g, h, f = rows[keep], local[keep], g[keep], h[keep], f[keep]
        go_right = X[rows, f] > split_thr[local]
        local = slot_map[2 * local + go_right]
        frontier, sums = next_frontier, np.array(next_sums)

    return builder.build()


def fit_gbt(X, y, w=None, cfg: GbtConfig | None = None, eval_set=None, feature_names=None) -> GbtModel:
    """Fit boosted trees on token features.

    Args:
        X: ``(n, F)`` token matrix or SnpMatrix.
        y: binary labels.
        w: ClassWeights, per-sample weights, or None for unit weights.
        cfg: hyperparameters.
        eval_set: optional ``(X_val, y_val)`` for early stopping on the
            weighted validation log-loss (same class weights).
        feature_names: stored for explanation reports; taken from a
            SnpMatrix when omitted.

    Returns:
        The fitted model, truncated to the best round when early stopping
        was active.
    """
    cfg = cfg or GbtConfig()
    if feature_names is None and hasattr(X, "feature_names"):
        feature_names = tuple(X.feature_names)
    X, y = _check_xy(X, y)
    n, F = X.shape
    sw = _sample_weights(w, y)
    prevalence = float(y.mean())
    base = float(np.log(prevalence / (1.0 - prevalence)))
    model = GbtModel(base, cfg.learning_rate, F, [], cfg.reg_lambda,
                     None if feature_names is None else tuple(feature_names))

    val = None
    if eval_set is not None and len(eval_set[1]):
        Xv = check_features(eval_set[0], F)
        yv = np.asarray(eval_set[1]).astype(np.int8)
        wv = _sample_weights(w if isinstance(w, ClassWeights) or w is None else None, yv)
        val = (Xv, yv, wv, np.full(len(yv), base))

    rng = np.random.default_rng(cfg.seed)
    n_rows = max(1, int(np.floor(cfg.subsample * n + 0.5)))
    n_cols = max(1, int(np.floor(cfg.colsample * F + 0.5)))
    margin = np.full(n, base)
    best_loss, best_round, stale = np.inf, 0, 0
    for rnd in range(1, cfg.n_rounds + 1):
        p = _sigmoid(margin)
        g = sw * (p - y)
        h = sw * p * (1.0 - p)
        rows = np.arange(n) if n_rows == n else np.sort(rng.choice(n, n_rows, replace=False))
        cols = np.arange(F) if n_cols == F else np.sort(rng.choice(F, n_cols, replace=False))
        tree = grow_tree(X, rows, cols, g[rows], h[rows], cfg.max_depth, cfg.reg_lambda, cfg.min_child_weight)
        model.trees.append(tree)
        margin += cfg.learning_rate * tree.predict(X)
        entry = {"round": rnd, "train_loss": weighted_log_loss(margin, y, sw)}
        if val is not None:
            Xv, yv, wv, mv = val
            mv += cfg.learning_rate * tree.predict(Xv)
            entry["val_loss"] = weighted_log_loss(mv, yv, wv)
            if entry["val_loss"] < best_loss - 1e-12:
                best_loss, best_round, stale = entry["val_loss"], rnd, 0
            else:
                stale += 1
        model.history.append(entry)
        if val is not None and cfg.early_stopping_rounds and stale >= cfg.early_stopping_rounds:
            log.info("early stopping at round %d, best %d", rnd, best_round)
            break
    if val is not None and best_round:
        model.truncate(best_round)
    return model
