"""Mini-batch training of the SNP CNN with Adam, L2 and early stopping."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..data import ClassWeights, DatasetSplit, class_weights
from ..errors import ConfigurationError, InputError, TrainingError
from . import ops

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 16
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 10
    seed: int = 0
    class_weights: ClassWeights | None = None

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.patience < 1:
            raise ConfigurationError("epochs >= 0, batch_size >= 1 and patience >= 1 required")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning rate must be positive")

    def to_dict(self):
        d = asdict(self)
        d["class_weights"] = None if self.class_weights is None else self.class_weights.to_dict()
        return d


class Adam:
    """Adam with L2 folded into the gradient as ``2 * l2 * w``."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * np.sqrt(1 - b2**self.t) / (1 - b1**self.t)
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if p.l2:
                g = g + 2.0 * p.l2 * p.value
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p.value -= (lr_t * m / (np.sqrt(v) + self.eps)).astype(p.value.dtype)


def l2_penalty(model) -> float:
    return float(sum(p.l2 * np.sum(p.value.astype(np.float64) ** 2) for p in model.parameters() if p.l2))


def evaluate_loss(model, tokens, y, weights, batch_size=16) -> float:
    """Weighted BCE in inference mode (no L2 term)."""
    if len(y) == 0:
        return float("nan")
    p = model.predict_proba(tokens, batch_size)
    return ops.weighted_bce(p, y, weights)[0]


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    chunks = [order[s : s + batch_size] for s in range(0, n, batch_size)]
    # batch statistics of a single sample are degenerate; fold it into the previous batch
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2] = np.concatenate([chunks[-2], chunks.pop()])
    return chunks


def train(model, tokens, labels, split: DatasetSplit, cfg: TrainConfig | None = None):
    """Fit ``model`` on ``split.train``, early-stopping on ``split.val``.

    ``tokens`` is the full ``(n, L)`` token grid (or a SnpMatrix) that the split
    indexes into. The monitored loss is the class-weighted validation BCE, or
    the training loss when the split has no validation rows. The best
    weights seen are restored before returning.

    Returns:
        ``(model, history)`` where history holds one dict per epoch.
    """
    cfg = cfg or TrainConfig()
    grid = getattr(tokens, "tokens", tokens)
    grid = np.asarray(grid)
    y = np.asarray(labels).astype(np.int8)
    if len(y) != len(grid):
        raise InputError(f"{len(grid)} sequences but {len(y)} labels")
    train_idx, val_idx = split.train, split.val
    if len(train_idx) < 2:
        raise ConfigurationError("batch normalization needs at least 2 training samples")
    weights = cfg.class_weights or class_weights(y[train_idx])
    history: list[dict] = []
    if cfg.epochs == 0:
        return model, history

    rng = np.random.default_rng([cfg.seed, 2])
    model.reseed_dropout(cfg.seed)
    opt = Adam(model.parameters(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    best, best_state, stale = np.inf, None, 0
    X_val, y_val = grid[val_idx], y[val_idx]
    for epoch in range(1, cfg.epochs + 1):
        total, seen = 0.0, 0
        for batch in _batches(len(train_idx), cfg.batch_size, rng):
            rows = train_idx[batch]
            xb, yb = grid[rows], y[rows]
            model.zero_grad()
            logits = model.forward(xb, training=True).astype(np.float64)
            p = ops.sigmoid(logits)
            loss, _ = ops.weighted_bce(p, yb, weights)
            if not np.isfinite(loss):
                raise TrainingError("loss is not finite", epoch=epoch)
            model.backward(ops.weighted_bce_logits_grad(p, yb, weights))
            opt.step()
            total += loss * len(rows)
            seen += len(rows)
        train_loss = total / seen
        val_loss = evaluate_loss(model, X_val, y_val, weights, cfg.batch_size) if len(val_idx) else float("nan")
        monitor = val_loss if len(val_idx) else train_loss
        if not np.isfinite(monitor):
            raise TrainingError("monitored loss is not finite", epoch=epoch)
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        log.info("epoch %d train_loss=%.4f val_loss=%.4f", epoch, train_loss, val_loss)
        if monitor < best:
            best, stale = monitor, 0
            best_state = {k: v.copy() for k, v in model.state_arrays().items()}
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    if best_state is not None:
        model.load_state_arrays(best_state)
    return model, history
