"""Soft-voting fusion of member probabilities and label thresholding."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InputError

DEFAULT_THRESHOLD = 0.5


def ensemble_proba(member_probs, weights=None) -> np.ndarray:
    """Element-wise weighted mean of member probabilities (unweighted by default)."""
    probs = [np.asarray(p, dtype=np.float64).reshape(-1) for p in member_probs]
    if not probs:
        raise InputError("at least one member is required")
    n = len(probs[0])
    if any(len(p) != n for p in probs):
        raise InputError(f"member lengths differ: {[len(p) for p in probs]}")
    for p in probs:
        if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
            raise InputError("member probabilities must lie in [0, 1]")
    stack = np.stack(probs)
    if weights is None:
        mean = stack.mean(axis=0)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (len(probs),) or np.any(~(w > 0)) or not np.all(np.isfinite(w)):
            raise InputError("need one positive finite weight per member")
        mean = (w / w.sum()) @ stack
    # rounding must not push the mean outside the members' range
    return np.clip(mean, stack.min(axis=0), stack.max(axis=0))


def classify(probs, threshold=DEFAULT_THRESHOLD):
    """Label 1 iff ``prob >= threshold``; scalars in, scalar out."""
    p = np.asarray(probs, dtype=np.float64)
    out = (p >= threshold).astype(np.int8)
    return int(out) if out.ndim == 0 else out


@dataclass
class SoftVotingEnsemble:
    """Averages ``predict_proba`` of its members.

    The default (two members, unit weights, threshold 0.5) is the plain
    mean of the CNN and boosted-tree probabilities.
    """

    members: list
    weights: list[float] | None = None
    threshold: float = DEFAULT_THRESHOLD
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.members) < 2:
            raise ConfigurationError("an ensemble needs at least two members")
        if self.weights is not None:
            if len(self.weights) != len(self.members) or min(self.weights) <= 0:
                raise ConfigurationError("need one positive weight per member")
        if not 0 <= self.threshold <= 1:
            raise ConfigurationError("threshold must lie in [0, 1]")

    def member_proba(self, X) -> list[np.ndarray]:
        return [np.asarray(m.predict_proba(X), dtype=np.float64) for m in self.members]

    def predict_proba(self, X) -> np.ndarray:
        return ensemble_proba(self.member_proba(X), self.weights)

    def predict(self, X) -> np.ndarray:
        return classify(self.predict_proba(X), self.threshold)
