"""TreeSHAP attributions for boosted trees and the reports built on them.

Attributions live in margin (log-odds) space, where they are exactly
additive: ``base + phi.sum() == margin`` for every sample. Expectations are
path-dependent, weighting each branch by its share of the training cover.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import GeneAnnotation, parse_position
from .errors import InputError
from .trees.tree import check_features

INTERGENIC = "intergenic"


@dataclass
class ShapValues:
    """``phi[i, j]``: attribution of feature j to sample i's margin."""

    phi: np.ndarray
    base: float
    feature_names: tuple[str, ...]

    @property
    def margins(self) -> np.ndarray:
        return self.base + self.phi.sum(axis=1)


def tree_expectation(tree) -> float:
    """Root-to-leaf cover-ratio weighted mean of the leaf values."""
    total = 0.0
    stack = [(0, 1.0)]
    while stack:
        node, w = stack.pop()
        left, right = tree.left[node], tree.right[node]
        if left < 0:
            total += w * tree.value[node]
            continue
        c = tree.cover[node]
        stack.append((left, w * tree.cover[left] / c))
        stack.append((right, w * tree.cover[right] / c))
    return total


def _names(model):
    if model.feature_names is not None:
        return tuple(model.feature_names)
    return tuple(f"f{j}" for j in range(model.n_features))


def tree_shap(model, X) -> ShapValues:
    """Exact path-dependent SHAP values of a boosted-tree model.

    Args:
        model: a fitted GbtModel.
        X: one sample ``(F,)`` or a batch ``(n, F)`` of tokens.
    """
    X = check_features(X, model.n_features)
    phi = np.zeros(X.shape, dtype=np.float64)
    base = model.base_score
    for tree in model.trees:
        _kernels.tree_shap_batch(
            tree.feature, tree.threshold, tree.left, tree.right, tree.value, tree.cover,
            X, phi, model.learning_rate,
        )
        base += model.learning_rate * tree_expectation(tree)
    return ShapValues(phi, float(base), _names(model))


@dataclass(frozen=True)
class FeatureRanking:
    names: tuple[str, ...]
    scores: np.ndarray
    indices: np.ndarray

    def __len__(self):
        return len(self.names)

    def top(self, k) -> "FeatureRanking":
        return FeatureRanking(self.names[:k], self.scores[:k], self.indices[:k])

    def items(self):
        return list(zip(self.names, self.scores.tolist()))


def mean_abs_shap_ranking(shap, feature_names=None) -> FeatureRanking:
    """Features by descending mean |SHAP|; ties go to the lower index."""
    if isinstance(shap, ShapValues):
        feature_names = feature_names or shap.feature_names
        shap = shap.phi
    phi = np.atleast_2d(np.asarray(shap, dtype=np.float64))
    if phi.size == 0:
        raise InputError("SHAP matrix is empty")
    F = phi.shape[1]
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{j}" for j in range(F))
    if len(names) != F:
        raise InputError(f"{len(names)} names for {F} features")
    score = np.abs(phi).mean(axis=0)
    idx = np.arange(F)
    order = np.lexsort((idx, -score))
    return FeatureRanking(tuple(names[j] for j in order), score[order], order)


def summary_export(shap, raw_values, top_k=10, feature_names=None) -> list[dict]:
    """Long-format beeswarm data for the ``top_k`` ranked features.

    One row per (feature, sample): ``rank, feature, sample, shap, token``.
    ``top_k`` is clamped to the feature count.
    """
    ranking = mean_abs_shap_ranking(shap, feature_names)
    phi = shap.phi if isinstance(shap, ShapValues) else np.atleast_2d(np.asarray(shap))
    raw = np.atleast_2d(np.asarray(getattr(raw_values, "tokens", raw_values)))
    if raw.shape != phi.shape:
        raise InputError(f"raw values {raw.shape} do not match SHAP matrix {phi.shape}")
    k = max(0, min(int(top_k), phi.shape[1]))
    rows = []
    for rank, (name, j) in enumerate(zip(ranking.names[:k], ranking.indices[:k]), start=1):
        for i in range(phi.shape[0]):
            rows.append({"rank": rank, "feature": name, "sample": i,
                         "shap": float(phi[i, j]), "token": int(raw[i, j])})
    return rows


@dataclass(frozen=True)
class GeneReportRow:
    rank: int
    feature: str
    position: int
    gene: str
    mean_abs_shap: float


def gene_report(ranking: FeatureRanking, annotation: GeneAnnotation | None, top_k=10) -> list[GeneReportRow]:
    """Map the top ranked loci to genes, ``"intergenic"`` outside all intervals."""
    rows = []
    for rank, (name, score) in enumerate(zip(ranking.names[:top_k], ranking.scores[:top_k]), start=1):
        pos = parse_position(name)
        gene = annotation.lookup(pos) if annotation is not None else None
        rows.append(GeneReportRow(rank, name, pos, gene or INTERGENIC, float(score)))
    return rows


def rows_to_csv(rows, header=None) -> str:
    """CSV text for a list of dicts or dataclass rows."""
    dicts = [r if isinstance(r, dict) else r.__dict__ for r in rows]
    if header is None:
        header = list(dicts[0]) if dicts else []
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    w.writeheader()
    for d in dicts:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in d.items()})
    return buf.getvalue()
