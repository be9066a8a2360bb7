"""Binary classification metrics computed from confusion counts.

The resistant class (label 1) is the positive class. Any ratio whose
denominator is zero evaluates to 0.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .errors import InputError

# table columns: name, MetricReport attribute
COLUMNS = (
    ("Accuracy", "accuracy"),
    ("F1", "f1_resistant"),
    ("MCC", "mcc"),
    ("Precision", "precision_resistant"),
    ("Recall", "recall_resistant"),
    ("F1 Macro", "f1_macro"),
    ("Kappa", "kappa"),
)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise InputError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def swapped(self) -> "ConfusionCounts":
        """Counts with the class labels exchanged."""
        return ConfusionCounts(tp=self.tn, fp=self.fn, tn=self.tp, fn=self.fp)


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    f1_resistant: float
    mcc: float
    kappa: float
    precision_resistant: float
    recall_resistant: float
    f1_macro: float
    counts: ConfusionCounts

    def row(self) -> list[float]:
        return [getattr(self, attr) for _, attr in COLUMNS]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["counts"] = asdict(self.counts)
        return d

    @classmethod
    def from_dict(cls, d) -> "MetricReport":
        d = dict(d)
        d["counts"] = ConfusionCounts(**d["counts"])
        return cls(**d)


def confusion(y_true, y_pred) -> ConfusionCounts:
    t = np.asarray(y_true).reshape(-1)
    p = np.asarray(y_pred).reshape(-1)
    if len(t) != len(p):
        raise InputError(f"{len(t)} labels but {len(p)} predictions")
    for name, v in (("y_true", t), ("y_pred", p)):
        if not np.all((v == 0) | (v == 1)):
            raise InputError(f"{name} must be binary 0/1")
    t, p = t.astype(bool), p.astype(bool)
    return ConfusionCounts(
        tp=int(np.sum(t & p)), fp=int(np.sum(~t & p)), tn=int(np.sum(~t & ~p)), fn=int(np.sum(t & ~p))
    )


def _ratio(num, den) -> float:
    return num / den if den else 0.0


def _f1(tp, fp, fn) -> float:
    return _ratio(2 * tp, 2 * tp + fp + fn)


def report(counts: ConfusionCounts) -> MetricReport:
    tp, fp, tn, fn = counts.tp, counts.fp, counts.tn, counts.fn
    n = counts.total
    if n == 0:
        raise InputError("cannot score an empty prediction set")
    accuracy = (tp + tn) / n
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1_pos = _f1(tp, fp, fn)
    f1_neg = _f1(tn, fn, fp)
    # integer products avoid overflow and keep the numerator exact
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = (tp * tn - fp * fn) / math.sqrt(den) if den else 0.0
    p_o = accuracy
    p_e = ((tp + fp) * (tp + fn) + (tn + fn) * (tn + fp)) / (n * n)
    kappa = _ratio(p_o - p_e, 1.0 - p_e)
    return MetricReport(
        accuracy=accuracy,
        f1_resistant=f1_pos,
        mcc=max(-1.0, min(1.0, mcc)),
        kappa=kappa,
        precision_resistant=precision,
        recall_resistant=recall,
        f1_macro=(f1_pos + f1_neg) / 2,
        counts=counts,
    )


def evaluate(y_true, probs_or_labels, threshold=None) -> MetricReport:
    """Score labels directly, or probabilities thresholded at ``threshold``."""
    pred = np.asarray(probs_or_labels)
    if threshold is not None:
        pred = (pred >= threshold).astype(np.int8)
    return report(confusion(y_true, pred))


def fmt4(x: float) -> str:
    """Four decimals, half away from zero on the shortest decimal repr."""
    return str(Decimal(repr(float(x))).quantize(Decimal("0.0001"), rounding=ROUND_HALF_UP))


def table_header() -> list[str]:
    return ["Model"] + [name for name, _ in COLUMNS]


def table_rows(reports: dict[str, MetricReport]) -> list[list[str]]:
    return [[model] + [fmt4(v) for v in rep.row()] for model, rep in reports.items()]


def to_csv(reports: dict[str, MetricReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table_header())
    w.writerows(table_rows(reports))
    return buf.getvalue()


def to_json(reports: dict[str, MetricReport]) -> str:
    """Full-precision values plus counts, keyed by model name."""
    return json.dumps({m: r.to_dict() for m, r in reports.items()}, indent=2, sort_keys=True) + "\n"
