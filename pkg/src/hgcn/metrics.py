"""Ranking metrics: average precision, ROC-AUC and their macro averages."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def average_precision(scores, positives) -> float:
    """Mean of precision@rank over the ranks holding positives.

    Scores are sorted descending; equal scores keep their original order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = positives[order]
    ranks = np.nonzero(hits)[0] + 1
    # fsum: correctly rounded, independent of summation order
    return math.fsum(np.arange(1, n_pos + 1) / ranks) / n_pos


def roc_auc(scores, positives) -> float:
    """Mann-Whitney form: P(pos > neg) + 0.5 P(pos == neg)."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    pos, neg = scores[positives], scores[~positives]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("ROC-AUC needs at least one positive and one negative")
    # midranks handle ties exactly
    ranks = _midranks(scores)
    rank_sum = ranks[positives].sum()
    u = rank_sum - len(pos) * (len(pos) + 1) / 2.0
    return float(u / (len(pos) * len(neg)))


def _midranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    sorted_x = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


@dataclass
class Metrics:
    map: float
    roc_auc: float
    per_class_ap: list[float] = field(default_factory=list)
    per_class_auc: list[float] = field(default_factory=list)
    accuracy: float = float("nan")

    def as_dict(self) -> dict:
        return {
            "map": self.map,
            "roc_auc": self.roc_auc,
            "accuracy": self.accuracy,
            "per_class_ap": self.per_class_ap,
            "per_class_auc": self.per_class_auc,
        }


def evaluate_scores(scores: np.ndarray, labels: np.ndarray) -> Metrics:
    """Macro mAP / ROC-AUC over classes; degenerate classes are skipped.

    A skipped class shows up as NaN in the per-class lists.  ``accuracy``
    counts samples whose top-scoring class is a positive one.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels) > 0.5
    aps, aucs = [], []
    for c in range(labels.shape[1]):
        pos = labels[:, c]
        aps.append(average_precision(scores[:, c], pos) if pos.any() else float("nan"))
        aucs.append(roc_auc(scores[:, c], pos) if pos.any() and not pos.all() else float("nan"))
    valid_ap = [a for a in aps if not np.isnan(a)]
    valid_auc = [a for a in aucs if not np.isnan(a)]
    top = np.argmax(scores, axis=1)
    accuracy = float(labels[np.arange(len(top)), top].mean()) if len(top) else float("nan")
    return Metrics(
        map=float(np.mean(valid_ap)) if valid_ap else float("nan"),
        roc_auc=float(np.mean(valid_auc)) if valid_auc else float("nan"),
        per_class_ap=aps,
        per_class_auc=aucs,
        accuracy=accuracy,
    )
