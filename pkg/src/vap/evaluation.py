"""Instance-level scoring: error rates, precision/recall/F1 and mAP.

An instance is one visible ground-truth object in one frame. Each carries
the system's decision (a category index or ``None``) and a score vector
used to rank instances per category for average precision.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class Instance:
    frame_index: int
    object_id: str
    truth: int
    decision: Optional[int]
    scores: np.ndarray

    @property
    def correct(self) -> bool:
        return self.decision == self.truth


def cumulative_error(instances: Sequence[Instance]) -> np.ndarray:
    """Running misclassification rate after each instance."""
    wrong = np.cumsum([0 if i.correct else 1 for i in instances], dtype=float)
    return wrong / np.arange(1, len(wrong) + 1)


def error_rate(instances: Sequence[Instance]) -> float:
    if not instances:
        return 0.0
    return float(np.mean([not i.correct for i in instances]))


@dataclass(frozen=True)
class CategoryScore:
    category: int
    support: int
    predicted: int
    true_positives: int
    precision: float
    recall: float
    f1: float


def f1_score(precision: float, recall: float) -> float:
    return 0.0 if precision + recall == 0 else 2.0 * precision * recall / (precision + recall)


def category_scores(instances: Sequence[Instance], n_categories: int) -> list[CategoryScore]:
    """Precision, recall and F1 for every category that occurs or is predicted.

    Precision of a category that is never predicted is taken as 0.
    """
    truth = np.array([i.truth for i in instances], dtype=int)
    decision = np.array([-1 if i.decision is None else i.decision for i in instances], dtype=int)
    out = []
    for c in range(n_categories):
        support = int((truth == c).sum())
        predicted = int((decision == c).sum())
        if support == 0 and predicted == 0:
            continue
        tp = int(((truth == c) & (decision == c)).sum())
        p = tp / predicted if predicted else 0.0
        r = tp / support if support else 0.0
        out.append(CategoryScore(c, support, predicted, tp, p, r, f1_score(p, r)))
    return out


def average_precision(scores: np.ndarray, positive: np.ndarray) -> float:
    """Area under the precision-recall curve with all-points interpolation.

    Ties in score are broken by input order.
    """
    scores = np.asarray(scores, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    if n_pos == 0:
        return float("nan")
    order = np.argsort(-scores, kind="stable")
    hits = positive[order]
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, len(hits) + 1)
    recall = tp / n_pos
    # precision envelope: max precision at any recall >= r
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * envelope))


def mean_average_precision(instances: Sequence[Instance], n_categories: int) -> tuple[float, dict[int, float]]:
    """mAP over the categories that have at least one positive instance."""
    if not instances:
        return float("nan"), {}
    S = np.array([i.scores for i in instances])
    truth = np.array([i.truth for i in instances])
    per = {}
    for c in range(n_categories):
        if (truth == c).any():
            per[c] = average_precision(S[:, c], truth == c)
    return (float(np.mean(list(per.values()))) if per else float("nan")), per
