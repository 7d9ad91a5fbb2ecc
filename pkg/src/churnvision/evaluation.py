"""ROC curves and AUC.

The production AUC is the rank statistic (probability a random positive
outscores a random negative, ties counted half), computed from average ranks
in O(n log n). It equals the trapezoidal area under the ROC curve emitted at
distinct-score thresholds; a literal pairwise loop is kept as a test oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _validated(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"scores {s.shape} and labels {y.shape} must be equal-length vectors")
    if s.size == 0:
        raise ValueError("need at least one score")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    y = y.astype(np.int64)
    pos = int(y.sum())
    neg = y.size - pos
    if pos == 0 or neg == 0:
        raise ValueError(f"need both classes to rank: {pos} positives, {neg} negatives")
    return s, y, pos, neg


def auc(scores, labels) -> float:
    """Rank-based AUC with the half-tie convention (average ranks)."""
    s, y, pos, neg = _validated(scores, labels)
    order = np.argsort(s, kind="stable")
    _, first, counts = np.unique(s[order], return_index=True, return_counts=True)
    group_rank = first + (counts - 1) / 2.0 + 1.0  # 1-based average rank per tie group
    ranks = np.empty(s.size, dtype=np.float64)
    ranks[order] = np.repeat(group_rank, counts)
    rank_sum = math.fsum(ranks[y == 1])
    return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg)


def roc_curve(scores, labels) -> list:
    """ROC points (fpr, tpr) swept over distinct thresholds, descending.

    Tied scores collapse into single segments, so the curve is free of
    intra-tie ordering effects. Points begin at (0, 0) and end at (1, 1).
    """
    s, y, pos, neg = _validated(scores, labels)
    _, inverse = np.unique(s, return_inverse=True)
    pos_per_score = np.bincount(inverse, weights=y)
    all_per_score = np.bincount(inverse)
    tp = np.cumsum(pos_per_score[::-1])          # thresholds descending
    fp = np.cumsum((all_per_score - pos_per_score)[::-1])
    points = [(0.0, 0.0)]
    points.extend((float(f) / neg, float(t) / pos) for f, t in zip(fp, tp))
    return points


def trapezoid_area(points) -> float:
    """Trapezoidal area under a piecewise-linear curve of (x, y) points."""
    return math.fsum((x2 - x1) * (y1 + y2) / 2.0
                     for (x1, y1), (x2, y2) in zip(points[:-1], points[1:]))


def auc_pairwise_oracle(scores, labels) -> float:
    """Literal positive-negative double loop; test fixture for small inputs."""
    s, y, pos, neg = _validated(scores, labels)
    positives = s[y == 1]
    negatives = s[y == 0]
    wins = 0.0
    for sp in positives:
        for sn in negatives:
            if sp > sn:
                wins += 1.0
            elif sp == sn:
                wins += 0.5
    return wins / (pos * neg)


@dataclass
class AucReport:
    auc: float
    roc_points: list
    positives: int
    negatives: int
    dataset: str = ""


def evaluate_scores(scores, labels, dataset: str = "") -> AucReport:
    """Full report: rank AUC plus the ROC curve it must agree with.

    The rank statistic and the trapezoidal area of the emitted points are the
    same quantity; the builder enforces their agreement to 1e-12.
    """
    s, y, pos, neg = _validated(scores, labels)
    area = auc(s, y)
    points = roc_curve(s, y)
    if abs(area - trapezoid_area(points)) > 1e-12:
        raise AssertionError("rank AUC and trapezoidal ROC area disagree beyond 1e-12")
    return AucReport(area, points, pos, neg, dataset)
