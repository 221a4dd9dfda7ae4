"""Ranking metrics: ROC curve by threshold sweep, AUC, Youden threshold.

Scores arrive as (score, label) with label +1 for homologous pairs and
-1 otherwise.  A pair is predicted positive when its score is >= the
threshold.  Thresholds are swept over the distinct scores in descending
order, tied scores moving together, which makes the trapezoid AUC equal
to the pairwise ranking probability with half credit for ties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class RocCurve:
    """Sweep result: (threshold, fpr, tpr) points plus the trapezoid AUC.

    Points are ordered by descending threshold and start at the sentinel
    (inf, 0, 0); fpr and tpr are therefore non-decreasing.
    """

    points: tuple[tuple[float, float, float], ...]
    auc: float


def roc_curve(scores: Sequence[tuple[float, int]]) -> RocCurve:
    pos_total = sum(1 for _, label in scores if label > 0)
    neg_total = len(scores) - pos_total
    if pos_total == 0 or neg_total == 0:
        raise ValueError(
            f"need both classes to sweep a curve, got {pos_total} positive "
            f"and {neg_total} negative scores"
        )
    by_score = sorted(scores, key=lambda sl: -sl[0])
    points: list[tuple[float, float, float]] = [(math.inf, 0.0, 0.0)]
    auc = 0.0
    tp = fp = 0
    idx = 0
    while idx < len(by_score):
        threshold = by_score[idx][0]
        while idx < len(by_score) and by_score[idx][0] == threshold:
            if by_score[idx][1] > 0:
                tp += 1
            else:
                fp += 1
            idx += 1
        fpr, tpr = fp / neg_total, tp / pos_total
        _, prev_fpr, prev_tpr = points[-1]
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0
        points.append((threshold, fpr, tpr))
    return RocCurve(points=tuple(points), auc=auc)


def roc_auc(scores: Sequence[tuple[float, int]]) -> float:
    return roc_curve(scores).auc


def youden_threshold(curve: RocCurve) -> float:
    """Threshold maximizing tpr - fpr; ties resolve to the higher
    threshold.  The leading sentinel point is not a candidate."""
    best_j = -math.inf
    best_threshold = math.nan
    for threshold, fpr, tpr in curve.points[1:]:
        j = tpr - fpr
        if j > best_j:
            best_j = j
            best_threshold = threshold
    return best_threshold


def write_roc_csv(path, curve: RocCurve) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("threshold,fpr,tpr\n")
        for threshold, fpr, tpr in curve.points:
            fh.write(f"{threshold},{fpr},{tpr}\n")


def read_roc_csv(path) -> RocCurve:
    points: list[tuple[float, float, float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "threshold,fpr,tpr":
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            t, f, r = line.strip().split(",")
            points.append((float(t), float(f), float(r)))
    auc = 0.0
    for (_, f0, t0), (_, f1, t1) in zip(points, points[1:]):
        auc += (f1 - f0) * (t1 + t0) / 2.0
    return RocCurve(points=tuple(points), auc=auc)
