# Ranking metrics for the minority class. Everything is computed from the descending-score ordering,
# with tied scores grouped into a single threshold.

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

METRIC_NAMES = ("map", "auc_roc", "precision_at_recall")

# recall comparisons tolerate float noise from tp / n_pos
_RECALL_TOLERANCE = 1e-12


@dataclass(frozen=True)
class ScoredLabels:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if scores.size != labels.size:
            raise ValueError(f"{scores.size} scores but {labels.size} labels")
        if scores.size == 0:
            raise ValueError("Need at least one scored sample")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("Labels must be 0 or 1")
        if not np.isfinite(scores).all():
            raise ValueError("Scores must be finite")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)

    @property
    def n_positive(self) -> int:
        return int(self.labels.sum())


def _threshold_curve(s: ScoredLabels) -> tuple[np.ndarray, np.ndarray]:
    """ (precision, recall) at every distinct score threshold, highest threshold first. """

    if s.n_positive == 0:
        raise ValueError("Metric needs at least one positive (minority) sample")

    order = np.argsort(-s.scores, kind="stable")
    ordered_scores = s.scores[order]
    ordered_labels = s.labels[order]

    # last position of each tie group
    ends = np.r_[np.flatnonzero(ordered_scores[1:] != ordered_scores[:-1]), ordered_scores.size - 1]
    true_pos = np.cumsum(ordered_labels)[ends]
    predicted = ends + 1

    precision = true_pos / predicted
    recall = true_pos / s.n_positive
    return precision, recall


def average_precision(s: ScoredLabels) -> float:
    """ sum_n (R_n - R_{n-1}) * P_n, non-interpolated. """

    precision, recall = _threshold_curve(s)
    steps = np.diff(np.r_[0.0, recall])
    return float((steps * precision).sum())


def auc_roc(s: ScoredLabels) -> float:
    """ Mann-Whitney form: P(random positive outranks random negative), ties count half. """

    n_pos = s.n_positive
    n_neg = s.labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC-ROC needs both classes (single-class input)")

    ranks = rankdata(s.scores, method="average")
    rank_sum = ranks[s.labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def precision_at_recall(s: ScoredLabels, recall_floor: float = 0.4) -> float:
    if not 0.0 < recall_floor <= 1.0:
        raise ValueError(f"recall_floor must be in (0, 1], got {recall_floor}")

    precision, recall = _threshold_curve(s)
    # the lowest threshold has recall 1, so this mask is never empty
    reachable = recall >= recall_floor - _RECALL_TOLERANCE
    return float(precision[reachable].max())


def compute_metrics(scores, labels, names=METRIC_NAMES, recall_floor: float = 0.4) -> dict[str, float]:
    s = ScoredLabels(scores, labels)
    results = {}
    for name in names:
        if name == "map":
            results[name] = average_precision(s)
        elif name == "auc_roc":
            results[name] = auc_roc(s)
        elif name == "precision_at_recall":
            results[name] = precision_at_recall(s, recall_floor)
        else:
            raise ValueError(f"Unknown metric {name!r}, expected one of {METRIC_NAMES}")
    return results
