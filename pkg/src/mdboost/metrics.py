"""Binary-detector evaluation: AUC, EER, and threshold accuracy.

Score polarity is fixed across the toolkit: higher score means more likely
fake (label 1). AUC is the pairwise win probability with ties counted as
half a win; EER comes from an exhaustive sweep over the distinct scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError


@dataclass
class ScoredSet:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.scores.ndim != 1 or self.labels.ndim != 1:
            raise ShapeError("scores and labels must be 1-D")
        if self.scores.shape != self.labels.shape:
            raise ShapeError(
                f"{self.scores.size} scores vs {self.labels.size} labels"
            )
        if self.scores.size < 1:
            raise DomainError("need at least one scored sample")
        if not np.all(np.isfinite(self.scores)):
            raise DomainError("scores must be finite")
        if np.any((self.labels != 0) & (self.labels != 1)):
            raise DomainError("labels must be 0 (real) or 1 (fake)")

    def class_counts(self) -> tuple[int, int]:
        n_fake = int(np.sum(self.labels == 1))
        return self.scores.size - n_fake, n_fake


@dataclass
class MetricsReport:
    acc: float
    threshold_used: float
    counts: tuple[int, int, int, int]  # (tp, fp, tn, fn), positive = fake
    auc: float | None = None
    eer: float | None = None

    def to_record(self) -> dict:
        tp, fp, tn, fn = self.counts
        return {
            "acc": self.acc,
            "eer": self.eer,
            "auc": self.auc,
            "threshold": self.threshold_used,
            "tp": tp,
            "fp": fp,
            "tn": tn,
            "fn": fn,
        }


def _require_both_classes(s: ScoredSet, op: str) -> tuple[int, int]:
    n_real, n_fake = s.class_counts()
    if n_real == 0 or n_fake == 0:
        raise DomainError(f"{op} needs both classes present")
    return n_real, n_fake


def _tie_averaged_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks; tied scores share the mean of their rank range."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        # positions i..j (0-based) share the average rank (i+1 + j+1) / 2
        ranks[order[i : j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return ranks


def auc(s: ScoredSet) -> float:
    """P(random fake outscores random real), ties counted half.

    Computed from tie-averaged ranks, which is algebraically the same as
    the pairwise count and as trapezoidal ROC integration.
    """
    n_real, n_fake = _require_both_classes(s, "auc")
    ranks = _tie_averaged_ranks(s.scores)
    rank_sum = float(np.sum(ranks[s.labels == 1]))
    return (rank_sum - n_fake * (n_fake + 1) / 2.0) / (n_fake * n_real)


def _rates_at(s: ScoredSet, threshold: float) -> tuple[float, float]:
    """(FPR, FNR) when predicting fake iff score >= threshold."""
    pred_fake = s.scores >= threshold
    n_real, n_fake = s.class_counts()
    fp = int(np.sum(pred_fake & (s.labels == 0)))
    fn = int(np.sum(~pred_fake & (s.labels == 1)))
    return fp / n_real, fn / n_fake


def eer(s: ScoredSet) -> tuple[float, float]:
    """Equal error rate and the threshold achieving it.

    Sweeps every distinct score plus +inf as thresholds (predict fake iff
    score >= t), picks the one minimizing |FPR - FNR| (ties -> lower
    threshold), and reports (FPR + FNR) / 2 there.
    """
    _require_both_classes(s, "eer")
    candidates = np.concatenate([np.unique(s.scores), [np.inf]])
    best = None
    for t in candidates:
        fpr, fnr = _rates_at(s, t)
        gap = abs(fpr - fnr)
        if best is None or gap < best[0]:
            best = (gap, (fpr + fnr) / 2.0, float(t))
    return best[1], best[2]


def acc(s: ScoredSet, threshold: float = 0.5) -> MetricsReport:
    """Accuracy report at a threshold: predict fake iff score >= threshold."""
    pred_fake = s.scores >= threshold
    is_fake = s.labels == 1
    tp = int(np.sum(pred_fake & is_fake))
    fp = int(np.sum(pred_fake & ~is_fake))
    tn = int(np.sum(~pred_fake & ~is_fake))
    fn = int(np.sum(~pred_fake & is_fake))
    return MetricsReport(
        acc=(tp + tn) / s.scores.size,
        threshold_used=threshold,
        counts=(tp, fp, tn, fn),
    )


def evaluate(s: ScoredSet, threshold: float = 0.5) -> MetricsReport:
    """Full report: accuracy at the threshold plus AUC and EER."""
    report = acc(s, threshold)
    report.auc = auc(s)
    report.eer = eer(s)[0]
    return report
