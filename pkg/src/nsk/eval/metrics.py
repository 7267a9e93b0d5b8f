"""Confusion-matrix metrics, ROC analysis and the DeLong paired AUC test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DataError, DegenerateVariance
from .stats import normal_sf


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise DataError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @classmethod
    def from_labels(cls, y_true, y_pred) -> "ConfusionMatrix":
        t = np.asarray(y_true).astype(bool)
        p = np.asarray(y_pred).astype(bool)
        return cls(int(np.sum(t & p)), int(np.sum(~t & ~p)), int(np.sum(~t & p)), int(np.sum(t & ~p)))

    def as_dict(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    undefined: tuple = ()

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision,
                "recall": self.recall, "f1": self.f1, "undefined": list(self.undefined)}


def _ratio(num, den, name, undefined):
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


def metrics(cm: ConfusionMatrix) -> Metrics:
    """Accuracy, precision, recall and F1 (harmonic mean). A ratio with a zero
    denominator is reported as 0 and named in ``undefined``."""
    if cm.total == 0:
        raise DataError("empty confusion matrix")
    undefined: list[str] = []
    acc = (cm.tp + cm.tn) / cm.total
    prec = _ratio(cm.tp, cm.tp + cm.fp, "precision", undefined)
    rec = _ratio(cm.tp, cm.tp + cm.fn, "recall", undefined)
    f1 = _ratio(2 * prec * rec, prec + rec, "f1", undefined)
    return Metrics(acc, prec, rec, f1, tuple(undefined))


def _split(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise DataError("scores and labels must be 1-D arrays of equal length")
    pos, neg = s[y == 1], s[y == 0]
    if pos.size == 0 or neg.size == 0:
        raise DataError("ROC analysis needs both classes present")
    return pos, neg


def _midranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(x.size)
    starts = np.flatnonzero(np.concatenate(([True], xs[1:] != xs[:-1])))
    ends = np.append(starts[1:], x.size)
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = 0.5 * (s + e - 1) + 1
    return ranks


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied positive/negative pairs count one half."""
    pos, neg = _split(scores, labels)
    ranks = _midranks(np.concatenate([pos, neg]))
    m, n = pos.size, neg.size
    return float((ranks[:m].sum() - m * (m + 1) / 2) / (m * n))


def roc_curve(scores, labels) -> list[tuple[float, float]]:
    """(FPR, TPR) at every distinct threshold, from (0, 0) to (1, 1)."""
    pos, neg = _split(scores, labels)
    thresholds = np.unique(np.concatenate([pos, neg]))[::-1]
    pts = [(0.0, 0.0)]
    for thr in thresholds:
        pts.append((float(np.sum(neg >= thr) / neg.size), float(np.sum(pos >= thr) / pos.size)))
    if pts[-1] != (1.0, 1.0):
        pts.append((1.0, 1.0))
    return pts


def placements(scores, labels) -> tuple[float, np.ndarray, np.ndarray]:
    """AUC plus the DeLong structural components.

    V10[i] is the fraction of negatives ranked below positive i (ties one
    half); V01[j] the fraction of positives ranked above negative j.
    """
    pos, neg = _split(scores, labels)
    m, n = pos.size, neg.size
    all_ranks = _midranks(np.concatenate([pos, neg]))
    pos_ranks = _midranks(pos)
    neg_ranks = _midranks(neg)
    v10 = (all_ranks[:m] - pos_ranks) / n
    v01 = 1.0 - (all_ranks[m:] - neg_ranks) / m
    return float(v10.mean()), v10, v01


@dataclass(frozen=True)
class DelongResult:
    auc_a: float
    auc_b: float
    z: float
    p: float
    variance: float

    def as_dict(self) -> dict:
        return {"auc_a": self.auc_a, "auc_b": self.auc_b, "z": self.z, "p": self.p,
                "variance": self.variance, "significant": self.p < 0.05}


def delong_test(scores_a, scores_b, labels) -> DelongResult:
    """Paired two-sided test of AUC_a = AUC_b on the same samples."""
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    y = np.asarray(labels)
    if a.shape != b.shape or a.shape != y.shape:
        raise DataError("score vectors and labels must have equal length")
    auc_a, v10a, v01a = placements(a, y)
    auc_b, v10b, v01b = placements(b, y)
    m, n = v10a.size, v01a.size
    s10 = np.cov(np.vstack([v10a, v10b])) if m > 1 else np.zeros((2, 2))
    s01 = np.cov(np.vstack([v01a, v01b])) if n > 1 else np.zeros((2, 2))
    var = (s10[0, 0] + s10[1, 1] - 2 * s10[0, 1]) / m + (s01[0, 0] + s01[1, 1] - 2 * s01[0, 1]) / n
    diff = auc_a - auc_b
    if var <= 1e-15:
        if diff == 0:
            return DelongResult(auc_a, auc_b, 0.0, 1.0, float(var))
        raise DegenerateVariance("DeLong variance is zero but the AUCs differ")
    z = diff / math.sqrt(var)
    return DelongResult(auc_a, auc_b, float(z), float(min(1.0, 2 * normal_sf(abs(z)))), float(var))
