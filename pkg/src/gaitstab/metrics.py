"""Confusion counts, precision/recall/F-score/accuracy and ROC/AUC."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_labels(cls, predicted, actual):
        p = np.asarray(predicted).astype(bool)
        a = np.asarray(actual).astype(bool)
        if p.shape != a.shape:
            raise ValueError("prediction and label arrays differ in shape")
        return cls(int(np.sum(p & a)), int(np.sum(p & ~a)), int(np.sum(~p & ~a)), int(np.sum(~p & a)))


@dataclass(frozen=True)
class ClassificationMetrics:
    precision: float
    recall: float
    fscore: float
    accuracy: float


def _ratio(num, den):
    return num / den if den else 0.0


def metrics(counts):
    if counts.total <= 0:
        raise ValueError("no evaluated frames")
    precision = _ratio(counts.tp, counts.tp + counts.fp)
    recall = _ratio(counts.tp, counts.tp + counts.fn)
    fscore = _ratio(2 * precision * recall, precision + recall)
    accuracy = (counts.tp + counts.tn) / counts.total
    return ClassificationMetrics(precision, recall, fscore, accuracy)


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # first entry +inf: nothing predicted positive

    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def _check_binary(scores, labels):
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    pos = labels == 1
    if pos.all() or not pos.any():
        raise ValueError("ROC analysis needs both classes present")
    return scores, pos


def roc_curve(scores, labels):
    """Threshold sweep from the highest score down; tied scores form one step."""
    scores, pos = _check_binary(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    p = pos[order]
    tp = np.cumsum(p)
    fp = np.cumsum(~p)
    last_of_group = np.r_[s[1:] != s[:-1], True]
    tp = np.r_[0, tp[last_of_group]]
    fp = np.r_[0, fp[last_of_group]]
    thresholds = np.r_[np.inf, s[last_of_group]]
    return RocCurve(fp / fp[-1], tp / tp[-1], thresholds)


def roc_auc(scores, labels):
    """(RocCurve, trapezoidal area under it)."""
    curve = roc_curve(scores, labels)
    area = float(np.sum(np.diff(curve.fpr) * (curve.tpr[1:] + curve.tpr[:-1]) / 2.0))
    return curve, area


def auc_pairwise_oracle(scores, labels):
    """P(score+ > score-) + 0.5 P(tie), by explicit comparison of every pair."""
    scores, pos = _check_binary(scores, labels)
    sp = scores[pos]
    sn = scores[~pos]
    wins = 0.0
    for a in sp:
        wins += np.sum(a > sn) + 0.5 * np.sum(a == sn)
    return float(wins / (len(sp) * len(sn)))


def write_roc_csv(path, curve):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "fpr", "tpr"])
        for th, f, t in zip(curve.thresholds, curve.fpr, curve.tpr):
            w.writerow([repr(float(th)), repr(float(f)), repr(float(t))])
