"""Ranking and probability metrics for rare-event classification.

AP is the mean of precision values at the ranks of the positives under
score-descending order; ties between equal scores are broken by stable
input order.  AUC is the Mann-Whitney statistic with half credit for score
ties.  F1 is evaluated at a supplied threshold and Brier is the mean
squared error of the probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .registry import RegistryError


@dataclass(frozen=True)
class MetricSet:
    ap: Optional[float]
    auc: Optional[float]
    f1: float
    brier: float
    threshold_used: float
    n_pos: int
    n_neg: int

    def as_dict(self) -> dict:
        return {
            "ap": self.ap,
            "auc": self.auc,
            "f1": self.f1,
            "brier": self.brier,
            "threshold_used": self.threshold_used,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
        }


def average_precision(scores: np.ndarray, labels: np.ndarray) -> Optional[float]:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == len(labels):
        return None
    order = np.argsort(-scores, kind="stable")
    hits = labels[order]
    cum_pos = np.cumsum(hits)
    ranks = np.arange(1, len(labels) + 1)
    precision_at_pos = cum_pos[hits == 1] / ranks[hits == 1]
    return float(precision_at_pos.sum() / n_pos)


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> Optional[float]:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _average_ranks(scores)
    r_pos = ranks[labels == 1].sum()
    u = r_pos - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties receiving their average rank."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=float)
    sx = x[order]
    i = 0
    while i < len(sx):
        j = i
        while j + 1 < len(sx) and sx[j + 1] == sx[i]:
            j += 1
        avg = (i + j) / 2 + 1
        ranks[order[i : j + 1]] = avg
        i = j + 1
    return ranks


def f1_score(scores: np.ndarray, labels: np.ndarray, threshold: float) -> float:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    pred = scores >= threshold
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def brier_score(probs: np.ndarray, labels: np.ndarray) -> float:
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=int)
    return float(np.mean((probs - labels) ** 2))


def best_f1_threshold(scores: np.ndarray, labels: np.ndarray) -> float:
    """Threshold (taken from the observed scores) maximizing F1."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    candidates = np.unique(scores)
    best_t, best_f1 = 0.5, -1.0
    for t in candidates:
        f1 = f1_score(scores, labels, float(t))
        if f1 > best_f1 + 1e-15:
            best_t, best_f1 = float(t), f1
    return best_t


def compute_metrics(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> MetricSet:
    """Full metric set; AP/AUC are None for single-class inputs."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if len(scores) == 0:
        raise RegistryError("empty metric input")
    if len(scores) != len(labels):
        raise RegistryError("scores and labels differ in length")
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    return MetricSet(
        ap=average_precision(scores, labels),
        auc=roc_auc(scores, labels),
        f1=f1_score(scores, labels, threshold),
        brier=brier_score(scores, labels),
        threshold_used=float(threshold),
        n_pos=n_pos,
        n_neg=n_neg,
    )
