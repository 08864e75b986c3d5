"""Isotonic probability calibration via pool-adjacent-violators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .registry import RegistryError


@dataclass(frozen=True)
class IsotonicCalibrator:
    """Non-decreasing step function mapping scores to probabilities."""

    breakpoints: np.ndarray  # increasing score values
    fitted: np.ndarray  # non-decreasing probabilities, same length

    def apply(self, scores: np.ndarray) -> np.ndarray:
        scores = np.asarray(scores, dtype=float)
        # value of the step at the rightmost breakpoint <= score, clamped
        idx = np.searchsorted(self.breakpoints, scores, side="right") - 1
        idx = np.clip(idx, 0, len(self.breakpoints) - 1)
        return self.fitted[idx]


def fit_isotonic(scores: np.ndarray, labels: np.ndarray) -> IsotonicCalibrator:
    """Least-squares isotonic fit of labels ordered by score.

    Tied scores are pooled into a single block first so the result is a
    well-defined function of the score.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if len(scores) == 0:
        raise RegistryError("empty calibration input")
    if len(scores) != len(labels):
        raise RegistryError("scores and labels differ in length")

    order = np.argsort(scores, kind="stable")
    s = scores[order]
    y = labels[order]

    # group identical scores
    xs: list[float] = []
    ys: list[float] = []
    ws: list[float] = []
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and s[j + 1] == s[i]:
            j += 1
        xs.append(float(s[i]))
        ys.append(float(y[i : j + 1].mean()))
        ws.append(float(j - i + 1))
        i = j + 1

    # pool adjacent violators
    level_y: list[float] = []
    level_w: list[float] = []
    level_len: list[int] = []
    for val, w in zip(ys, ws):
        level_y.append(val)
        level_w.append(w)
        level_len.append(1)
        while len(level_y) > 1 and level_y[-2] > level_y[-1]:
            w2 = level_w[-2] + level_w[-1]
            v2 = (level_y[-2] * level_w[-2] + level_y[-1] * level_w[-1]) / w2
            level_y[-2:] = [v2]
            level_w[-2:] = [w2]
            level_len[-2:] = [level_len[-2] + level_len[-1]]

    fitted = np.empty(len(xs))
    pos = 0
    for v, ln in zip(level_y, level_len):
        fitted[pos : pos + ln] = v
        pos += ln
    return IsotonicCalibrator(breakpoints=np.asarray(xs), fitted=fitted)


def apply_calibrator(calibrator: IsotonicCalibrator, scores: np.ndarray) -> np.ndarray:
    return calibrator.apply(scores)
