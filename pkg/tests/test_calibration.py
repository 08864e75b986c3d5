import itertools

import numpy as np
import pytest

from churnet.calibration import fit_isotonic
from churnet.registry import RegistryError


def isotonic_oracle(scores, labels):
    """Exhaustive search over contiguous block partitions of tie groups.

    The fitted calibrator must be a function of the score, so rows with tied
    scores first collapse to one weighted group.  Any isotonic least-squares
    solution is then piecewise constant over contiguous groups with weighted
    block means as values; enumerating every partition and keeping the
    feasible one with minimal weighted squared error is exact for small n.
    Returns one fitted value per distinct score, ascending.
    """
    order = sorted(range(len(scores)), key=lambda i: scores[i])
    # tie-group (score-sorted) into weighted means
    grouped = []
    for i in order:
        if grouped and grouped[-1][0] == scores[i]:
            s, total, w = grouped[-1]
            grouped[-1] = (s, total + labels[i], w + 1)
        else:
            grouped.append((scores[i], labels[i], 1))
    ys = [t / w for _, t, w in grouped]
    ws = [w for _, _, w in grouped]
    n = len(ys)
    best_fit, best_err = None, None
    for cuts in itertools.product([0, 1], repeat=n - 1):
        blocks = []
        start = 0
        for i, c in enumerate(cuts, start=1):
            if c:
                blocks.append((start, i))
                start = i
        blocks.append((start, n))
        means = [
            sum(ys[i] * ws[i] for i in range(a, b)) / sum(ws[a:b]) for a, b in blocks
        ]
        if any(means[i] > means[i + 1] for i in range(len(means) - 1)):
            continue
        fit = []
        for (a, b), mval in zip(blocks, means):
            fit.extend([mval] * (b - a))
        err = sum(w * (f - v) ** 2 for f, v, w in zip(fit, ys, ws))
        if best_err is None or err < best_err - 1e-15:
            best_fit, best_err = fit, err
    return best_fit


def test_hand_example():
    cal = fit_isotonic(np.array([0.1, 0.2, 0.3]), np.array([0, 1, 0]))
    assert cal.fitted.tolist() == pytest.approx([0.0, 0.5, 0.5])


def test_already_monotone_untouched():
    cal = fit_isotonic(np.array([0.1, 0.2, 0.3, 0.4]), np.array([0, 0, 1, 1]))
    assert cal.fitted.tolist() == [0, 0, 1, 1]


def test_constant_when_all_positive():
    cal = fit_isotonic(np.array([0.2, 0.8]), np.array([1, 1]))
    assert cal.apply(np.array([0.0, 0.5, 1.0])).tolist() == [1.0, 1.0, 1.0]


def test_ties_pooled_into_single_breakpoint():
    cal = fit_isotonic(np.array([0.5, 0.5, 0.9]), np.array([0, 1, 1]))
    assert cal.breakpoints.tolist() == [0.5, 0.9]
    assert cal.apply(np.array([0.5]))[0] == pytest.approx(0.5)


def test_apply_clamps_and_steps():
    cal = fit_isotonic(np.array([0.2, 0.4, 0.8]), np.array([0, 1, 1]))
    out = cal.apply(np.array([0.0, 0.3, 0.9]))
    assert out[0] == cal.fitted[0]  # below the first breakpoint
    assert out[1] == cal.fitted[0]  # right-continuous step
    assert out[2] == cal.fitted[-1]


def test_matches_exhaustive_oracle_on_random_sequences():
    rng = np.random.default_rng(11)
    for trial in range(60):
        n = int(rng.integers(1, 13))
        scores = np.round(rng.random(n), 1)  # duplicates likely
        labels = rng.random(n)  # real-valued targets stress PAV arithmetic
        cal = fit_isotonic(scores, labels)
        oracle = isotonic_oracle(scores.tolist(), labels.tolist())
        assert cal.fitted.tolist() == pytest.approx(oracle, abs=1e-9)


def test_monotone_output_always():
    rng = np.random.default_rng(3)
    for trial in range(50):
        n = int(rng.integers(1, 30))
        cal = fit_isotonic(rng.random(n), rng.integers(0, 2, n))
        assert all(np.diff(cal.fitted) >= -1e-12)


def test_empty_rejected():
    with pytest.raises(RegistryError):
        fit_isotonic(np.array([]), np.array([]))
