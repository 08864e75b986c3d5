"""From-scratch tree ensembles for imbalanced tabular classification.

Both ensembles grow binary trees on 256-bin feature histograms.  The random
forest bags depth-limited Gini trees with per-split feature subsampling;
gradient boosting fits additive trees on logistic-loss gradient/hessian
statistics with shrinkage.  NaN cells are the missing marker: every split
learns which child receives missing values.  Training is deterministic for
a fixed seed.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .registry import RegistryError

_MISSING_BIN = -1
_MAX_BINS = 256
_GB_LAMBDA = 1.0


class ModelKind(Enum):
    RANDOM_FOREST = "random_forest"
    GRADIENT_BOOSTED = "gradient_boosted"


class TrainingSkip(Exception):
    """Signals that a training slice cannot support model fitting."""


class DataError(RegistryError):
    pass


@dataclass(frozen=True)
class ModelParams:
    n_trees: int = 300
    max_depth: int = 6
    learning_rate: float = 0.05  # gradient boosting only
    min_leaf: int = 20
    feature_subsample: Optional[float] = None  # None = sqrt rule for RF, 1.0 for GB
    row_subsample: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.row_subsample <= 1):
            raise RegistryError("row_subsample must be in (0, 1]")
        if self.feature_subsample is not None and not (0 < self.feature_subsample <= 1):
            raise RegistryError("feature_subsample must be in (0, 1]")
        if not (0 < self.learning_rate <= 1):
            raise RegistryError("learning_rate must be in (0, 1]")


def rf_default_params(seed: int = 0) -> ModelParams:
    return ModelParams(n_trees=200, max_depth=12, learning_rate=1.0,
                       min_leaf=5, feature_subsample=None, row_subsample=1.0, seed=seed)


def gb_default_params(seed: int = 0) -> ModelParams:
    return ModelParams(n_trees=300, max_depth=6, learning_rate=0.05,
                       min_leaf=20, feature_subsample=1.0, row_subsample=0.8, seed=seed)


@dataclass
class _Tree:
    feature: list  # split feature index, -1 for leaf
    threshold: list  # raw-value threshold: x <= threshold goes left
    miss_left: list  # whether missing goes left
    left: list
    right: list
    value: list  # leaf payload (class fraction or boosting step)

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X))
        self._apply(0, np.arange(len(X)), X, out)
        return out

    def _apply(self, node: int, idx: np.ndarray, X: np.ndarray, out: np.ndarray) -> None:
        if self.feature[node] < 0:
            out[idx] = self.value[node]
            return
        x = X[idx, self.feature[node]]
        miss = np.isnan(x)
        go_left = np.where(miss, self.miss_left[node], x <= self.threshold[node])
        self._apply(self.left[node], idx[go_left], X, out)
        self._apply(self.right[node], idx[~go_left], X, out)

    def as_dict(self) -> dict:
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "miss_left": self.miss_left,
            "left": self.left,
            "right": self.right,
            "value": self.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "_Tree":
        return cls(**{k: list(d[k]) for k in ("feature", "threshold", "miss_left", "left", "right", "value")})


@dataclass(frozen=True)
class TreeEnsembleModel:
    kind: ModelKind
    trees: tuple[_Tree, ...]
    params: ModelParams
    n_features: int
    feature_importances: np.ndarray
    base_score: float = 0.0  # log-odds offset, gradient boosting only


def _bin_features(X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Quantile-bin each column; returns (int16 bins, thresholds per column).

    Bin b holds values in (thr[b-1], thr[b]]; the last bin is unbounded;
    missing cells get bin -1.
    """
    n, k = X.shape
    binned = np.empty((n, k), dtype=np.int16)
    thresholds: list[np.ndarray] = []
    for f in range(k):
        col = X[:, f]
        finite = col[~np.isnan(col)]
        uniq = np.unique(finite)
        if len(uniq) <= 1:
            thr = np.empty(0)
        elif len(uniq) <= _MAX_BINS - 1:
            thr = (uniq[:-1] + uniq[1:]) / 2
        else:
            qs = np.quantile(finite, np.linspace(0, 1, _MAX_BINS + 1)[1:-1])
            thr = np.unique(qs)
        thresholds.append(thr)
        b = np.searchsorted(thr, col, side="left").astype(np.int16)
        b[np.isnan(col)] = _MISSING_BIN
        binned[:, f] = b
    return binned, thresholds


def _choose_features(k: int, frac: Optional[float], kind: ModelKind, rng) -> np.ndarray:
    if frac is None:
        frac = math.sqrt(k) / k if kind is ModelKind.RANDOM_FOREST else 1.0
    n_sel = max(1, int(round(frac * k)))
    if n_sel >= k:
        return np.arange(k)
    return np.sort(rng.choice(k, size=n_sel, replace=False))


def _grow_tree(
    binned: np.ndarray,
    thresholds: list[np.ndarray],
    rows: np.ndarray,
    stats: dict,
    kind: ModelKind,
    params: ModelParams,
    rng,
    gain_out: np.ndarray,
) -> _Tree:
    tree = _Tree([], [], [], [], [], [])

    def new_node() -> int:
        for lst in (tree.feature, tree.threshold, tree.miss_left, tree.left, tree.right, tree.value):
            lst.append(-1 if lst is tree.feature else 0)
        return len(tree.feature) - 1

    def leaf_value(idx: np.ndarray) -> float:
        if kind is ModelKind.RANDOM_FOREST:
            return float(stats["y"][idx].mean())
        g = stats["g"][idx].sum()
        h = stats["h"][idx].sum()
        return float(-g / (h + _GB_LAMBDA) * params.learning_rate)

    def best_split(idx: np.ndarray):
        k = binned.shape[1]
        feats = _choose_features(k, params.feature_subsample, kind, rng)
        best = None  # (gain, f, bin, miss_left)
        if kind is ModelKind.RANDOM_FOREST:
            y = stats["y"][idx]
            n = len(idx)
            n_pos = y.sum()
            parent_imp = 1.0 - (n_pos / n) ** 2 - ((n - n_pos) / n) ** 2
        else:
            g_all = stats["g"][idx]
            h_all = stats["h"][idx]
            g_tot = g_all.sum()
            h_tot = h_all.sum()
            parent_obj = g_tot * g_tot / (h_tot + _GB_LAMBDA)
        for f in feats:
            thr = thresholds[f]
            if len(thr) == 0:
                continue
            nb = len(thr) + 1
            b = binned[idx, f]
            miss = b == _MISSING_BIN
            bp = b[~miss]
            if kind is ModelKind.RANDOM_FOREST:
                y = stats["y"][idx]
                hist_n = np.bincount(bp, minlength=nb).astype(float)
                hist_p = np.bincount(bp, weights=y[~miss], minlength=nb)
                n_miss = float(miss.sum())
                p_miss = float(y[miss].sum())
                cn = np.cumsum(hist_n)[:-1]
                cp = np.cumsum(hist_p)[:-1]
                n_tot = float(len(idx))
                p_tot = float(y.sum())
                for miss_left in (True, False):
                    nl = cn + (n_miss if miss_left else 0.0)
                    pl = cp + (p_miss if miss_left else 0.0)
                    nr = n_tot - nl
                    pr = p_tot - pl
                    ok = (nl >= params.min_leaf) & (nr >= params.min_leaf)
                    if not ok.any():
                        continue
                    with np.errstate(divide="ignore", invalid="ignore"):
                        gini_l = 1.0 - (pl / nl) ** 2 - ((nl - pl) / nl) ** 2
                        gini_r = 1.0 - (pr / nr) ** 2 - ((nr - pr) / nr) ** 2
                    child = (nl * gini_l + nr * gini_r) / n_tot
                    gain = np.where(ok, parent_imp - child, -np.inf)
                    bb = int(np.argmax(gain))
                    if gain[bb] > 1e-12 and (best is None or gain[bb] > best[0] + 1e-15):
                        best = (float(gain[bb]), int(f), bb, miss_left)
            else:
                hist_g = np.bincount(bp, weights=g_all[~miss], minlength=nb)
                hist_h = np.bincount(bp, weights=h_all[~miss], minlength=nb)
                hist_n = np.bincount(bp, minlength=nb).astype(float)
                g_miss = float(g_all[miss].sum())
                h_miss = float(h_all[miss].sum())
                n_miss = float(miss.sum())
                cg = np.cumsum(hist_g)[:-1]
                ch = np.cumsum(hist_h)[:-1]
                cn = np.cumsum(hist_n)[:-1]
                n_tot = float(len(idx))
                for miss_left in (True, False):
                    gl = cg + (g_miss if miss_left else 0.0)
                    hl = ch + (h_miss if miss_left else 0.0)
                    nl = cn + (n_miss if miss_left else 0.0)
                    gr = g_tot - gl
                    hr = h_tot - hl
                    nr = n_tot - nl
                    ok = (nl >= params.min_leaf) & (nr >= params.min_leaf)
                    if not ok.any():
                        continue
                    obj = gl * gl / (hl + _GB_LAMBDA) + gr * gr / (hr + _GB_LAMBDA)
                    gain = np.where(ok, obj - parent_obj, -np.inf)
                    bb = int(np.argmax(gain))
                    if gain[bb] > 1e-12 and (best is None or gain[bb] > best[0] + 1e-15):
                        best = (float(gain[bb]), int(f), bb, miss_left)
        return best

    def grow(idx: np.ndarray, depth: int) -> int:
        node = new_node()
        split = None
        if depth < params.max_depth and len(idx) >= 2 * params.min_leaf:
            split = best_split(idx)
        if split is None:
            tree.feature[node] = -1
            tree.value[node] = leaf_value(idx)
            return node
        gain, f, bb, miss_left = split
        gain_out[f] += gain
        b = binned[idx, f]
        miss = b == _MISSING_BIN
        go_left = np.where(miss, miss_left, b <= bb)
        tree.feature[node] = f
        tree.threshold[node] = float(thresholds[f][bb])
        tree.miss_left[node] = bool(miss_left)
        tree.left[node] = grow(idx[go_left], depth + 1)
        tree.right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(rows, 0)
    return tree


def undersample(labels: np.ndarray, neg_per_pos: float, seed: int) -> np.ndarray:
    """Indices keeping all positives and a seeded sample of negatives."""
    labels = np.asarray(labels, dtype=int)
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    if len(pos) == 0:
        raise TrainingSkip("no positives to train on")
    n_keep = int(neg_per_pos * len(pos))
    if n_keep < len(neg):
        rng = np.random.default_rng(seed)
        neg = np.sort(rng.choice(neg, size=n_keep, replace=False))
    return np.sort(np.concatenate([pos, neg]))


def train(
    X: np.ndarray, y: np.ndarray, params: ModelParams, kind: ModelKind
) -> TreeEnsembleModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or len(X) != len(y):
        raise RegistryError("bad training matrix shape")
    if len(X) < 2:
        raise TrainingSkip("fewer than 2 rows")
    if np.isinf(X).any():
        raise DataError("infinite value in feature matrix")
    classes = np.unique(y)
    if len(classes) < 2:
        raise TrainingSkip("single-class training slice")

    n, k = X.shape
    binned, thresholds = _bin_features(X)
    gain = np.zeros(k)
    trees: list[_Tree] = []
    seeds = np.random.SeedSequence(params.seed).spawn(params.n_trees)

    if kind is ModelKind.RANDOM_FOREST:
        for t in range(params.n_trees):
            rng = np.random.default_rng(seeds[t])
            rows = rng.integers(0, n, size=n)  # bootstrap
            if params.row_subsample < 1.0:
                rows = rows[: max(1, int(params.row_subsample * n))]
            if len(np.unique(y[rows])) < 2:
                rows = np.arange(n)
            trees.append(
                _grow_tree(binned, thresholds, rows, {"y": y.astype(float)},
                           kind, params, rng, gain)
            )
        base = 0.0
    else:
        p0 = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
        base = math.log(p0 / (1 - p0))
        raw = np.full(n, base)
        for t in range(params.n_trees):
            rng = np.random.default_rng(seeds[t])
            p = 1.0 / (1.0 + np.exp(-raw))
            g = p - y
            h = p * (1 - p)
            if params.row_subsample < 1.0:
                m_rows = max(1, int(params.row_subsample * n))
                rows = np.sort(rng.choice(n, size=m_rows, replace=False))
            else:
                rows = np.arange(n)
            tree = _grow_tree(binned, thresholds, rows, {"g": g, "h": h},
                              kind, params, rng, gain)
            trees.append(tree)
            raw += tree.predict(X)

    total = gain.sum()
    importances = gain / total if total > 0 else np.zeros(k)
    return TreeEnsembleModel(
        kind=kind,
        trees=tuple(trees),
        params=params,
        n_features=k,
        feature_importances=importances,
        base_score=base,
    )


def predict_raw(model: TreeEnsembleModel, X: np.ndarray) -> np.ndarray:
    """RF: mean leaf fraction; GB: log-odds before the sigmoid."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise RegistryError(
            f"feature count mismatch: got {X.shape[1] if X.ndim == 2 else '?'}, "
            f"expected {model.n_features}"
        )
    if model.kind is ModelKind.RANDOM_FOREST:
        if not model.trees:
            return np.full(len(X), 0.5)
        acc = np.zeros(len(X))
        for tree in model.trees:
            acc += tree.predict(X)
        return acc / len(model.trees)
    acc = np.full(len(X), model.base_score)
    for tree in model.trees:
        acc += tree.predict(X)
    return acc


def predict_proba(model: TreeEnsembleModel, X: np.ndarray) -> np.ndarray:
    raw = predict_raw(model, X)
    if model.kind is ModelKind.RANDOM_FOREST:
        return raw
    return 1.0 / (1.0 + np.exp(-raw))


MODEL_FORMAT_VERSION = 1


def model_to_json(model: TreeEnsembleModel, catalog_hash: str = "") -> str:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind.value,
        "base_score": model.base_score,
        "n_features": model.n_features,
        "catalog_hash": catalog_hash,
        "params": {
            "n_trees": model.params.n_trees,
            "max_depth": model.params.max_depth,
            "learning_rate": model.params.learning_rate,
            "min_leaf": model.params.min_leaf,
            "feature_subsample": model.params.feature_subsample,
            "row_subsample": model.params.row_subsample,
            "seed": model.params.seed,
        },
        "feature_importances": [float(v) for v in model.feature_importances],
        "trees": [t.as_dict() for t in model.trees],
    }
    return json.dumps(doc, sort_keys=True)


def model_from_json(text: str) -> TreeEnsembleModel:
    doc = json.loads(text)
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise RegistryError(f"unsupported model format {doc.get('format_version')}")
    return TreeEnsembleModel(
        kind=ModelKind(doc["kind"]),
        trees=tuple(_Tree.from_dict(t) for t in doc["trees"]),
        params=ModelParams(**doc["params"]),
        n_features=int(doc["n_features"]),
        feature_importances=np.asarray(doc["feature_importances"]),
        base_score=float(doc["base_score"]),
    )


def catalog_hash(names: Sequence[str]) -> str:
    return hashlib.sha256("\n".join(names).encode()).hexdigest()[:16]
