"""Leakage-safe walk-forward training and evaluation.

For a test month m with gap g, training rows come from snapshot months
<= m - 1 - g, whose labels reference months <= m - g; the last few training
months are held out as a calibration slice for isotonic fitting and F1
threshold selection and are excluded from model fitting.  The training
window expands as the test month advances.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .calibration import IsotonicCalibrator, fit_isotonic
from .features import FeatureCatalog, FeatureCategory, FeatureMatrix, FeaturePipeline, default_catalog
from .graphs import FirmWeightScheme
from .learners import (
    ModelKind,
    ModelParams,
    TrainingSkip,
    TreeEnsembleModel,
    gb_default_params,
    predict_proba,
    train,
    undersample,
)
from .metrics import MetricSet, best_f1_threshold, brier_score, compute_metrics
from .months import format_month
from .registry import RecordSet, RegistryError, TemporalGrid


@dataclass(frozen=True)
class WalkForwardConfig:
    first_test_month: int
    last_test_month: int
    gap_months: int = 1
    min_train_months: int = 6
    model_params: ModelParams = field(default_factory=gb_default_params)
    model_kind: ModelKind = ModelKind.GRADIENT_BOOSTED
    undersample_ratio: float = 10.0
    calibration_slice_months: int = 6
    seed: int = 0
    threads: int = 1

    def validate(self, grid: TemporalGrid) -> None:
        if self.first_test_month > self.last_test_month:
            raise RegistryError("first_test_month after last_test_month")
        if self.gap_months < 0:
            raise RegistryError("gap_months must be >= 0")
        if self.last_test_month > grid.end or self.first_test_month < grid.start:
            raise RegistryError("test months outside grid")
        if self.first_test_month - self.min_train_months - self.gap_months < grid.start:
            raise RegistryError("not enough history before first_test_month")


@dataclass(frozen=True)
class MonthResult:
    month: int
    skipped: bool
    reason: str
    n_rows: int
    n_pos: int
    metrics: Optional[MetricSet] = None
    brier_raw: Optional[float] = None

    def as_dict(self) -> dict:
        return {
            "month": format_month(self.month),
            "skipped": self.skipped,
            "reason": self.reason,
            "n_rows": self.n_rows,
            "n_pos": self.n_pos,
            "metrics": self.metrics.as_dict() if self.metrics else None,
            "brier_raw": self.brier_raw,
        }


@dataclass(frozen=True)
class EvaluationReport:
    per_month: tuple[MonthResult, ...]
    means: Mapping[str, float]
    sds: Mapping[str, float]
    importance_by_category: Mapping[str, float]
    importance_by_feature: tuple[tuple[str, float], ...]
    config: Mapping[str, object]

    def as_dict(self) -> dict:
        return {
            "per_month": [r.as_dict() for r in self.per_month],
            "means": dict(self.means),
            "sds": dict(self.sds),
            "importance_by_category": dict(self.importance_by_category),
            "importance_by_feature": [[n, v] for n, v in self.importance_by_feature],
            "config": dict(self.config),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=1)

    def months_csv(self) -> str:
        lines = ["month,ap,auc,f1,brier,n_rows,n_pos,skipped,reason"]
        for r in self.per_month:
            m = r.metrics
            vals = [
                format_month(r.month),
                "" if m is None or m.ap is None else repr(m.ap),
                "" if m is None or m.auc is None else repr(m.auc),
                "" if m is None else repr(m.f1),
                "" if m is None else repr(m.brier),
                str(r.n_rows),
                str(r.n_pos),
                "1" if r.skipped else "0",
                r.reason,
            ]
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"


def _config_echo(cfg: WalkForwardConfig, catalog: FeatureCatalog) -> dict:
    return {
        "first_test_month": format_month(cfg.first_test_month),
        "last_test_month": format_month(cfg.last_test_month),
        "gap_months": cfg.gap_months,
        "min_train_months": cfg.min_train_months,
        "model_kind": cfg.model_kind.value,
        "model_params": {
            "n_trees": cfg.model_params.n_trees,
            "max_depth": cfg.model_params.max_depth,
            "learning_rate": cfg.model_params.learning_rate,
            "min_leaf": cfg.model_params.min_leaf,
            "feature_subsample": cfg.model_params.feature_subsample,
            "row_subsample": cfg.model_params.row_subsample,
            "seed": cfg.model_params.seed,
        },
        "undersample_ratio": cfg.undersample_ratio,
        "calibration_slice_months": cfg.calibration_slice_months,
        "seed": cfg.seed,
        "columns": list(catalog.names),
    }


def _train_months(grid: TemporalGrid, cfg: WalkForwardConfig, m: int) -> list[int]:
    return [mt for mt in range(grid.start, m - cfg.gap_months) if mt <= grid.end]


def _split_calibration(months: list[int], calib: int) -> tuple[list[int], list[int]]:
    if calib <= 0 or len(months) <= calib:
        return months, []
    return months[:-calib], months[-calib:]


def _month_seed(seed: int, m: int) -> int:
    return int(np.random.SeedSequence([seed, m]).generate_state(1)[0])


def _stack(mats: Sequence[FeatureMatrix]) -> tuple[np.ndarray, np.ndarray]:
    X = np.concatenate([mat.values for mat in mats], axis=0)
    y = np.concatenate([mat.labels for mat in mats], axis=0)
    return X, y


def _evaluate_month(
    pipe: FeaturePipeline,
    columns: Sequence[str],
    grid: TemporalGrid,
    cfg: WalkForwardConfig,
    m: int,
) -> tuple[MonthResult, Optional[TreeEnsembleModel]]:
    months = _train_months(grid, cfg, m)
    fit_months, cal_months = _split_calibration(months, cfg.calibration_slice_months)
    if len(fit_months) < cfg.min_train_months:
        return MonthResult(m, True, "insufficient training months", 0, 0), None

    test = pipe.matrix(m).select(columns)
    n_rows = len(test.rows)
    n_pos = int(test.labels.sum())
    if n_rows == 0:
        return MonthResult(m, True, "no active rows", 0, 0), None

    fit_mats = [pipe.matrix(mt).select(columns) for mt in fit_months]
    X_fit, y_fit = _stack(fit_mats)
    seed = _month_seed(cfg.seed, m)
    try:
        keep = undersample(y_fit, cfg.undersample_ratio, seed)
        params = replace(cfg.model_params, seed=seed)
        model = train(X_fit[keep], y_fit[keep], params, cfg.model_kind)
    except TrainingSkip as exc:
        return MonthResult(m, True, str(exc), n_rows, n_pos), None

    calibrator: Optional[IsotonicCalibrator] = None
    threshold = 0.5
    if cal_months:
        cal_mats = [pipe.matrix(mt).select(columns) for mt in cal_months]
        X_cal, y_cal = _stack(cal_mats)
        raw_cal = predict_proba(model, X_cal)
        if 0 < y_cal.sum() < len(y_cal):
            calibrator = fit_isotonic(raw_cal, y_cal)
            cal_probs = calibrator.apply(raw_cal)
            threshold = best_f1_threshold(cal_probs, y_cal)

    raw_test = predict_proba(model, test.values)
    probs = calibrator.apply(raw_test) if calibrator is not None else raw_test
    if n_pos == 0 or n_pos == n_rows:
        return MonthResult(m, True, "single-class test month", n_rows, n_pos), model
    mset = compute_metrics(probs, test.labels, threshold)
    return (
        MonthResult(
            m,
            False,
            "",
            n_rows,
            n_pos,
            metrics=mset,
            brier_raw=brier_score(raw_test, test.labels),
        ),
        model,
    )


def importance_by_category(
    models: Sequence[TreeEnsembleModel], catalog: FeatureCatalog
) -> dict[str, float]:
    """Mean per-feature importance across models, summed per category."""
    if not models:
        raise RegistryError("no models to aggregate")
    k = len(catalog.entries)
    for model in models:
        if model.n_features != k:
            raise RegistryError("model/catalog feature count mismatch")
    mean_imp = np.mean([m.feature_importances for m in models], axis=0)
    total = mean_imp.sum()
    shares: dict[str, float] = {c.value: 0.0 for c in FeatureCategory}
    for entry, v in zip(catalog.entries, mean_imp):
        shares[entry.category.value] += float(v)
    if total > 0:
        shares = {c: v / total for c, v in shares.items()}
    return shares


def run_walkforward(
    grid: TemporalGrid,
    rs: RecordSet,
    catalog: Optional[FeatureCatalog] = None,
    cfg: Optional[WalkForwardConfig] = None,
    pipeline: Optional[FeaturePipeline] = None,
    firm_scheme: FirmWeightScheme = FirmWeightScheme(),
    top_n_features: int = 25,
) -> EvaluationReport:
    """Evaluate every test month in the configured range.

    ``pipeline`` may supply a pre-built (full-catalog) feature pipeline so
    variant comparisons share monthly matrices; ``catalog`` then selects the
    columns actually fed to the model.
    """
    if cfg is None:
        raise RegistryError("walk-forward config required")
    cfg.validate(grid)
    full = pipeline.catalog if pipeline is not None else default_catalog()
    catalog = catalog or full
    pipe = pipeline or FeaturePipeline(rs, grid, catalog, firm_scheme)
    columns = catalog.names

    test_months = list(range(cfg.first_test_month, cfg.last_test_month + 1))
    # matrices are cached in the pipeline; warm them serially for determinism
    for mt in range(grid.start, cfg.last_test_month + 1):
        pipe.matrix(mt)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            results = list(
                ex.map(lambda m: _evaluate_month(pipe, columns, grid, cfg, m), test_months)
            )
    else:
        results = [_evaluate_month(pipe, columns, grid, cfg, m) for m in test_months]

    per_month = tuple(r for r, _ in results)
    models = [mdl for r, mdl in results if mdl is not None and not r.skipped]

    evaluated = [r for r in per_month if not r.skipped]
    means: dict[str, float] = {}
    sds: dict[str, float] = {}
    for key in ("ap", "auc", "f1", "brier"):
        vals = [getattr(r.metrics, key) for r in evaluated if getattr(r.metrics, key) is not None]
        if vals:
            means[key] = float(np.mean(vals))
            sds[key] = float(np.std(vals))
    raw_briers = [r.brier_raw for r in evaluated if r.brier_raw is not None]
    if raw_briers:
        means["brier_raw"] = float(np.mean(raw_briers))
        sds["brier_raw"] = float(np.std(raw_briers))

    if models:
        shares = importance_by_category(models, catalog)
        mean_imp = np.mean([m.feature_importances for m in models], axis=0)
        order = np.argsort(-mean_imp, kind="stable")[:top_n_features]
        top = tuple((columns[i], float(mean_imp[i])) for i in order)
    else:
        shares = {}
        top = ()

    return EvaluationReport(
        per_month=per_month,
        means=means,
        sds=sds,
        importance_by_category=shares,
        importance_by_feature=top,
        config=_config_echo(cfg, catalog),
    )


@dataclass(frozen=True)
class VariantComparison:
    reports: Mapping[str, EvaluationReport]
    baseline: str
    deltas: Mapping[str, Mapping[str, float]]  # variant -> metric -> (a-b)/b

    def as_dict(self) -> dict:
        return {
            "baseline": self.baseline,
            "reports": {k: v.as_dict() for k, v in self.reports.items()},
            "deltas": {k: dict(v) for k, v in self.deltas.items()},
        }


def compare_variants(
    grid: TemporalGrid,
    rs: RecordSet,
    cfg: WalkForwardConfig,
    variants: Mapping[str, Sequence[str]],
    baseline: Optional[str] = None,
    catalog: Optional[FeatureCatalog] = None,
    firm_scheme: FirmWeightScheme = FirmWeightScheme(),
) -> VariantComparison:
    """Run the walk-forward per catalog subset with identical seeds/months."""
    if not variants:
        raise RegistryError("no variants supplied")
    for name, cols in variants.items():
        if not cols:
            raise RegistryError(f"empty variant {name!r}")
    catalog = catalog or default_catalog()
    pipe = FeaturePipeline(rs, grid, catalog, firm_scheme)
    reports = {
        name: run_walkforward(grid, rs, catalog.subset(cols), cfg, pipeline=pipe)
        for name, cols in variants.items()
    }
    baseline = baseline if baseline is not None else list(variants)[-1]
    if baseline not in reports:
        raise RegistryError(f"unknown baseline variant {baseline!r}")
    base_means = reports[baseline].means
    deltas: dict[str, dict[str, float]] = {}
    for name, rep in reports.items():
        deltas[name] = {
            k: (rep.means[k] - base_means[k]) / base_means[k]
            for k in rep.means
            if k in base_means and base_means[k] != 0
        }
    return VariantComparison(reports=reports, baseline=baseline, deltas=deltas)


def training_digest(
    grid: TemporalGrid,
    rs: RecordSet,
    catalog: FeatureCatalog,
    cfg: WalkForwardConfig,
    test_month: int,
    pipeline: Optional[FeaturePipeline] = None,
) -> str:
    """SHA-256 digest of the full training inputs for one test month.

    Covers row identities, feature bytes, and labels of both the fitting
    months and the calibration slice.  Used by the leakage guard: the digest
    must not change when the registry is censored at snapshot(m - gap).
    """
    pipe = pipeline or FeaturePipeline(rs, grid, catalog)
    months = _train_months(grid, cfg, test_month)
    h = hashlib.sha256()
    for mt in months:
        mat = pipe.matrix(mt).select(catalog.names)
        h.update(format_month(mt).encode())
        for p, f in mat.rows:
            h.update(p.encode())
            h.update(b"\x00")
            h.update(f.encode())
        h.update(np.ascontiguousarray(mat.values).tobytes())
        h.update(np.ascontiguousarray(mat.labels).tobytes())
    return h.hexdigest()
