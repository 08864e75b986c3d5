"""Command-line surface: reproducible runs driven by a JSON config file.

All scientific parameters live in the config document; flags only select
the subcommand, paths, month, seed, and worker count.  Every run writes a
manifest with the config hash and seed so outputs can be reproduced.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path
from typing import Optional

from . import __version__
from .contagion import ContagionConfig, threshold_analysis
from .charts import line_chart, rolling_mean
from .features import FeatureCatalog, FeaturePipeline, default_catalog, no_network_catalog
from .graphs import (
    FirmWeightKind,
    FirmWeightScheme,
    build_employee_graph,
    build_firm_graph,
    export_graph_csv,
    graph_metrics,
)
from .learners import DataError, ModelKind, ModelParams, gb_default_params, rf_default_params
from .metrics import MetricSet
from .months import format_month, parse_month
from .registry import (
    ParseError,
    RecordSet,
    RegistryError,
    build_temporal_grid,
    parse_records,
    registry_stats,
    serialize_records,
)
from .synth import MarketConfig, describe_ground_truth, generate_market, manifest_hash
from .walkforward import WalkForwardConfig, compare_variants, run_walkforward

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

_SECTION_KEYS = {
    "data": {"registry", "format"},
    "grid": {"start", "end"},
    "graph": {"firm_scheme", "recency_lambda", "path_samples"},
    "features": {"catalog"},
    "model": {
        "kind",
        "n_trees",
        "max_depth",
        "learning_rate",
        "min_leaf",
        "feature_subsample",
        "row_subsample",
    },
    "walkforward": {
        "first_test_month",
        "last_test_month",
        "gap_months",
        "min_train_months",
        "undersample_ratio",
        "calibration_slice_months",
        "variants",
        "baseline",
    },
    "contagion": {"window_months", "thresholds", "min_peers"},
    "synth": {
        "n_agents",
        "n_firms",
        "months",
        "base_hazard",
        "firm_stability_spread",
        "contagion_threshold",
        "contagion_boost",
        "window_months",
        "rehire_delay_mean",
        "firm_size_skew",
        "seed",
    },
}
_TOP_KEYS = set(_SECTION_KEYS) | {"seed"}


class ConfigError(RegistryError):
    pass


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be an object")
    unknown = set(cfg) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for section, keys in _SECTION_KEYS.items():
        if section in cfg:
            if not isinstance(cfg[section], dict):
                raise ConfigError(f"section {section!r} must be an object")
            bad = set(cfg[section]) - keys
            if bad:
                raise ConfigError(f"unknown keys in {section!r}: {sorted(bad)}")
    return cfg


def _seed_of(cfg: dict, override: Optional[int]) -> int:
    if override is not None:
        return override
    return int(cfg.get("seed", 0))


def _load_registry(cfg: dict, seed: int) -> RecordSet:
    data = cfg.get("data", {})
    if data.get("registry"):
        return parse_records(data["registry"], data.get("format", "csv"))
    if "synth" in cfg:
        return generate_market(_market_config(cfg, seed))
    raise ConfigError("config needs either data.registry or a synth section")


def _market_config(cfg: dict, seed: int) -> MarketConfig:
    raw = dict(cfg.get("synth", {}))
    raw.setdefault("seed", seed)
    return MarketConfig(**raw)


def _grid_range(cfg: dict, rs: RecordSet) -> tuple[int, int]:
    grid = cfg.get("grid", {})
    if "start" in grid and "end" in grid:
        return parse_month(grid["start"]), parse_month(grid["end"])
    firsts = [r.first_active_month for r in rs.records]
    lasts = [r.last_active_month for r in rs.records if r.last_active_month is not None]
    if not firsts:
        raise ConfigError("empty registry and no explicit grid range")
    return min(firsts), max(firsts + lasts)


def _firm_scheme(cfg: dict) -> FirmWeightScheme:
    g = cfg.get("graph", {})
    kind = FirmWeightKind(g.get("firm_scheme", "count"))
    return FirmWeightScheme(kind=kind, recency_lambda=float(g.get("recency_lambda", 0.05)))


def _catalog(cfg: dict) -> FeatureCatalog:
    spec = cfg.get("features", {}).get("catalog", "default")
    if spec == "default":
        return default_catalog()
    if spec == "no_network":
        return no_network_catalog()
    if isinstance(spec, list):
        return default_catalog().subset(spec)
    raise ConfigError(f"unsupported catalog spec {spec!r}")


def _model(cfg: dict, seed: int) -> tuple[ModelKind, ModelParams]:
    m = dict(cfg.get("model", {}))
    kind = ModelKind(m.pop("kind", "gradient_boosted"))
    base = gb_default_params(seed) if kind is ModelKind.GRADIENT_BOOSTED else rf_default_params(seed)
    params = ModelParams(
        n_trees=int(m.get("n_trees", base.n_trees)),
        max_depth=int(m.get("max_depth", base.max_depth)),
        learning_rate=float(m.get("learning_rate", base.learning_rate)),
        min_leaf=int(m.get("min_leaf", base.min_leaf)),
        feature_subsample=m.get("feature_subsample", base.feature_subsample),
        row_subsample=float(m.get("row_subsample", base.row_subsample)),
        seed=seed,
    )
    return kind, params


def _walkforward_config(cfg: dict, seed: int, threads: int) -> WalkForwardConfig:
    wf = cfg.get("walkforward", {})
    if "first_test_month" not in wf or "last_test_month" not in wf:
        raise ConfigError("walkforward section needs first_test_month and last_test_month")
    kind, params = _model(cfg, seed)
    return WalkForwardConfig(
        first_test_month=parse_month(wf["first_test_month"]),
        last_test_month=parse_month(wf["last_test_month"]),
        gap_months=int(wf.get("gap_months", 1)),
        min_train_months=int(wf.get("min_train_months", 6)),
        model_params=params,
        model_kind=kind,
        undersample_ratio=float(wf.get("undersample_ratio", 10.0)),
        calibration_slice_months=int(wf.get("calibration_slice_months", 6)),
        seed=seed,
        threads=threads,
    )


def _write(out_dir: Path, name: str, text: str) -> None:
    path = out_dir / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _write_manifest(out_dir: Path, config_path: Optional[str], seed: int) -> None:
    digest = ""
    if config_path:
        digest = hashlib.sha256(Path(config_path).read_bytes()).hexdigest()
    manifest = {
        "config_sha256": digest,
        "seed": seed,
        "package": "churnet",
        "version": __version__,
    }
    _write(out_dir, "manifest.json", json.dumps(manifest, sort_keys=True, indent=1) + "\n")


def _metrics_chart(report_dict: dict, deterministic: bool) -> str:
    months = [r["month"] for r in report_dict["per_month"]]
    series = {}
    for key in ("ap", "auc", "f1"):
        vals = [
            (r["metrics"] or {}).get(key) if not r["skipped"] else None
            for r in report_dict["per_month"]
        ]
        series[key.upper()] = rolling_mean(vals, 12)
    return line_chart(
        months, series, "Metrics over time (rolling mean, 12 months)",
        deterministic=deterministic,
    )


def _lift_chart(rows: list[dict], deterministic: bool) -> str:
    labels = [f"{r['threshold']:.1f}" for r in rows]
    lifts = [r["relative_lift"] for r in rows]
    return line_chart(
        labels,
        {"relative lift": lifts},
        "Turnover lift vs peer-departure threshold",
        y_label="relative lift",
        deterministic=deterministic,
    )


def cmd_ingest(args) -> int:
    try:
        rs = parse_records(args.file, args.format)
    except ParseError as exc:
        for lineno, msg in exc.row_errors:
            print(f"line {lineno}: {msg}", file=sys.stderr)
        return EXIT_DATA
    except RegistryError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if len(rs):
        firsts = [r.first_active_month for r in rs.records]
        lasts = [r.last_active_month for r in rs.records if r.last_active_month is not None]
        grid = build_temporal_grid(rs, min(firsts), max(firsts + lasts))
        stats = registry_stats(rs, grid)
    else:
        from .registry import DatasetStats

        stats = DatasetStats(0, 0, 0, None, None, None)
    print(json.dumps(stats.as_dict(), sort_keys=True, indent=1))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    seed = _seed_of(cfg, args.seed)
    mcfg = _market_config(cfg, seed)
    rs = generate_market(mcfg)
    out = Path(args.out)
    _write(out, "registry.csv", serialize_records(rs))
    manifest = describe_ground_truth(mcfg)
    _write(out, "ground_truth.json", json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    _write_manifest(out, args.config, seed)
    print(f"wrote {len(rs)} records to {out / 'registry.csv'} (manifest hash {manifest_hash(manifest)})")
    return EXIT_OK


def cmd_graph(args) -> int:
    cfg = load_config(args.config)
    seed = _seed_of(cfg, args.seed)
    rs = _load_registry(cfg, seed)
    lo, hi = _grid_range(cfg, rs)
    grid = build_temporal_grid(rs, lo, hi)
    m = parse_month(args.month)
    if args.kind == "employee":
        g = build_employee_graph(grid, rs, m)
    else:
        g = build_firm_graph(grid, rs, m, _firm_scheme(cfg))
    samples = int(cfg.get("graph", {}).get("path_samples", 64))
    metrics = graph_metrics(g, path_samples=samples, seed=seed)
    edges, nodes = export_graph_csv(g)
    out = Path(args.out)
    _write(out, "edges.csv", edges)
    _write(out, "nodes.csv", nodes)
    _write(out, "metrics.json", json.dumps(metrics.as_dict(), sort_keys=True, indent=1) + "\n")
    _write_manifest(out, args.config, seed)
    print(f"{args.kind} graph at {args.month}: {g.n_nodes} nodes, {g.n_edges} edges")
    return EXIT_OK


def cmd_features(args) -> int:
    cfg = load_config(args.config)
    seed = _seed_of(cfg, args.seed)
    rs = _load_registry(cfg, seed)
    lo, hi = _grid_range(cfg, rs)
    grid = build_temporal_grid(rs, lo, hi)
    catalog = _catalog(cfg)
    pipe = FeaturePipeline(rs, grid, catalog, _firm_scheme(cfg))
    m = parse_month(args.month)
    mat = pipe.matrix(m)
    out = Path(args.out)
    _write(out, f"features_{args.month}.csv", mat.to_csv())
    _write(out, "catalog.json", json.dumps(catalog.manifest(), sort_keys=True, indent=1) + "\n")
    _write_manifest(out, args.config, seed)
    print(f"wrote {len(mat.rows)} rows x {len(mat.columns)} features for {args.month}")
    return EXIT_OK


def cmd_train_eval(args) -> int:
    cfg = load_config(args.config)
    seed = _seed_of(cfg, args.seed)
    rs = _load_registry(cfg, seed)
    lo, hi = _grid_range(cfg, rs)
    grid = build_temporal_grid(rs, lo, hi)
    catalog = _catalog(cfg)
    wf_cfg = _walkforward_config(cfg, seed, args.threads)
    scheme = _firm_scheme(cfg)
    variants = cfg.get("walkforward", {}).get("variants")
    out = Path(args.out)
    if variants:
        comparison = compare_variants(
            grid, rs, wf_cfg, variants,
            baseline=cfg.get("walkforward", {}).get("baseline"),
            catalog=catalog, firm_scheme=scheme,
        )
        doc = comparison.as_dict()
        main = comparison.reports[list(variants)[0]]
    else:
        main = run_walkforward(grid, rs, catalog, wf_cfg, firm_scheme=scheme)
        doc = main.as_dict()
    _write(out, "report.json", json.dumps(doc, sort_keys=True, indent=1) + "\n")
    _write(out, "metrics_by_month.csv", main.months_csv())
    _write(out, "charts/metrics_over_time.svg", _metrics_chart(main.as_dict(), args.deterministic))
    _write_manifest(out, args.config, seed)
    means = {k: round(v, 5) for k, v in main.means.items()}
    print(f"walk-forward means: {means}")
    return EXIT_OK


def cmd_contagion(args) -> int:
    cfg = load_config(args.config)
    seed = _seed_of(cfg, args.seed)
    rs = _load_registry(cfg, seed)
    lo, hi = _grid_range(cfg, rs)
    grid = build_temporal_grid(rs, lo, hi)
    c = cfg.get("contagion", {})
    ccfg = ContagionConfig(
        window_months=int(c.get("window_months", 6)),
        thresholds=tuple(c.get("thresholds", [round(0.1 * i, 1) for i in range(10)])),
        min_peers=int(c.get("min_peers", 3)),
    )
    report = threshold_analysis(grid, rs, ccfg)
    out = Path(args.out)
    _write(out, "contagion.csv", report.to_csv())
    _write(out, "contagion.json", json.dumps(report.as_dict(), sort_keys=True, indent=1) + "\n")
    _write(out, "charts/lift_curve.svg", _lift_chart(report.as_dict()["rows"], args.deterministic))
    _write_manifest(out, args.config, seed)
    print(f"contagion analysis over {report.n_eligible} eligible person-months")
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    report_path = run_dir / "report.json"
    contagion_path = run_dir / "contagion.json"
    did = False
    if report_path.exists():
        doc = json.loads(report_path.read_text())
        main = doc["reports"][sorted(doc["reports"])[0]] if "reports" in doc else doc
        lines = ["month,ap,auc,f1,brier,n_rows,n_pos,skipped,reason"]
        for r in main["per_month"]:
            met = r["metrics"] or {}
            lines.append(
                ",".join(
                    [
                        r["month"],
                        "" if met.get("ap") is None else repr(met["ap"]),
                        "" if met.get("auc") is None else repr(met["auc"]),
                        "" if not met else repr(met["f1"]),
                        "" if not met else repr(met["brier"]),
                        str(r["n_rows"]),
                        str(r["n_pos"]),
                        "1" if r["skipped"] else "0",
                        r["reason"],
                    ]
                )
            )
        _write(run_dir, "metrics_by_month.csv", "\n".join(lines) + "\n")
        _write(run_dir, "charts/metrics_over_time.svg", _metrics_chart(main, args.deterministic))
        did = True
    if contagion_path.exists():
        doc = json.loads(contagion_path.read_text())
        _write(run_dir, "charts/lift_curve.svg", _lift_chart(doc["rows"], args.deterministic))
        did = True
    if not did:
        print(f"no report.json or contagion.json under {run_dir}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"re-emitted outputs under {run_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="churnet")
    parser.add_argument("--threads", type=int, default=None, help="worker count (default: CHURNET_THREADS or logical cores)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--deterministic", action="store_true", help="suppress timestamp comments in SVG output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a registry export and print stats")
    p.add_argument("file")
    p.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("simulate", help="generate a synthetic market")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("graph", help="build and export a monthly graph")
    p.add_argument("config")
    p.add_argument("--month", required=True)
    p.add_argument("--kind", choices=["employee", "firm"], default="employee")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("features", help="export a monthly feature matrix")
    p.add_argument("config")
    p.add_argument("--month", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train-eval", help="walk-forward evaluation (optionally with variants)")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_eval)

    p = sub.add_parser("contagion", help="peer-departure threshold analysis")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_contagion)

    p = sub.add_parser("report", help="re-emit CSV/SVG outputs from stored JSON")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)
    return parser


def cli_dispatch(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else EXIT_OK
    if args.threads is None:
        env = os.environ.get("CHURNET_THREADS")
        args.threads = int(env) if env else (os.cpu_count() or 1)
    try:
        return args.func(args)
    except ParseError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_DATA
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, RegistryError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(cli_dispatch())
