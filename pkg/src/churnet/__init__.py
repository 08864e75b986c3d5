"""churnet: temporal network features for professional-turnover prediction.

The package turns employment-spell registries into monthly snapshot grids,
builds co-employment and firm-mobility graphs, propagates features over
them, and evaluates tree-ensemble churn models under leakage-safe
walk-forward validation, including peer-contagion threshold analysis and a
seeded synthetic labor market for end-to-end checks.
"""

__version__ = "1.0.0"

from .calibration import IsotonicCalibrator, fit_isotonic
from .contagion import (
    ContagionConfig,
    ContagionReport,
    ThresholdRow,
    peer_departure_fraction,
    threshold_analysis,
)
from .features import (
    DEMOGRAPHIC_FEATURES,
    FIRM_FEATURES,
    INDIVIDUAL_FEATURES,
    PROPAGATED_BASES,
    AssemblyError,
    CatalogEntry,
    FeatureCatalog,
    FeatureCategory,
    FeatureMatrix,
    FeaturePipeline,
    FeatureSource,
    assemble_matrix,
    default_catalog,
    demographic_features,
    firm_features,
    individual_features,
    no_network_catalog,
)
from .graphs import (
    EmployeeGraphBuilder,
    FirmWeightKind,
    FirmWeightScheme,
    GraphKind,
    GraphMetrics,
    WeightedGraph,
    build_employee_graph,
    build_firm_graph,
    export_graph_csv,
    graph_metrics,
    louvain_communities,
    modularity,
)
from .learners import (
    DataError,
    ModelKind,
    ModelParams,
    TrainingSkip,
    TreeEnsembleModel,
    catalog_hash,
    gb_default_params,
    model_from_json,
    model_to_json,
    predict_proba,
    predict_raw,
    rf_default_params,
    train,
    undersample,
)
from .metrics import (
    MetricSet,
    average_precision,
    best_f1_threshold,
    brier_score,
    compute_metrics,
    f1_score,
    roc_auc,
)
from .months import (
    first_day,
    format_month,
    month_index,
    month_of,
    parse_month,
    snapshot_date,
    year_month,
)
from .propagation import FeatureTable, propagate
from .registry import (
    DatasetStats,
    EmploymentRecord,
    Gender,
    ParseError,
    RecordSet,
    RegistryError,
    Role,
    TemporalGrid,
    build_temporal_grid,
    censor_records,
    parse_records,
    registry_stats,
    relabel_grid,
    serialize_records,
)
from .synth import (
    MarketConfig,
    describe_ground_truth,
    generate_market,
    manifest_hash,
    market_grid_range,
)
from .walkforward import (
    EvaluationReport,
    MonthResult,
    VariantComparison,
    WalkForwardConfig,
    compare_variants,
    importance_by_category,
    run_walkforward,
    training_digest,
)
