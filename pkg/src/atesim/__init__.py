"""ATE benchmarking engine: scenario standardization, simulation, estimators,
bootstrap intervals, and a Monte Carlo study harness."""

from .bootstrap import BootstrapConfig, EstimateResult, bootstrap_ci, percentile_ranks
from .errors import (
    BootstrapFailure,
    EmptyArmError,
    EngineError,
    EstimatorError,
    FitError,
    InfiniteWeightError,
    IngestError,
    ProtocolError,
    ScenarioError,
    SingularMatrixError,
)
from .estimators import (
    Estimator,
    EstimatorSpec,
    PointEstimate,
    estimate_crude,
    estimate_external_direct,
    estimate_gcomp,
    estimate_gcomp2,
    estimate_iptw,
)
from .external import RemoteModel, Session, connect_external_model, open_session
from .harness import StudyConfig, StudyMetrics, StudyResult, compute_metrics, run_study
from .models import (
    BoostedTreesConfig,
    BoostedTreesModel,
    FitDiagnostics,
    LogisticModel,
    fit_boosted_trees,
    fit_logistic,
)
from .report import emit_report, metric_rows, parse_metrics_csv, render_figures
from .rng import derive_seed, substream
from .scenario import (
    ConfounderSpec,
    IngestionConfig,
    PreparedTable,
    RowFilter,
    Scenario,
    SimulatedDataset,
    build_scenario,
    ingest,
    load_dataset,
    load_scenario,
    randomized_transform,
    save_dataset,
    save_scenario,
    simulate,
    true_ate,
)

__version__ = "1.0.0"

__all__ = [
    "BootstrapConfig",
    "BootstrapFailure",
    "BoostedTreesConfig",
    "BoostedTreesModel",
    "ConfounderSpec",
    "EmptyArmError",
    "EngineError",
    "EstimateResult",
    "Estimator",
    "EstimatorError",
    "EstimatorSpec",
    "FitDiagnostics",
    "FitError",
    "InfiniteWeightError",
    "IngestError",
    "IngestionConfig",
    "LogisticModel",
    "PointEstimate",
    "PreparedTable",
    "ProtocolError",
    "RemoteModel",
    "RowFilter",
    "Scenario",
    "ScenarioError",
    "Session",
    "SimulatedDataset",
    "SingularMatrixError",
    "StudyConfig",
    "StudyMetrics",
    "StudyResult",
    "bootstrap_ci",
    "build_scenario",
    "compute_metrics",
    "connect_external_model",
    "derive_seed",
    "emit_report",
    "estimate_crude",
    "estimate_external_direct",
    "estimate_gcomp",
    "estimate_gcomp2",
    "estimate_iptw",
    "fit_boosted_trees",
    "fit_logistic",
    "ingest",
    "load_dataset",
    "load_scenario",
    "metric_rows",
    "open_session",
    "parse_metrics_csv",
    "percentile_ranks",
    "randomized_transform",
    "render_figures",
    "run_study",
    "save_dataset",
    "save_scenario",
    "simulate",
    "substream",
    "true_ate",
]
