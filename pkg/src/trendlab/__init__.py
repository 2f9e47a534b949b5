"""Piecewise-linear trend filtering with dual diagnostics and refinement.

The penalized least-squares fit keeps the trend piecewise linear; its dual
path certifies optimality and pinpoints change points; the refinement
scheme removes the spurious detections the staircase effect creates when
consecutive slope changes share a sign.
"""

from .changepoint import (
    ChangePoint,
    ChangePointReport,
    DetectionMetrics,
    NotConvergedError,
    default_cluster_radius,
    extract,
    match,
)
from .dual import DualPath, KktReport, KktTolerances, check_kkt, dual_path, tube_margin
from .experiments import (
    ALTERNATING_SHAPE,
    STAIRCASE_SHAPE,
    RateRow,
    RateTable,
    ReproductionBundle,
    ScenarioConfig,
    reproduce_example,
    run_consistency,
)
from .refine import (
    MonitorEntry,
    PowerLawLambda,
    RefineConfig,
    RefinementError,
    RefinementTrace,
    monitor,
    refine,
)
from .signal import (
    CsvFormatError,
    InvalidSpecError,
    NoiseConfig,
    PiecewiseLinearSpec,
    TimeSeries,
    generate,
    load_spec_json,
    mean_from_spec,
    read_series_csv,
    save_spec_json,
    write_series_csv,
)
from .solver import SolverConfig, TrendEstimate, lambda_max, objective, solve

__version__ = "0.1.0"

__all__ = [
    "ALTERNATING_SHAPE",
    "STAIRCASE_SHAPE",
    "ChangePoint",
    "ChangePointReport",
    "CsvFormatError",
    "DetectionMetrics",
    "DualPath",
    "InvalidSpecError",
    "KktReport",
    "KktTolerances",
    "MonitorEntry",
    "NoiseConfig",
    "NotConvergedError",
    "PiecewiseLinearSpec",
    "PowerLawLambda",
    "RateRow",
    "RateTable",
    "RefineConfig",
    "RefinementError",
    "RefinementTrace",
    "ReproductionBundle",
    "ScenarioConfig",
    "SolverConfig",
    "TimeSeries",
    "TrendEstimate",
    "check_kkt",
    "default_cluster_radius",
    "dual_path",
    "extract",
    "generate",
    "lambda_max",
    "load_spec_json",
    "match",
    "mean_from_spec",
    "monitor",
    "objective",
    "read_series_csv",
    "reproduce_example",
    "run_consistency",
    "save_spec_json",
    "solve",
    "tube_margin",
    "write_series_csv",
]
