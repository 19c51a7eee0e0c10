"""Energy-efficient transfer tuning from historical logs.

Pipeline: preprocess transfer logs, cluster them, interpolate throughput
and energy surfaces over the tuning-parameter grid, maximize throughput per
joule, distill the result into a fixed-size learned predictor, and drive a
parallel HTTP transfer engine through a device-side broker.
"""

from .corelog import (
    BS_LEVELS,
    CC_LEVELS,
    P_LEVELS,
    DeviceInfo,
    EnergyBreakdown,
    ParamSetting,
    PowerTrace,
    TransferLog,
    dynamic_energy,
    preprocess_logs,
    total_energy,
)
from .cluster import FileCluster, LogCluster, cluster_files, cluster_logs
from .surface import CubicSpline1D, PerfSurface, eval_spline, eval_surface, fit_cubic, fit_surface
from .optimize import OptimizationResult, grid_argmax, optimal_params, refine
from .learn import (
    FeatureVector,
    LearnedModel,
    accuracy,
    deserialize,
    knn_oracle,
    predict,
    r_squared,
    serialize,
    train,
)
from .broker import (
    DEFAULT_THETA,
    LogBuffer,
    NetConditionKey,
    ParamCache,
    SchedulePlan,
    TransferRequest,
    detect_perf_drop,
    resolve_params,
    schedule_mixed,
)
from .netio import TransferReport, emit_log, execute, split_ranges
from .sim import (
    CLASSES,
    DatasetClass,
    NetScenario,
    PowerModel,
    full_lattice,
    generate_logs,
    ground_truth_argmax,
    simulate,
)
from .service import (
    CostEstimate,
    HlaServer,
    PipelineResult,
    ServeConfig,
    amortization_check,
    estimate_costs,
    run_pipeline,
)

__version__ = "0.1.0"
