"""Run-time CPU power models for heterogeneous (big.LITTLE) clusters.

Pipeline: validate sampled traces, pick PMU regressors by correlation,
fit one of ten linear model families by least squares (unified or one
model per DVFS level), score them by percent error per level, and
cross-predict one cluster's power from the other cluster's events.
"""

__version__ = "0.1.0"

from .catalog import (  # noqa: E402
    PER_FREQUENCY,
    UNIFIED,
    ModelFamily,
    PowerModel,
    RegressorSpec,
    build_design_matrix,
    regressor_spec,
    train,
)
from .evaluation import (  # noqa: E402
    EvaluationReport,
    cross_predict_naive,
    evaluate,
    evaluate_cross_model,
    percent_error,
    train_cross_model,
)
from .regression import (  # noqa: E402
    CoefficientVector,
    DesignMatrix,
    fit_ols,
    pearson,
    predict,
    select_pmu_events,
)
from .synth import GroundTruthSpec, generate_trace, make_cluster_pair  # noqa: E402
from .trace import (  # noqa: E402
    BenchmarkAverage,
    Cluster,
    SampleRecord,
    ValidatedTrace,
    benchmark_averages,
    partition_by_frequency,
    validate_trace,
)
