"""Deterministic edge-cloud inference scheduling: complexity analysis,
preference prediction, bandit allocation and the metric suite."""

from .complexity import (
    ComplexityReport,
    Frame,
    ScalePyramid,
    build_pyramid,
    center_crop,
    minmax_scale,
    overlap,
    spatial_complexity,
)
from .config import RunConfig, default_config
from .metrics import RunReport, aggregate, baseline_policies, compare
from .predictor import (
    FeatureVector,
    LabeledWindow,
    LstmLayerParams,
    LstmState,
    PreferencePredictor,
    bce_loss,
    forward,
    lstm_step,
    make_feature,
    predict_preference,
    train,
)
from .scheduler import (
    AllocationScheme,
    BanditState,
    Preference,
    SlotOutcome,
    Task,
    Tier,
    approximate_regret,
    feasible,
    feedback,
    initial_placement,
    objective,
    reward,
    select_super_arm,
)
from .simulator import (
    AccuracyModel,
    BandwidthMode,
    BandwidthModel,
    DEPLOYMENT_VERSIONS,
    Environment,
    MODEL_CATALOG,
    ModelSpec,
    ServerSpec,
    Workload,
    WorkloadSpec,
    end_to_end_delay,
    generate_workload,
    inference_delay,
    realized_accuracy,
    run_policy,
    sample_bandwidth,
    slot_outcome,
    transmission_delay,
)

__version__ = "0.1.0"
