"""optlaws: learning-rate schedule functionals, loss-prediction laws, and SDE checks."""

from .divergence import CriterionResult, DivergenceParams, criterion_R, critical_rate
from .features import (
    DEFAULT_POWERS,
    TERM_NAMES,
    FeatureError,
    FeatureVector,
    MarkerPolicy,
    Normalizer,
    collapsed_markers,
    compute_features,
    default_markers,
)
from .law import (
    DIVERGED_LOSS,
    FittedLaw,
    LawFitError,
    PretrainContext,
    RunConfig,
    RunRecord,
    SimpleLaw,
    continual_features,
    fit,
    predict,
    prop1_gap,
    rank,
    reference_law,
    simple_law_eval,
    unit_simple_law,
)
from .schedule import (
    Schedule,
    ScheduleError,
    Segment,
    build_general_schedule,
    warmup_cosine_schedule,
    warmup_const_cooldown_schedule,
)

__version__ = "0.1.0"

__all__ = [
    "CriterionResult",
    "DIVERGED_LOSS",
    "DEFAULT_POWERS",
    "DivergenceParams",
    "FeatureError",
    "FeatureVector",
    "FittedLaw",
    "LawFitError",
    "MarkerPolicy",
    "Normalizer",
    "PretrainContext",
    "RunConfig",
    "RunRecord",
    "Schedule",
    "ScheduleError",
    "Segment",
    "SimpleLaw",
    "TERM_NAMES",
    "build_general_schedule",
    "collapsed_markers",
    "compute_features",
    "continual_features",
    "criterion_R",
    "critical_rate",
    "default_markers",
    "fit",
    "predict",
    "prop1_gap",
    "rank",
    "reference_law",
    "simple_law_eval",
    "unit_simple_law",
    "warmup_cosine_schedule",
    "warmup_const_cooldown_schedule",
]
