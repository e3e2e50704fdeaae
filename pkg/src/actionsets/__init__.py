"""Weakly supervised multi-label actor-action association.

Scores every non-empty subset of a clip's annotated actions for each
detected actor, assigns one subset per actor under the constraint that all
annotated actions are covered, trains with the MIML and association losses,
and evaluates frame-level detections with mAP at an IoU threshold.
"""

from .core import (
    ActionSetsError,
    ActionSubset,
    ActorDetection,
    AssignmentResult,
    BoundingBox,
    Clip,
    ClipAnnotation,
    Frame,
    GroundTruthRecord,
    InfeasibleError,
    PowerSetTooLargeError,
    PredictionRecord,
    TrainingDivergedError,
    ValidationError,
    validate_clip,
)
from .evaluation import EvalReport, average_precision, iou, mean_average_precision
from .losses import (
    LossBreakdown,
    association_loss,
    combined_loss,
    loss_gradients,
    miml_loss,
    sigmoid_probs,
)
from .scoring import (
    DEFAULT_POWER_SET_CAP,
    SubsetScoreTable,
    enumerate_power_set,
    log_normalizer,
    log_normalizer_enumerated,
    score_actor_subsets,
    subset_log_numerator,
)
from .solver import (
    BRUTE_FORCE_LIMIT,
    DEFAULT_SOLVER_CAP,
    assign_without_lp,
    brute_force_assignment,
    check_assignment,
    solve_assignment,
)

__version__ = "0.1.0"

__all__ = [
    "ActionSetsError",
    "ActionSubset",
    "ActorDetection",
    "AssignmentResult",
    "BoundingBox",
    "Clip",
    "ClipAnnotation",
    "EvalReport",
    "Frame",
    "GroundTruthRecord",
    "InfeasibleError",
    "LossBreakdown",
    "PowerSetTooLargeError",
    "PredictionRecord",
    "SubsetScoreTable",
    "TrainingDivergedError",
    "ValidationError",
    "DEFAULT_POWER_SET_CAP",
    "DEFAULT_SOLVER_CAP",
    "BRUTE_FORCE_LIMIT",
    "assign_without_lp",
    "association_loss",
    "average_precision",
    "brute_force_assignment",
    "check_assignment",
    "combined_loss",
    "enumerate_power_set",
    "iou",
    "log_normalizer",
    "log_normalizer_enumerated",
    "loss_gradients",
    "mean_average_precision",
    "miml_loss",
    "score_actor_subsets",
    "sigmoid_probs",
    "solve_assignment",
    "subset_log_numerator",
    "validate_clip",
    "__version__",
]
