"""permlab: permutation-based SGD on strongly convex finite sums."""

from ._backend import BACKEND
from .engine import (
    AffineEpochMap,
    RunConfig,
    Trajectory,
    epoch_affine_map,
    flipflop_bias_z,
    run,
    scalar_first_order_bias,
    sgd_epoch,
)
from .problems import (
    InstanceStats,
    QuadraticSum,
    StepSizeRule,
    full_gradient,
    gradient,
    instance_stats,
    translate_to_origin,
)
from .schedulers import Permutation, PermutationStrategy, make_strategy, shuffle

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AffineEpochMap",
    "InstanceStats",
    "Permutation",
    "PermutationStrategy",
    "QuadraticSum",
    "RunConfig",
    "StepSizeRule",
    "Trajectory",
    "epoch_affine_map",
    "flipflop_bias_z",
    "full_gradient",
    "gradient",
    "instance_stats",
    "make_strategy",
    "run",
    "scalar_first_order_bias",
    "sgd_epoch",
    "shuffle",
    "translate_to_origin",
]
