"""Exact dynamic programming for time-constrained robust MDPs on a discretized parameter grid."""

from .model import (
    ParameterGrid,
    ParametricMDP,
    StepBall,
    apply_step,
    ball_neighbors,
    kernel_eval,
    validate,
)
from .operators import BackupMode
from .policies import ObsClass, PolicyTable

__all__ = [
    "BackupMode",
    "ObsClass",
    "ParameterGrid",
    "ParametricMDP",
    "PolicyTable",
    "StepBall",
    "apply_step",
    "ball_neighbors",
    "kernel_eval",
    "validate",
]
__version__ = "0.1.0"
