"""Football trajectory reconstruction, imputation, policy rollout and imitation-fidelity metrics.

Positions live on a normalized pitch: x in [-1, 1] along the length,
y in [-0.42, 0.42] across it. Agents 0-21 are the players of both teams
and agent 22 is the ball.
"""

from pitchtrace.errors import DataError
from pitchtrace.geometry import BALL, N_AGENTS, Outcome, Phase, PhaseLabel, PitchSpec, Segment, validate_segment
from pitchtrace.metrics import EvalReport, GridConfig, evaluate_dataset, evaluate_segment

__version__ = "0.1.0"

__all__ = [
    "BALL",
    "N_AGENTS",
    "DataError",
    "EvalReport",
    "GridConfig",
    "Outcome",
    "Phase",
    "PhaseLabel",
    "PitchSpec",
    "Segment",
    "evaluate_dataset",
    "evaluate_segment",
    "validate_segment",
]
