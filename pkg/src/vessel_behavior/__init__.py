"""Hierarchical vessel-behavior representation and predictive clustering of AIS trajectories.

Pipeline: raw AIS CSV -> cleaned position sequences (:mod:`.ingestion`) ->
labeled sub-trajectories (:mod:`.segmentation`) -> port label sequences
(:mod:`.labels`) -> LSTM predictive clustering (:mod:`.clustering`), scored
with :mod:`.metrics`. :mod:`.synth` generates tracks with planted truth.
"""

from .core import (
    ALL_BEHAVIORS,
    N_BEHAVIORS,
    BehaviorLabel,
    LabelPoint,
    LabelSequence,
    Port,
    PositionPoint,
    PositionSequence,
    SpeedStatus,
    SubTrajectory,
    TurnStatus,
    VesselType,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_BEHAVIORS",
    "N_BEHAVIORS",
    "BehaviorLabel",
    "LabelPoint",
    "LabelSequence",
    "Port",
    "PositionPoint",
    "PositionSequence",
    "SpeedStatus",
    "SubTrajectory",
    "TurnStatus",
    "VesselType",
]
