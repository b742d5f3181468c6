"""Collision measures of multiple random walks: simulation and verification
of their duality with directed-polymer partition functions and the chaos
limit."""

__version__ = "0.1.0"

from .collisions import CollisionMeasure, TestFunction, detect_collisions, integrate
from .environment import ContinuumAmplitude, DisorderFunction, EnvironmentField, cell_of
from .polymer import PartitionResult, chaos_terms, collision_weights, partition_dp
from .walks import WalkEnsemble, WalkPath, sample_walk

__all__ = [
    "__version__",
    "CollisionMeasure",
    "TestFunction",
    "detect_collisions",
    "integrate",
    "ContinuumAmplitude",
    "DisorderFunction",
    "EnvironmentField",
    "cell_of",
    "PartitionResult",
    "chaos_terms",
    "collision_weights",
    "partition_dp",
    "WalkEnsemble",
    "WalkPath",
    "sample_walk",
]
