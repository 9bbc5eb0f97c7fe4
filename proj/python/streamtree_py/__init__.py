"""Streaming dynamic trees with datapoint retirement and active discarding."""

from ._streamtree import (
    CloudConfig,
    DiscardPolicy,
    LeafModel,
    ParticleCloud,
    Prediction,
    Task,
    friedman_mean,
    gen_friedman,
    gen_moving_xor,
)

__all__ = [
    "CloudConfig",
    "DiscardPolicy",
    "LeafModel",
    "ParticleCloud",
    "Prediction",
    "Task",
    "friedman_mean",
    "gen_friedman",
    "gen_moving_xor",
]
