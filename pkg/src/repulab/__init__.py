"""RePU network lab: exact polynomial compilation, derivative networks,
score matching and penalized isotonic regression, with a benchmark harness."""

__version__ = "0.1.0"

from .network import (
    ArchitectureStats,
    Layer,
    MixedRepuNetwork,
    architecture_stats,
    backprop,
    deserialize,
    forward,
    forward_batch,
    pdim_bound,
    repu,
    serialize,
)
from .polynomials import MultiPoly, eval_poly

__all__ = [
    "ArchitectureStats",
    "Layer",
    "MixedRepuNetwork",
    "MultiPoly",
    "architecture_stats",
    "backprop",
    "deserialize",
    "eval_poly",
    "forward",
    "forward_batch",
    "pdim_bound",
    "repu",
    "serialize",
]
