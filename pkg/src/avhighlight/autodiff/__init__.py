"""Small reverse-mode differentiation engine for the fusion model."""

from .graph import Graph, Node, Trace, backward, forward, gradient_check, run
from .kernels import BACKEND
from .ops import OPS
from .params import (
    AdamConfig,
    ParamStore,
    adam_step,
    checkpoint_bytes,
    load_checkpoint,
    parse_checkpoint,
    save_checkpoint,
)

__all__ = [
    "BACKEND",
    "OPS",
    "AdamConfig",
    "Graph",
    "Node",
    "ParamStore",
    "Trace",
    "adam_step",
    "backward",
    "checkpoint_bytes",
    "forward",
    "gradient_check",
    "load_checkpoint",
    "parse_checkpoint",
    "run",
    "save_checkpoint",
]
