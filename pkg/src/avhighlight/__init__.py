"""Audiovisual highlight detection: multimodal fusion, ranking losses, evaluation."""

__version__ = "0.1.0"

# registers the loss-head node kinds with the graph engine
from . import losses  # noqa: F401
