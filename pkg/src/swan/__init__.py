"""Sequence modeling via segmentations.

Exact marginalization over output segmentations (and monotonic input
alignments), a GRU segment scorer trained through that marginal, and the
matching beam-search decoder.
"""
from .core import (
    END,
    InfeasibleError,
    ModelConfig,
    Segmentation,
    SwanError,
    Vocab,
    decode_tokens,
    encode_tokens,
    feasible,
    validate_segmentation,
)
from .marginal import BACKEND

__version__ = "0.1.0"
