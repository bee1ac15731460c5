"""avsqueeze: periodic-query audio token compression for audio-visual LLM input.

The package turns long dense audio feature streams into short compressed
streams by inserting one shared trainable query token after every group of
``R`` input tokens and keeping only the query outputs of a small recurrent
(or attention) stack. Around that core sit sequence-construction policies for
mixing compressed audio with visual frame blocks, context-budget arithmetic,
a shortcut-based curation pass for building hard evaluation splits, and a
small trainer with its own reverse-mode autodiff.
"""

from __future__ import annotations

__version__ = "0.1.0"

from . import errors
from .budgeting import BudgetReport, budget
from .compressor import CompressorConfig, compress, count_parameters, init_weights
from .fstream import FeatureStream, read_stream, write_stream
from .rng import Rng, derive_seed
from .sequence import (
    AudioTokenStream,
    TokenSequence,
    VisualFrameBlock,
    build_interleaved,
    build_non_interleaved,
    build_visual_only,
)

__all__ = [
    "AudioTokenStream",
    "BudgetReport",
    "CompressorConfig",
    "FeatureStream",
    "Rng",
    "TokenSequence",
    "VisualFrameBlock",
    "budget",
    "build_interleaved",
    "build_non_interleaved",
    "build_visual_only",
    "compress",
    "count_parameters",
    "derive_seed",
    "errors",
    "init_weights",
    "read_stream",
    "write_stream",
    "__version__",
]
