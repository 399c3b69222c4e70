"""dpparse: instance-lexicon Dirichlet-process word segmentation.

Segments corpora of embedding-block sequences (speech features) or symbol
sequences (phonemized text) without supervision, and ships the matching
evaluation metrics and a synthetic-corpus harness.
"""

__version__ = "0.1.0"

from dpparse.core import (
    BLOCK_MS,
    Corpus,
    FrameMatrix,
    GoldAlignment,
    Segment,
    Segmentation,
    SymbolSequence,
    pair_frames,
    validate_corpus,
)

__all__ = [
    "BLOCK_MS",
    "Corpus",
    "FrameMatrix",
    "GoldAlignment",
    "Segment",
    "Segmentation",
    "SymbolSequence",
    "pair_frames",
    "validate_corpus",
]
