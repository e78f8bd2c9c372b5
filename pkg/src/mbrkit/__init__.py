"""mbrkit: MBR decoding, QE reranking, and distillation-dataset tooling."""

from .core import (
    Candidate,
    CandidateSet,
    DataError,
    DistillExample,
    MbrkitError,
    Segment,
    SelectionResult,
    UtilityFunction,
)

__version__ = "0.1.0"

__all__ = [
    "Candidate",
    "CandidateSet",
    "DataError",
    "DistillExample",
    "MbrkitError",
    "Segment",
    "SelectionResult",
    "UtilityFunction",
    "__version__",
]
