"""Build, augment and evaluate five-class aspect-based sentiment datasets."""

from .core import (
    FIVE_CLASSES,
    THREE_CLASSES,
    AbsaForgeError,
    AspectLabel,
    Dataset,
    Polarity,
    ReasoningChain,
    Sample,
    polarity_merge,
    polarity_parse,
    read_jsonl,
    sample_merge,
    write_jsonl,
)
from .corpus import SourceDescriptor, dataset_stats, dedup_merge, ingest, leak_check
from .gateway import Cassette, ChatRequest, Gateway, GenParams
from .seeding import derive_seed

__version__ = "0.1.0"

__all__ = [
    "FIVE_CLASSES",
    "THREE_CLASSES",
    "AbsaForgeError",
    "AspectLabel",
    "Cassette",
    "ChatRequest",
    "Dataset",
    "Gateway",
    "GenParams",
    "Polarity",
    "ReasoningChain",
    "Sample",
    "SourceDescriptor",
    "dataset_stats",
    "dedup_merge",
    "derive_seed",
    "ingest",
    "leak_check",
    "polarity_merge",
    "polarity_parse",
    "read_jsonl",
    "sample_merge",
    "write_jsonl",
]
