"""Reference torch consumer for exact-alloc interchange files."""

from .batch import AdapterBatch, load_batch, visibility_from_segment_ids
from .errors import (
    AdapterError,
    FingerprintMismatchError,
    FormatError,
    ValidationError,
)
from .formats import (
    PackFile,
    PackedRecord,
    WeightFile,
    read_ce_file,
    read_pack,
    read_weight_file,
)
from .loss import cross_check_loss, render_report, weighted_loss
from .demo import DemoResult, TinyAttentionLM, run_demo

__version__ = "0.1.0"

__all__ = [
    "AdapterBatch",
    "AdapterError",
    "DemoResult",
    "FingerprintMismatchError",
    "FormatError",
    "PackFile",
    "PackedRecord",
    "TinyAttentionLM",
    "ValidationError",
    "WeightFile",
    "cross_check_loss",
    "load_batch",
    "read_ce_file",
    "read_pack",
    "read_weight_file",
    "render_report",
    "run_demo",
    "visibility_from_segment_ids",
    "weighted_loss",
    "__version__",
]
