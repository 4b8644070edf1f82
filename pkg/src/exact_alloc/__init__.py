"""Supervision-allocation toolkit for packed causal-LM training.

Pipeline: pack documents into fixed-length sequences (tracking each
position's effective left context), histogram supervised tokens into
log-spaced exposure buckets, derive mass-preserving tail weights (plus
control schedules), evaluate/export the weighted objective, and verify the
mechanism with a tiny hand-differentiated LM and an evidence-margin probe
analyzer.
"""

from .corpus import (
    CorpusManifest,
    Document,
    SynthSpec,
    generate_synthetic_corpus,
    load_documents,
    split_documents,
    write_documents,
)
from .errors import (
    DivergenceError,
    EmptyTailError,
    FingerprintMismatchError,
    FormatError,
    ManifestMismatchError,
    ToolkitError,
    ValidationError,
)
from .exposure import ExposureStats, bucket_label, bucket_lower, bucket_of, collect_stats
from .objective import loss_mass_shares, read_ce, region_means, weighted_ce, write_ce
from .packer import (
    PackedSequence,
    PackedStream,
    PackPolicy,
    pack_documents,
    read_packed,
    write_packed,
)
from .probe import (
    BootstrapResult,
    ProbeField,
    ProbeRecord,
    build_field,
    delta_field,
    paired_bootstrap_ci,
    read_probe_dump,
)
from .toylm import ModelConfig, ToyLM, TrainConfig, evaluate, init_model, train
from .weights import WeightPolicy, WeightSet, bucket_weight_table, compute_weights, read_weights, write_weights

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BootstrapResult",
    "CorpusManifest",
    "DivergenceError",
    "Document",
    "EmptyTailError",
    "ExposureStats",
    "FingerprintMismatchError",
    "FormatError",
    "ManifestMismatchError",
    "ModelConfig",
    "PackPolicy",
    "PackedSequence",
    "PackedStream",
    "ProbeField",
    "ProbeRecord",
    "SynthSpec",
    "ToolkitError",
    "ToyLM",
    "TrainConfig",
    "ValidationError",
    "WeightPolicy",
    "WeightSet",
    "bucket_label",
    "bucket_lower",
    "bucket_of",
    "bucket_weight_table",
    "build_field",
    "collect_stats",
    "compute_weights",
    "delta_field",
    "evaluate",
    "generate_synthetic_corpus",
    "init_model",
    "load_documents",
    "loss_mass_shares",
    "pack_documents",
    "paired_bootstrap_ci",
    "read_ce",
    "read_packed",
    "read_probe_dump",
    "read_weights",
    "region_means",
    "split_documents",
    "train",
    "weighted_ce",
    "write_ce",
    "write_documents",
    "write_packed",
    "write_weights",
]
