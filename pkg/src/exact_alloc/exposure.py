"""Log-spaced histograms of supervised-token exposure.

Exposure of a supervised position is its effective left context ell (distance
to the segment start).  Buckets double in width: bucket 0 covers [0, 7] and
bucket b >= 1 covers [2**(b+2), 2**(b+3) - 1], so bucket lower bounds run
0, 8, 16, 32, ... and every ell >= 8 lands in bucket bit_length(ell) - 3.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ValidationError
from .packer import PackedSequence, PackedStream


def bucket_of(value: int) -> int:
    if value < 0:
        raise ValidationError(f"exposure value must be non-negative, got {value}")
    return 0 if value <= 7 else int(value).bit_length() - 3


def bucket_lower(bucket: int) -> int:
    if bucket < 0:
        raise ValidationError(f"bucket index must be non-negative, got {bucket}")
    return 0 if bucket == 0 else 1 << (bucket + 2)


def bucket_upper(bucket: int) -> int:
    return 7 if bucket == 0 else (1 << (bucket + 3)) - 1


def bucket_label(bucket: int) -> str:
    return f"[{bucket_lower(bucket)},{bucket_upper(bucket)}]"


def bucket_count_for(seq_len: int) -> int:
    """Number of buckets needed for exposures in [0, seq_len - 1]."""
    if seq_len < 1:
        raise ValidationError(f"seq_len must be >= 1, got {seq_len}")
    return bucket_of(seq_len - 1) + 1


@dataclass
class ExposureStats:
    """Supervised-token counts per exposure bucket."""

    seq_len: int
    counts: np.ndarray  # int64, one entry per bucket
    absolute: bool = False  # True when binned by packed offset, not ell

    @property
    def supervised_total(self) -> int:
        return int(self.counts.sum())

    def shares(self) -> np.ndarray:
        total = self.supervised_total
        if total == 0:
            raise ValidationError("no supervised tokens; shares undefined")
        return self.counts.astype(np.float64) / float(total)

    def tail_buckets(self, tau: int) -> list[int]:
        return [b for b in range(len(self.counts)) if bucket_lower(b) >= tau]

    def tail_share(self, tau: int) -> float:
        shares = self.shares()
        return float(sum(shares[b] for b in self.tail_buckets(tau)))

    def merge(self, other: "ExposureStats") -> "ExposureStats":
        if self.seq_len != other.seq_len or self.absolute != other.absolute:
            raise ValidationError("cannot merge stats with different binning")
        return ExposureStats(self.seq_len, self.counts + other.counts, self.absolute)

    def to_json(self) -> dict:
        return {
            "seq_len": self.seq_len,
            "absolute": self.absolute,
            "counts": [int(c) for c in self.counts],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ExposureStats":
        counts = np.asarray(obj["counts"], dtype=np.int64)
        return cls(int(obj["seq_len"]), counts, bool(obj.get("absolute", False)))


def sequence_exposure_values(seq: PackedSequence, absolute: bool = False) -> np.ndarray:
    """Raw exposure value per position: ell, or the absolute packed offset."""
    if absolute:
        return np.arange(len(seq.tokens), dtype=np.int64)
    return seq.effective_context


def sequence_bucket_indices(seq: PackedSequence, absolute: bool = False) -> np.ndarray:
    """Per-position bucket index (computed for every position, pad included)."""
    return kernels.bucket_indices(sequence_exposure_values(seq, absolute))


def collect_stats(stream: PackedStream, absolute: bool = False) -> ExposureStats:
    """Histogram supervised positions of a packed stream by exposure bucket."""
    n_buckets = bucket_count_for(stream.seq_len)
    counts = np.zeros(n_buckets, dtype=np.int64)
    for seq in stream.sequences:
        values = sequence_exposure_values(seq, absolute=absolute)
        counts += kernels.bucket_counts(values, seq.mask, n_buckets)
    return ExposureStats(stream.seq_len, counts, absolute)
