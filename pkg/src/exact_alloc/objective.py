"""Weighted cross-entropy reductions over packed batches.

Two normalizations of the same weighted numerator sum_i m_i w_i ce_i:

    mask_sum            divide by sum_i m_i        (supervised-token count)
    weighted_mask_sum   divide by sum_i m_i w_i    (weighted mass)

With unit weights both collapse to the plain mean over supervised tokens;
weighted_mask_sum is additionally invariant to rescaling all weights by a
positive constant.  Sums run through math.fsum so results do not depend on
how sequences are sharded into batches.
"""

from __future__ import annotations

import math
import struct
from itertools import chain
from typing import Sequence

import numpy as np

from . import kernels
from .binio import read_exact, read_struct
from .errors import FormatError, ValidationError
from .exposure import bucket_count_for, bucket_lower
from .packer import PackedStream

CE_MAGIC = b"EXCE"
CE_VERSION = 1

NORMALIZATIONS = ("mask_sum", "weighted_mask_sum")


def _check_rows(
    masks: Sequence[np.ndarray], weights: Sequence[np.ndarray], normalization: str
) -> None:
    if normalization not in NORMALIZATIONS:
        raise ValidationError(
            f"unknown normalization {normalization!r}; expected one of {NORMALIZATIONS}"
        )
    if len(masks) != len(weights):
        raise ValidationError("masks and weights row counts differ")
    for m, w in zip(masks, weights):
        if len(m) != len(w):
            raise ValidationError("mask/weight row lengths differ")


def denominator(
    masks: Sequence[np.ndarray], weights: Sequence[np.ndarray], normalization: str
) -> float:
    _check_rows(masks, weights, normalization)
    if normalization == "mask_sum":
        total = math.fsum(chain.from_iterable(m.astype(np.float64) for m in masks))
    else:
        total = math.fsum(
            chain.from_iterable(
                m.astype(np.float64) * w.astype(np.float64) for m, w in zip(masks, weights)
            )
        )
    if total <= 0.0:
        raise ValidationError("no supervised tokens in batch; reduction undefined")
    return total


def weighted_ce(
    masks: Sequence[np.ndarray],
    weights: Sequence[np.ndarray],
    ces: Sequence[np.ndarray],
    normalization: str,
) -> float:
    """The scalar objective over a batch of per-token CE rows."""
    den = denominator(masks, weights, normalization)
    num = math.fsum(
        chain.from_iterable(
            m.astype(np.float64) * w.astype(np.float64) * ce.astype(np.float64)
            for m, w, ce in zip(masks, weights, ces)
        )
    )
    return num / den


def gradient_scale(
    masks: Sequence[np.ndarray], weights: Sequence[np.ndarray], normalization: str
) -> list[np.ndarray]:
    """Per-token factor g_i = m_i w_i / D so that dL/dtheta = sum g_i dce_i/dtheta."""
    den = denominator(masks, weights, normalization)
    return [
        m.astype(np.float64) * w.astype(np.float64) / den for m, w in zip(masks, weights)
    ]


def region_means(
    stream: PackedStream, ces: Sequence[np.ndarray], tau: int
) -> dict[str, float]:
    """Unweighted mean CE split at the bucket boundary tau.

    A supervised token is in the tail when the lower bound of its
    effective-context bucket is >= tau; this matches the bucket-level tail
    used for weighting, not a raw ell >= tau cut.
    """
    if len(ces) != len(stream.sequences):
        raise ValidationError("ce row count disagrees with packed stream")
    n_buckets = bucket_count_for(stream.seq_len)
    lowers = np.asarray([bucket_lower(b) for b in range(n_buckets)], dtype=np.int64)
    tail_num: list[float] = []
    tail_cnt = 0
    head_num: list[float] = []
    head_cnt = 0
    for seq, ce in zip(stream.sequences, ces):
        idx = kernels.bucket_indices(seq.effective_context)
        sup = seq.mask == 1
        tail = sup & (lowers[idx] >= tau)
        head = sup & ~tail
        tail_num.append(math.fsum(ce[tail].astype(np.float64)))
        head_num.append(math.fsum(ce[head].astype(np.float64)))
        tail_cnt += int(tail.sum())
        head_cnt += int(head.sum())
    out = {
        "tail_tokens": float(tail_cnt),
        "non_tail_tokens": float(head_cnt),
        "tail_mean_ce": math.fsum(tail_num) / tail_cnt if tail_cnt else float("nan"),
        "non_tail_mean_ce": math.fsum(head_num) / head_cnt if head_cnt else float("nan"),
    }
    total = tail_cnt + head_cnt
    out["mean_ce"] = (
        (math.fsum(tail_num) + math.fsum(head_num)) / total if total else float("nan")
    )
    return out


def loss_mass_shares(
    stream: PackedStream,
    weights: Sequence[np.ndarray],
    ces: Sequence[np.ndarray],
    tau: int,
) -> dict[str, float]:
    """Fraction of (un)weighted loss mass landing on tail tokens.

    Weighting moves loss mass toward the tail without touching the CE
    values themselves, so the weighted share is the direct measure of how
    much optimization pressure the tail receives.
    """
    if not (len(weights) == len(ces) == len(stream.sequences)):
        raise ValidationError("row counts disagree with packed stream")
    n_buckets = bucket_count_for(stream.seq_len)
    lowers = np.asarray([bucket_lower(b) for b in range(n_buckets)], dtype=np.int64)
    plain_tail: list[float] = []
    plain_all: list[float] = []
    wtd_tail: list[float] = []
    wtd_all: list[float] = []
    for seq, w, ce in zip(stream.sequences, weights, ces):
        idx = kernels.bucket_indices(seq.effective_context)
        sup = seq.mask == 1
        tail = sup & (lowers[idx] >= tau)
        ce64 = ce.astype(np.float64)
        w64 = w.astype(np.float64)
        plain_tail.append(math.fsum(ce64[tail]))
        plain_all.append(math.fsum(ce64[sup]))
        wtd_tail.append(math.fsum((w64 * ce64)[tail]))
        wtd_all.append(math.fsum((w64 * ce64)[sup]))
    total_plain = math.fsum(plain_all)
    total_wtd = math.fsum(wtd_all)
    if total_plain <= 0.0 or total_wtd <= 0.0:
        raise ValidationError("loss mass is zero; shares undefined")
    return {
        "unweighted_tail_share": math.fsum(plain_tail) / total_plain,
        "weighted_tail_share": math.fsum(wtd_tail) / total_wtd,
    }


# ---------------------------------------------------------------------------
# EXCE binary format: per-token CE rows aligned with a packed stream


def write_ce(path: str, rows: Sequence[np.ndarray], seq_len: int) -> None:
    with open(path, "wb") as f:
        f.write(CE_MAGIC)
        f.write(struct.pack("<HIQ", CE_VERSION, seq_len, len(rows)))
        for row in rows:
            if len(row) != seq_len:
                raise FormatError("ce row length disagrees with seq_len")
            f.write(np.ascontiguousarray(row, dtype="<f8").tobytes())


def read_ce(path: str) -> tuple[list[np.ndarray], int]:
    with open(path, "rb") as f:
        magic = read_exact(f, 4, path)
        if magic != CE_MAGIC:
            raise FormatError(f"bad ce magic {magic!r}", path=path)
        version, seq_len, seq_count = read_struct(f, "<HIQ", path)
        if version != CE_VERSION:
            raise FormatError(f"unsupported ce version {version}", path=path)
        rows = []
        for _ in range(seq_count):
            row = np.frombuffer(read_exact(f, 8 * seq_len, path), dtype="<f8")
            rows.append(row.astype(np.float64))
        if f.read(1):
            raise FormatError("trailing bytes after last ce row", path=path)
    return rows, int(seq_len)
