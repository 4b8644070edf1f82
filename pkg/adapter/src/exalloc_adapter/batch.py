"""Torch batches decoded from a packed stream and its weight file."""

from dataclasses import dataclass

import numpy as np
import torch

from .errors import FingerprintMismatchError, ValidationError
from .formats import PackFile, WeightFile, read_pack, read_weight_file


@dataclass
class AdapterBatch:
    """One training batch, everything a collator would hand the model.

    ``visibility[b, i, j]`` is True when position j is attendable from i:
    same document segment and j <= i (causal, block-diagonal per segment).
    Padding keeps its stored segment; ``loss_mask`` is what excludes it
    from the objective.
    """

    tokens: torch.Tensor  # long, (B, L)
    segment_ids: torch.Tensor  # long, (B, L)
    loss_mask: torch.Tensor  # bool, (B, L)
    weights: torch.Tensor  # float32, (B, L)
    visibility: torch.Tensor  # bool, (B, L, L)
    pad_id: int | None


def segment_ids_from_starts(starts: np.ndarray, seq_len: int) -> np.ndarray:
    ids = np.zeros(seq_len, dtype=np.int64)
    ids[starts[starts > 0]] = 1
    return np.cumsum(ids)


def visibility_from_segment_ids(segment_ids: torch.Tensor) -> torch.Tensor:
    same = segment_ids.unsqueeze(-1) == segment_ids.unsqueeze(-2)
    causal = torch.tril(
        torch.ones(segment_ids.shape[-1], segment_ids.shape[-1], dtype=torch.bool)
    )
    return same & causal


def check_pair(pack: PackFile, weights: WeightFile) -> None:
    if weights.pack_fingerprint != pack.fingerprint:
        raise FingerprintMismatchError(
            f"weight file was derived from pack {weights.pack_fingerprint[:12]}..., "
            f"got {pack.fingerprint[:12]}..."
        )
    if weights.seq_len != pack.seq_len or len(weights.rows) != len(pack.records):
        raise ValidationError("weight file shape disagrees with the packed stream")


def batch_from_records(pack: PackFile, weights: WeightFile, indices: list[int]) -> AdapterBatch:
    toks, segs, masks, wts = [], [], [], []
    for i in indices:
        rec = pack.records[i]
        toks.append(torch.from_numpy(rec.tokens.astype(np.int64)))
        segs.append(torch.from_numpy(segment_ids_from_starts(rec.segment_starts, pack.seq_len)))
        masks.append(torch.from_numpy(rec.mask.astype(bool)))
        wts.append(torch.from_numpy(weights.rows[i].astype(np.float32)))
    segment_ids = torch.stack(segs)
    return AdapterBatch(
        tokens=torch.stack(toks),
        segment_ids=segment_ids,
        loss_mask=torch.stack(masks),
        weights=torch.stack(wts),
        visibility=visibility_from_segment_ids(segment_ids),
        pad_id=pack.pad_id,
    )


def load_batch(
    pack_path: str, weights_path: str, batch_index: int, batch_size: int = 1
) -> AdapterBatch:
    """Decode batch ``batch_index`` of ``batch_size`` consecutive sequences."""
    if batch_size < 1:
        raise ValidationError("batch_size must be >= 1")
    pack = read_pack(pack_path)
    weights = read_weight_file(weights_path)
    check_pair(pack, weights)
    lo = batch_index * batch_size
    hi = lo + batch_size
    if batch_index < 0 or hi > len(pack.records):
        raise ValidationError(
            f"batch {batch_index} x {batch_size} outside stream of {len(pack.records)} sequences"
        )
    return batch_from_records(pack, weights, list(range(lo, hi)))
