"""Pure-numpy kernel implementations.

This module is the reference semantics for the compiled core in
``_core.pyx``: both backends must return bit-identical results.  For the
floating-point kernels that means the accumulation order is part of the
contract -- per-segment running sums walk positions in increasing order,
and the backward suffix sums walk them in decreasing order.  Keep any
change here in lockstep with the .pyx file.
"""

from __future__ import annotations

import numpy as np


def effective_context(segment_starts: np.ndarray, length: int) -> np.ndarray:
    """Distance from each position to its segment start (int64, shape (length,))."""
    starts = np.asarray(segment_starts, dtype=np.int64)
    if length == 0:
        return np.zeros(0, dtype=np.int64)
    seg_len = np.diff(np.concatenate([starts, [length]]))
    return np.arange(length, dtype=np.int64) - np.repeat(starts, seg_len)


def bucket_indices(values: np.ndarray) -> np.ndarray:
    """Log-2 bucket index per value: 0 for v <= 7, else bit_length(v) - 3."""
    v = np.asarray(values, dtype=np.int64)
    # frexp exponent of the float64 image equals the integer bit length
    # (exact for v < 2**53, far beyond any packed offset).
    exp = np.frexp(v.astype(np.float64))[1].astype(np.int64)
    return np.where(v <= 7, 0, exp - 3)


def bucket_counts(values: np.ndarray, mask: np.ndarray, n_buckets: int) -> np.ndarray:
    """Count mask==1 positions per bucket of their value (int64, shape (n_buckets,))."""
    idx = bucket_indices(values)
    keep = np.asarray(mask, dtype=np.uint8) != 0
    kept = idx[keep]
    if kept.size and int(kept.max()) >= n_buckets:
        raise ValueError(
            f"bucket index {int(kept.max())} out of range for {n_buckets} buckets"
        )
    return np.bincount(kept, minlength=n_buckets).astype(np.int64)


def map_bucket_weights(
    values: np.ndarray, mask: np.ndarray, bucket_weights: np.ndarray
) -> np.ndarray:
    """Per-position weight = bucket_weights[bucket(value)]; masked positions get 1.0."""
    idx = bucket_indices(values)
    table = np.asarray(bucket_weights, dtype=np.float64)
    if idx.size and int(idx.max()) >= table.size:
        raise ValueError(
            f"bucket index {int(idx.max())} out of range for weight table of size {table.size}"
        )
    out = table[idx]
    out[np.asarray(mask, dtype=np.uint8) == 0] = 1.0
    return out


def segment_prefix_mean(
    vectors: np.ndarray, segment_starts: np.ndarray, length: int | None = None
) -> np.ndarray:
    """Exclusive prefix mean of rows within each segment.

    out[i] = (1 / (i - s)) * sum(vectors[s:i]) for segment start s <= i,
    and a zero row when i == s.  The running sum adds rows in increasing
    position order (accumulation-order contract).
    """
    vec = np.asarray(vectors, dtype=np.float64)
    n = vec.shape[0] if length is None else length
    starts = np.asarray(segment_starts, dtype=np.int64)
    out = np.zeros_like(vec)
    bounds = np.concatenate([starts, [n]])
    for k in range(len(starts)):
        s, e = int(bounds[k]), int(bounds[k + 1])
        if e - s < 2:
            continue
        csum = np.cumsum(vec[s : e - 1], axis=0)
        denom = np.arange(1, e - s, dtype=np.float64)[:, None]
        out[s + 1 : e] = csum / denom
    return out


def segment_suffix_scatter(
    grads: np.ndarray, denominators: np.ndarray, segment_starts: np.ndarray
) -> np.ndarray:
    """Per-source-row share of downstream pooled gradients within each segment.

    With u[i] = grads[i] / denominators[i] (zero rows where the denominator
    is zero), returns out[j] = sum(u[j+1:e]) for j in segment [s, e).  The
    suffix sum adds rows in decreasing position order (accumulation-order
    contract, mirrored from segment_prefix_mean).
    """
    g = np.asarray(grads, dtype=np.float64)
    den = np.asarray(denominators, dtype=np.float64)
    n = g.shape[0]
    starts = np.asarray(segment_starts, dtype=np.int64)
    u = np.zeros_like(g)
    nz = den != 0.0
    u[nz] = g[nz] / den[nz, None]
    out = np.zeros_like(g)
    bounds = np.concatenate([starts, [n]])
    for k in range(len(starts)):
        s, e = int(bounds[k]), int(bounds[k + 1])
        if e - s < 2:
            continue
        rev = np.cumsum(u[s + 1 : e][::-1], axis=0)[::-1]
        out[s : e - 1] = rev
    return out
