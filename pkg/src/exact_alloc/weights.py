"""Per-token supervision weights from exposure statistics.

The core policy upweights supervised tokens whose effective context falls in
the long-context tail (bucket lower bound >= tau).  Tail bucket b with
exposure share q_b gets rarity r_b = (q_b + eps) ** -gamma, and

    w_b = 1 + alpha * r_b / rbar,   rbar = sum_T q_j * r_j,

so the added mass sums to alpha regardless of gamma: sum_T q_b (w_b - 1)
== alpha.  rbar is evaluated as fsum(c_j * r_j) / C_T so that gamma = 0
collapses to w_b == 1 + alpha exactly, and alpha = 0 to w_b == 1 exactly.

Control variants: uniform_boost applies the flat 1 + alpha on the tail;
packed_position runs the same formula on absolute-offset buckets instead of
effective-context buckets; random_same_mass reassigns the non-unit weight
multiset to a uniformly random subset of supervised tokens; identity leaves
every weight at 1.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import kernels
from .binio import read_exact, read_struct
from .errors import EmptyTailError, FingerprintMismatchError, FormatError, ValidationError
from .exposure import ExposureStats, bucket_lower, collect_stats, sequence_exposure_values
from .packer import PackedSequence, PackedStream

WEIGHTS_MAGIC = b"EXWT"
WEIGHTS_VERSION = 1

KINDS = ("exact", "uniform_boost", "packed_position", "random_same_mass", "identity")
_KIND_CODES = {name: i for i, name in enumerate(KINDS)}
_KIND_NAMES = {i: name for name, i in _KIND_CODES.items()}


@dataclass(frozen=True)
class WeightPolicy:
    kind: str = "exact"
    alpha: float = 0.15
    gamma: float = 0.5
    eps: float = 1e-4
    tau: int = 2048
    seed: int = 0  # only consumed by random_same_mass

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValidationError(f"unknown weight kind {self.kind!r}; expected one of {KINDS}")
        if not (self.alpha >= 0.0 and math.isfinite(self.alpha)):
            raise ValidationError(f"alpha must be finite and >= 0, got {self.alpha}")
        if not (self.gamma >= 0.0 and math.isfinite(self.gamma)):
            raise ValidationError(f"gamma must be finite and >= 0, got {self.gamma}")
        if not (self.eps > 0.0 and math.isfinite(self.eps)):
            raise ValidationError(f"eps must be finite and > 0, got {self.eps}")
        if self.tau < 0:
            raise ValidationError(f"tau must be >= 0, got {self.tau}")
        if not (0 <= self.seed < 2**64):
            raise ValidationError("seed must fit in 64 bits")

    def uses_absolute_offsets(self) -> bool:
        return self.kind == "packed_position"

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "alpha": self.alpha,
            "gamma": self.gamma,
            "eps": self.eps,
            "tau": self.tau,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "WeightPolicy":
        policy = cls(
            kind=obj.get("kind", "exact"),
            alpha=float(obj.get("alpha", 0.15)),
            gamma=float(obj.get("gamma", 0.5)),
            eps=float(obj.get("eps", 1e-4)),
            tau=int(obj.get("tau", 2048)),
            seed=int(obj.get("seed", 0)),
        )
        policy.validate()
        return policy


def tail_bucket_set(stats: ExposureStats, tau: int) -> list[int]:
    """Occupied buckets whose lower bound reaches the threshold."""
    return [
        b
        for b in range(len(stats.counts))
        if bucket_lower(b) >= tau and stats.counts[b] > 0
    ]


def _rarity_table(stats: ExposureStats, policy: WeightPolicy) -> np.ndarray:
    tail = tail_bucket_set(stats, policy.tau)
    if not tail:
        occupied = {
            b: (bucket_lower(b), int(stats.counts[b]))
            for b in range(len(stats.counts))
            if stats.counts[b] > 0
        }
        raise EmptyTailError(policy.tau, occupied)
    counts = stats.counts.astype(np.float64)
    c_tail = float(math.fsum(counts[b] for b in tail))
    table = np.ones(len(stats.counts), dtype=np.float64)
    rarity = {b: (counts[b] / c_tail + policy.eps) ** -policy.gamma for b in tail}
    # fsum of c_b * r_b, divided once by the tail mass: with gamma == 0 every
    # r_b is exactly 1.0 and rbar comes out exactly 1.0, so w == 1 + alpha.
    rbar = math.fsum(counts[b] * rarity[b] for b in tail) / c_tail
    for b in tail:
        table[b] = 1.0 + policy.alpha * rarity[b] / rbar
    return table


def bucket_weight_table(stats: ExposureStats, policy: WeightPolicy) -> np.ndarray:
    """Dense per-bucket weight table (float64); non-tail buckets stay at 1."""
    policy.validate()
    if policy.kind == "identity":
        return np.ones(len(stats.counts), dtype=np.float64)
    if policy.kind == "uniform_boost":
        tail = tail_bucket_set(stats, policy.tau)
        if not tail:
            occupied = {
                b: (bucket_lower(b), int(stats.counts[b]))
                for b in range(len(stats.counts))
                if stats.counts[b] > 0
            }
            raise EmptyTailError(policy.tau, occupied)
        table = np.ones(len(stats.counts), dtype=np.float64)
        table[tail] = 1.0 + policy.alpha
        return table
    # exact, packed_position, and the rarity table random_same_mass reshuffles
    return _rarity_table(stats, policy)


def tail_mass_excess(stats: ExposureStats, table: np.ndarray, tau: int) -> float:
    """sum_T q_b (w_b - 1) over occupied tail buckets; equals alpha by design."""
    tail = tail_bucket_set(stats, tau)
    counts = stats.counts.astype(np.float64)
    c_tail = math.fsum(counts[b] for b in tail)
    return math.fsum(counts[b] * (table[b] - 1.0) for b in tail) / c_tail


def sequence_weights(
    seq: PackedSequence, table: np.ndarray, absolute: bool = False
) -> np.ndarray:
    """Map a bucket table onto one sequence; masked positions get weight 1."""
    values = sequence_exposure_values(seq, absolute=absolute)
    return kernels.map_bucket_weights(values, seq.mask, table)


@dataclass
class WeightSet:
    """Per-token weights for a packed stream plus the policy that made them."""

    policy: WeightPolicy
    pack_fingerprint: str
    seq_len: int
    bucket_table: np.ndarray  # float64; ones when no bucket structure applies
    per_seq: list[np.ndarray]  # float32 (seq_len,) each

    def check_pack(self, fingerprint: str) -> None:
        if fingerprint != self.pack_fingerprint:
            raise FingerprintMismatchError(
                "weight set was derived from a different packed stream "
                f"(expected {self.pack_fingerprint[:12]}..., got {fingerprint[:12]}...)"
            )

    def total_weighted_mass(self, stream: PackedStream) -> float:
        """fsum of w_i over supervised positions (float64 accumulation)."""
        parts = []
        for seq, w in zip(stream.sequences, self.per_seq):
            sel = seq.mask == 1
            parts.append(math.fsum(w[sel].astype(np.float64)))
        return math.fsum(parts)


def _random_same_mass(
    stream: PackedStream, policy: WeightPolicy, base_table: np.ndarray
) -> list[np.ndarray]:
    """Reassign the non-unit weight multiset to random supervised positions.

    Every supervised token draws a uniform key from a per-sequence generator
    (seeded by (policy.seed, seq index), so the draw does not depend on how
    sequences are sharded); the K tokens with the smallest keys receive the
    K non-unit weights in descending order.  Total mass is preserved exactly
    because the multiset of weights is unchanged.
    """
    multiset: list[float] = []
    key_parts: list[np.ndarray] = []
    seq_parts: list[np.ndarray] = []
    pos_parts: list[np.ndarray] = []
    for si, seq in enumerate(stream.sequences):
        w = sequence_weights(seq, base_table)
        sel = seq.mask == 1
        nonunit = sel & (w != 1.0)
        multiset.extend(float(x) for x in w[nonunit])
        rng = np.random.default_rng(np.random.SeedSequence(policy.seed, spawn_key=(si,)))
        keys = rng.random(len(seq.tokens))
        sup = np.nonzero(sel)[0]
        key_parts.append(keys[sup])
        seq_parts.append(np.full(len(sup), si, dtype=np.int64))
        pos_parts.append(sup.astype(np.int64))

    out = [np.ones(len(seq.tokens), dtype=np.float64) for seq in stream.sequences]
    k = len(multiset)
    if k == 0:
        return out
    keys = np.concatenate(key_parts)
    seq_idx = np.concatenate(seq_parts)
    pos = np.concatenate(pos_parts)
    if k > len(keys):
        raise ValidationError("non-unit weights outnumber supervised tokens")
    order = np.lexsort((pos, seq_idx, keys))[:k]
    values = np.sort(np.asarray(multiset, dtype=np.float64))[::-1]
    for rank, flat in enumerate(order):
        out[seq_idx[flat]][pos[flat]] = values[rank]
    return out


def compute_weights(stream: PackedStream, policy: WeightPolicy) -> WeightSet:
    """Derive the full per-token weight set for a packed stream."""
    policy.validate()
    stats = collect_stats(stream, absolute=policy.uses_absolute_offsets())
    table = bucket_weight_table(stats, policy)
    if policy.kind == "random_same_mass":
        per_seq64 = _random_same_mass(stream, policy, table)
    else:
        absolute = policy.uses_absolute_offsets()
        per_seq64 = [sequence_weights(seq, table, absolute) for seq in stream.sequences]
    per_seq = [w.astype(np.float32) for w in per_seq64]
    return WeightSet(policy, stream.fingerprint(), stream.seq_len, table, per_seq)


# ---------------------------------------------------------------------------
# EXWT binary format


def write_weights(path: str, ws: WeightSet) -> None:
    ws.policy.validate()
    fp = bytes.fromhex(ws.pack_fingerprint)
    if len(fp) != 32:
        raise FormatError("pack fingerprint must be a 32-byte sha256 hex digest")
    n_buckets = len(ws.bucket_table)
    if n_buckets > 0xFFFF:
        raise FormatError(f"bucket table too large ({n_buckets})")
    with open(path, "wb") as f:
        f.write(WEIGHTS_MAGIC)
        f.write(
            struct.pack(
                "<HIQBdddIQ",
                WEIGHTS_VERSION,
                ws.seq_len,
                len(ws.per_seq),
                _KIND_CODES[ws.policy.kind],
                ws.policy.alpha,
                ws.policy.gamma,
                ws.policy.eps,
                ws.policy.tau,
                ws.policy.seed,
            )
        )
        f.write(fp)
        f.write(struct.pack("<H", n_buckets))
        for b in range(n_buckets):
            f.write(struct.pack("<Hd", b, float(ws.bucket_table[b])))
        for w in ws.per_seq:
            if len(w) != ws.seq_len:
                raise FormatError("weight row length disagrees with seq_len")
            f.write(np.ascontiguousarray(w, dtype="<f4").tobytes())


def read_weights(path: str) -> WeightSet:
    with open(path, "rb") as f:
        magic = read_exact(f, 4, path)
        if magic != WEIGHTS_MAGIC:
            raise FormatError(f"bad weights magic {magic!r}", path=path)
        (version, seq_len, seq_count, kind_code, alpha, gamma, eps, tau, seed) = read_struct(
            f, "<HIQBdddIQ", path
        )
        if version != WEIGHTS_VERSION:
            raise FormatError(f"unsupported weights version {version}", path=path)
        if kind_code not in _KIND_NAMES:
            raise FormatError(f"unknown weight kind code {kind_code}", path=path)
        fp = read_exact(f, 32, path).hex()
        (n_buckets,) = read_struct(f, "<H", path)
        table = np.ones(n_buckets, dtype=np.float64)
        for _ in range(n_buckets):
            b, value = read_struct(f, "<Hd", path)
            if b >= n_buckets:
                raise FormatError(f"bucket index {b} out of range", path=path)
            table[b] = value
        rows = []
        for _ in range(seq_count):
            row = np.frombuffer(read_exact(f, 4 * seq_len, path), dtype="<f4")
            rows.append(row.astype(np.float32))
        if f.read(1):
            raise FormatError("trailing bytes after last weight row", path=path)
    policy = WeightPolicy(
        kind=_KIND_NAMES[kind_code], alpha=alpha, gamma=gamma, eps=eps, tau=int(tau), seed=int(seed)
    )
    policy.validate()
    return WeightSet(policy, fp, int(seq_len), table, rows)
