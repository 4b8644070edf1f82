"""Standalone readers for the toolkit's binary interchange files.

The adapter deliberately re-implements decoding from the published layouts
instead of importing the toolkit: the files are the contract.  All integers
are little-endian.

``EXPK`` (packed stream): magic ``EXPK``, header ``<HIQI``
(version, seq_len, seq_count, pad_id with 0xFFFFFFFF meaning unset), then
per sequence: seq_len u32 tokens, u16 segment count, that many u32 segment
starts, ceil(seq_len/8) bytes of LSB-first mask bits, seq_len u32 effective
context values.

``EXWT`` (per-token weights): magic ``EXWT``, header ``<HIQBdddIQ``
(version, seq_len, seq_count, kind code, alpha, gamma, eps, tau, seed),
32 raw bytes of the source pack's sha256, u16 bucket-table length, that
many ``<Hd`` (bucket, weight) entries, then seq_len f32 weights per
sequence.

``EXCE`` (per-token cross entropy): magic ``EXCE``, header ``<HIQ``
(version, seq_len, seq_count), then seq_len f64 values per sequence.
"""

import hashlib
import io
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

PACK_MAGIC = b"EXPK"
WEIGHTS_MAGIC = b"EXWT"
CE_MAGIC = b"EXCE"
PACK_VERSION = 1
WEIGHTS_VERSION = 1
CE_VERSION = 1
PAD_UNSET = 0xFFFFFFFF

WEIGHT_KINDS = ("exact", "uniform_boost", "packed_position", "random_same_mass", "identity")


def _read_exact(f, n: int, path: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file: wanted {n} bytes, got {len(data)} [{path}]")
    return data


def _read_struct(f, fmt: str, path: str) -> tuple:
    return struct.unpack(fmt, _read_exact(f, struct.calcsize(fmt), path))


@dataclass(frozen=True)
class PackedRecord:
    tokens: np.ndarray  # uint32, (seq_len,)
    segment_starts: np.ndarray  # int64, sorted, starts with 0
    mask: np.ndarray  # uint8, (seq_len,)
    effective_context: np.ndarray  # int64, (seq_len,)


@dataclass(frozen=True)
class PackFile:
    seq_len: int
    pad_id: int | None
    records: list[PackedRecord]
    fingerprint: str  # sha256 of the file bytes


@dataclass(frozen=True)
class WeightFile:
    kind: str
    alpha: float
    gamma: float
    eps: float
    tau: int
    seed: int
    pack_fingerprint: str
    seq_len: int
    bucket_table: np.ndarray  # float64
    rows: list[np.ndarray]  # float32, (seq_len,) each


def _check_record(rec: PackedRecord, seq_len: int, path: str, index: int) -> None:
    starts = rec.segment_starts
    if starts.size == 0 or starts[0] != 0:
        raise FormatError(f"record {index}: segment starts must begin at 0 [{path}]")
    if np.any(np.diff(starts) <= 0) or starts[-1] >= seq_len:
        raise FormatError(f"record {index}: segment starts not strictly rising [{path}]")
    # the stored effective context must match what the starts imply
    expect = np.arange(seq_len, dtype=np.int64)
    expect -= starts[np.searchsorted(starts, expect, side="right") - 1]
    if not np.array_equal(expect, rec.effective_context):
        raise FormatError(f"record {index}: effective context disagrees with starts [{path}]")
    if np.any((rec.mask != 0) & (rec.mask != 1)):
        raise FormatError(f"record {index}: mask bits must be 0 or 1 [{path}]")


def read_pack(path: str) -> PackFile:
    with open(path, "rb") as fh:
        data = fh.read()
    fingerprint = hashlib.sha256(data).hexdigest()
    with io.BytesIO(data) as f:
        magic = _read_exact(f, 4, path)
        if magic != PACK_MAGIC:
            raise FormatError(f"bad pack magic {magic!r} [{path}]")
        version, seq_len, seq_count, pad_raw = _read_struct(f, "<HIQI", path)
        if version != PACK_VERSION:
            raise FormatError(f"unsupported pack version {version} [{path}]")
        mask_bytes = (seq_len + 7) // 8
        records = []
        for index in range(seq_count):
            tokens = np.frombuffer(_read_exact(f, 4 * seq_len, path), dtype="<u4").copy()
            (n_seg,) = _read_struct(f, "<H", path)
            if n_seg == 0:
                raise FormatError(f"record {index}: zero segments [{path}]")
            starts = np.frombuffer(_read_exact(f, 4 * n_seg, path), dtype="<u4").astype(np.int64)
            packed = np.frombuffer(_read_exact(f, mask_bytes, path), dtype=np.uint8)
            mask = np.unpackbits(packed, bitorder="little")[:seq_len]
            ell = np.frombuffer(_read_exact(f, 4 * seq_len, path), dtype="<u4").astype(np.int64)
            rec = PackedRecord(tokens.astype(np.uint32), starts, mask, ell)
            _check_record(rec, seq_len, path, index)
            records.append(rec)
        if f.read(1):
            raise FormatError(f"trailing bytes after last record [{path}]")
    pad_id = None if pad_raw == PAD_UNSET else int(pad_raw)
    return PackFile(int(seq_len), pad_id, records, fingerprint)


def read_weight_file(path: str) -> WeightFile:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, path)
        if magic != WEIGHTS_MAGIC:
            raise FormatError(f"bad weights magic {magic!r} [{path}]")
        (version, seq_len, seq_count, kind_code, alpha, gamma, eps, tau, seed) = _read_struct(
            f, "<HIQBdddIQ", path
        )
        if version != WEIGHTS_VERSION:
            raise FormatError(f"unsupported weights version {version} [{path}]")
        if kind_code >= len(WEIGHT_KINDS):
            raise FormatError(f"unknown weight kind code {kind_code} [{path}]")
        pack_fingerprint = _read_exact(f, 32, path).hex()
        (n_buckets,) = _read_struct(f, "<H", path)
        table = np.ones(n_buckets, dtype=np.float64)
        for _ in range(n_buckets):
            bucket, value = _read_struct(f, "<Hd", path)
            if bucket >= n_buckets:
                raise FormatError(f"bucket index {bucket} out of range [{path}]")
            table[bucket] = value
        rows = []
        for _ in range(seq_count):
            rows.append(np.frombuffer(_read_exact(f, 4 * seq_len, path), dtype="<f4").copy())
        if f.read(1):
            raise FormatError(f"trailing bytes after last weight row [{path}]")
    return WeightFile(
        kind=WEIGHT_KINDS[kind_code],
        alpha=float(alpha),
        gamma=float(gamma),
        eps=float(eps),
        tau=int(tau),
        seed=int(seed),
        pack_fingerprint=pack_fingerprint,
        seq_len=int(seq_len),
        bucket_table=table,
        rows=rows,
    )


def read_ce_file(path: str) -> tuple[list[np.ndarray], int]:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, path)
        if magic != CE_MAGIC:
            raise FormatError(f"bad ce magic {magic!r} [{path}]")
        version, seq_len, seq_count = _read_struct(f, "<HIQ", path)
        if version != CE_VERSION:
            raise FormatError(f"unsupported ce version {version} [{path}]")
        rows = []
        for _ in range(seq_count):
            rows.append(np.frombuffer(_read_exact(f, 8 * seq_len, path), dtype="<f8").copy())
        if f.read(1):
            raise FormatError(f"trailing bytes after last ce row [{path}]")
    return rows, int(seq_len)
