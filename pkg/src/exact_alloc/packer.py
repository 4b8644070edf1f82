"""Greedy sequence packing with document-boundary bookkeeping.

Documents are laid out back to back into fixed-length sequences; a document
that does not fit the remaining space is split and its continuation opens a
new segment at offset 0 of the next sequence.  Each position carries the
distance to its segment start (its effective left context), which resets at
every segment boundary -- carried-over context is not counted.  All non-pad
positions are supervised.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from . import kernels
from .binio import HashingReader, HashingWriter, read_exact, read_struct
from .corpus import Document, permuted
from .errors import FormatError, ValidationError

PACK_MAGIC = b"EXPK"
PACK_VERSION = 1
PAD_UNSET = 0xFFFFFFFF


@dataclass(frozen=True)
class PackPolicy:
    """How documents are packed into fixed-length sequences."""

    seq_len: int
    permutation_seed: int | None = None
    drop_final_partial: bool = True
    pad_id: int | None = None

    def validate(self) -> None:
        if self.seq_len < 2:
            raise ValidationError("seq_len must be >= 2")
        if self.pad_id is not None and not (0 <= self.pad_id <= PAD_UNSET):
            raise ValidationError("pad_id must fit in 32 bits")


@dataclass
class PackedSequence:
    """One fixed-length training sequence with segment metadata.

    ``effective_context[i] == i - s(i)`` where s(i) is the greatest segment
    start at or before i; it increases by 1 inside a segment and resets to 0
    at every segment start.  ``doc_refs`` is per-segment provenance
    (doc_id, chunk index); it is None for sequences read back from disk,
    which do not store it.
    """

    tokens: np.ndarray  # uint32 (L,)
    segment_starts: np.ndarray  # int64, sorted, first element 0
    mask: np.ndarray  # uint8 (L,), 1 = supervised
    effective_context: np.ndarray  # int64 (L,)
    doc_refs: tuple[tuple[str, int], ...] | None = None

    def __len__(self) -> int:
        return len(self.tokens)

    def validate(self) -> None:
        n = len(self.tokens)
        starts = self.segment_starts
        if len(starts) == 0 or starts[0] != 0:
            raise FormatError("segment_starts must begin at 0")
        if np.any(np.diff(starts) <= 0) or starts[-1] >= n:
            raise FormatError("segment_starts must be strictly increasing and < seq_len")
        expect = kernels.effective_context(starts, n)
        if not np.array_equal(self.effective_context, expect):
            raise FormatError("stored effective-context array violates i - s(i)")


def resolved_pad_id(policy: PackPolicy, vocab_size: int | None) -> int | None:
    if policy.pad_id is not None:
        return policy.pad_id
    if vocab_size is not None:
        return vocab_size
    return None


def pack_stream(
    docs: Iterable[Document], policy: PackPolicy, vocab_size: int | None = None
) -> Iterator[PackedSequence]:
    """Pack documents greedily in (permuted) order into L-token sequences.

    Lossless only with drop_final_partial=False; with True, whatever sits in
    the unfinished final sequence is discarded.
    """
    policy.validate()
    L = policy.seq_len
    pad = resolved_pad_id(policy, vocab_size)

    ordered: Iterable[Document] = docs
    if policy.permutation_seed is not None:
        ordered = permuted(list(docs), policy.permutation_seed)

    cur = np.zeros(L, dtype=np.uint32)
    fill = 0
    starts: list[int] = []
    refs: list[tuple[str, int]] = []

    def emit(filled: int) -> PackedSequence:
        tokens = cur.copy()
        mask = np.zeros(L, dtype=np.uint8)
        mask[:filled] = 1
        if filled < L:
            tokens[filled:] = pad
        start_arr = np.asarray(starts, dtype=np.int64)
        return PackedSequence(
            tokens=tokens,
            segment_starts=start_arr,
            mask=mask,
            effective_context=kernels.effective_context(start_arr, L),
            doc_refs=tuple(refs),
        )

    for doc in ordered:
        if len(doc.tokens) == 0:
            raise ValidationError(f"empty document {doc.doc_id!r}")
        if pad is not None and bool(np.any(doc.tokens == pad)):
            raise ValidationError(
                f"document {doc.doc_id!r} contains the reserved pad id {pad}"
            )
        pos = 0
        chunk = 0
        n = len(doc.tokens)
        while pos < n:
            take = min(L - fill, n - pos)
            starts.append(fill)
            refs.append((doc.doc_id, chunk))
            cur[fill : fill + take] = doc.tokens[pos : pos + take]
            fill += take
            pos += take
            chunk += 1
            if fill == L:
                yield emit(L)
                fill = 0
                starts = []
                refs = []

    if fill > 0 and not policy.drop_final_partial:
        if pad is None:
            raise ValidationError(
                "padding required for the final partial sequence but no pad id is known; "
                "set PackPolicy.pad_id or pass vocab_size"
            )
        yield emit(fill)


@dataclass
class PackedStream:
    """A materialized packed stream plus the header fields the formats need."""

    seq_len: int
    pad_id: int
    sequences: list[PackedSequence]

    def fingerprint(self) -> str:
        """sha256 over the canonical EXPK serialization of this stream."""
        h = hashlib.sha256()
        h.update(_header_bytes(self.seq_len, len(self.sequences), self.pad_id))
        for seq in self.sequences:
            h.update(_record_bytes(seq, self.seq_len))
        return h.hexdigest()

    def supervised_tokens(self) -> int:
        return int(sum(int(s.mask.sum()) for s in self.sequences))


def pack_documents(
    docs: Iterable[Document], policy: PackPolicy, vocab_size: int | None = None
) -> PackedStream:
    pad = resolved_pad_id(policy, vocab_size)
    seqs = list(pack_stream(docs, policy, vocab_size))
    return PackedStream(policy.seq_len, pad if pad is not None else PAD_UNSET, seqs)


def effective_context_oracle(seq: PackedSequence, i: int) -> int:
    """O(L) reference: scan backward from i to the nearest segment start."""
    if not (0 <= i < len(seq.tokens)):
        raise ValidationError(f"position {i} outside sequence of length {len(seq.tokens)}")
    starts = set(int(s) for s in seq.segment_starts)
    n = 0
    while i not in starts:
        i -= 1
        n += 1
    return n


# ---------------------------------------------------------------------------
# EXPK binary format


def _header_bytes(seq_len: int, seq_count: int, pad_id: int) -> bytes:
    return PACK_MAGIC + struct.pack("<HIQI", PACK_VERSION, seq_len, seq_count, pad_id)


def _record_bytes(seq: PackedSequence, seq_len: int) -> bytes:
    if len(seq.tokens) != seq_len:
        raise FormatError(f"sequence length {len(seq.tokens)} != stream seq_len {seq_len}")
    n_seg = len(seq.segment_starts)
    if n_seg == 0 or n_seg > 0xFFFF:
        raise FormatError(f"segment count {n_seg} outside [1, 65535]")
    parts = [
        seq.tokens.astype("<u4").tobytes(),
        struct.pack("<H", n_seg),
        seq.segment_starts.astype("<u4").tobytes(),
        np.packbits(seq.mask.astype(np.uint8), bitorder="little").tobytes(),
        seq.effective_context.astype("<u4").tobytes(),
    ]
    return b"".join(parts)


def write_packed(path: str, stream: PackedStream) -> str:
    """Write an EXPK file; returns the stream fingerprint."""
    with open(path, "wb") as raw:
        w = HashingWriter(raw)
        w.write(_header_bytes(stream.seq_len, len(stream.sequences), stream.pad_id))
        for seq in stream.sequences:
            w.write(_record_bytes(seq, stream.seq_len))
        return w.hexdigest()


def _read_header(f, path: str) -> tuple[int, int, int]:
    magic = read_exact(f, 4, path)
    if magic != PACK_MAGIC:
        raise FormatError(f"bad pack magic {magic!r}", path=path)
    version, seq_len, seq_count, pad_id = read_struct(f, "<HIQI", path)
    if version != PACK_VERSION:
        raise FormatError(f"unsupported pack version {version}", path=path)
    return seq_len, seq_count, pad_id


def _read_record(f, seq_len: int, path: str) -> PackedSequence:
    tokens = np.frombuffer(read_exact(f, 4 * seq_len, path), dtype="<u4").astype(np.uint32)
    (n_seg,) = read_struct(f, "<H", path)
    if n_seg == 0:
        raise FormatError("sequence with zero segments", path=path)
    starts = np.frombuffer(read_exact(f, 4 * n_seg, path), dtype="<u4").astype(np.int64)
    mask_bytes = read_exact(f, (seq_len + 7) // 8, path)
    mask = np.unpackbits(np.frombuffer(mask_bytes, dtype=np.uint8), bitorder="little")[:seq_len]
    ectx = np.frombuffer(read_exact(f, 4 * seq_len, path), dtype="<u4").astype(np.int64)
    seq = PackedSequence(
        tokens=tokens,
        segment_starts=starts,
        mask=mask.astype(np.uint8),
        effective_context=ectx,
        doc_refs=None,
    )
    seq.validate()  # redundancy contract: stored effective context must equal i - s(i)
    return seq


def read_packed(path: str) -> tuple[PackedStream, str]:
    """Load an EXPK file; returns (stream, fingerprint of the file bytes)."""
    with open(path, "rb") as raw:
        f = HashingReader(raw)
        seq_len, seq_count, pad_id = _read_header(f, path)
        seqs = [_read_record(f, seq_len, path) for _ in range(seq_count)]
        if f.read(1):
            raise FormatError("trailing bytes after last sequence", path=path)
        return PackedStream(seq_len, pad_id, seqs), f.hexdigest()


def iter_packed(path: str) -> Iterator[PackedSequence]:
    """Stream sequences from an EXPK file without materializing the list."""
    with open(path, "rb") as f:
        seq_len, seq_count, _ = _read_header(f, path)
        for _ in range(seq_count):
            yield _read_record(f, seq_len, path)
