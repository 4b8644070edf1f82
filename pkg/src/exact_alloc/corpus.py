"""Tokenized document corpora: loading, writing, synthesis, manifests.

Two interchangeable on-disk formats are supported: a line-delimited text
format (one JSON record per line with ``doc_id`` and ``tokens``) that keeps
fixtures human-auditable, and a packed binary format (magic ``EXTK``) for
scale.  A corpus is described by a manifest that records source hashes and
token totals so downstream stages can verify what they were fed.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .binio import HashingWriter, read_exact, read_struct, sha256_file
from .errors import FormatError, ManifestMismatchError, ValidationError

CORPUS_MAGIC = b"EXTK"
CORPUS_VERSION = 1
MAX_TOKEN_ID = 2**32 - 1


@dataclass
class Document:
    """A tokenized source document; the unit the packer consumes."""

    doc_id: str
    tokens: np.ndarray  # uint32, non-empty

    def __len__(self) -> int:
        return len(self.tokens)


def _as_token_array(tokens, doc_id: str, path: str | None = None, line: int | None = None) -> np.ndarray:
    arr = np.asarray(tokens)
    if arr.size == 0:
        raise FormatError(f"empty document {doc_id!r}", path=path, offset=line)
    if not np.issubdtype(arr.dtype, np.integer):
        raise FormatError(f"non-integer token in document {doc_id!r}", path=path, offset=line)
    if arr.min() < 0 or arr.max() > MAX_TOKEN_ID:
        raise FormatError(
            f"token id out of 32-bit range in document {doc_id!r}", path=path, offset=line
        )
    return arr.astype(np.uint32)


@dataclass
class SourceEntry:
    path: str
    sha256: str
    doc_count: int
    token_count: int


@dataclass
class CorpusManifest:
    """Reproducibility record colocated with a corpus."""

    vocab_size: int
    total_tokens: int
    doc_count: int
    length_histogram: dict[int, int]
    generator_seed: int | None = None
    split_sizes: dict[str, int] = field(default_factory=dict)
    sources: list[SourceEntry] = field(default_factory=list)

    def to_json(self) -> str:
        payload = {
            "format_version": 1,
            "vocab_size": self.vocab_size,
            "total_tokens": self.total_tokens,
            "doc_count": self.doc_count,
            "length_histogram": {str(k): v for k, v in sorted(self.length_histogram.items())},
            "generator_seed": self.generator_seed,
            "split_sizes": dict(sorted(self.split_sizes.items())),
            "sources": [
                {
                    "path": s.path,
                    "sha256": s.sha256,
                    "doc_count": s.doc_count,
                    "token_count": s.token_count,
                }
                for s in self.sources
            ],
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str, path: str | None = None) -> "CorpusManifest":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as e:
            raise FormatError(f"manifest is not valid JSON: {e}", path=path) from e
        try:
            return cls(
                vocab_size=int(payload["vocab_size"]),
                total_tokens=int(payload["total_tokens"]),
                doc_count=int(payload["doc_count"]),
                length_histogram={int(k): int(v) for k, v in payload["length_histogram"].items()},
                generator_seed=payload.get("generator_seed"),
                split_sizes={str(k): int(v) for k, v in payload.get("split_sizes", {}).items()},
                sources=[
                    SourceEntry(s["path"], s["sha256"], int(s["doc_count"]), int(s["token_count"]))
                    for s in payload.get("sources", [])
                ],
            )
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"manifest missing or malformed field: {e}", path=path) from e

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path: str) -> "CorpusManifest":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json(f.read(), path=path)


def length_histogram(lengths: Iterable[int]) -> dict[int, int]:
    """Histogram of document lengths over power-of-two bins keyed by bin lower bound."""
    hist: dict[int, int] = {}
    for n in lengths:
        lb = 1 << (int(n).bit_length() - 1)
        hist[lb] = hist.get(lb, 0) + 1
    return hist


def build_manifest(
    docs: Iterable[Document],
    vocab_size: int,
    generator_seed: int | None = None,
    split_sizes: dict[str, int] | None = None,
) -> CorpusManifest:
    lengths = []
    for doc in docs:
        lengths.append(len(doc))
    return CorpusManifest(
        vocab_size=vocab_size,
        total_tokens=int(sum(lengths)),
        doc_count=len(lengths),
        length_histogram=length_histogram(lengths),
        generator_seed=generator_seed,
        split_sizes=dict(split_sizes or {}),
    )


# ---------------------------------------------------------------------------
# reading / writing


def _is_binary_corpus(path: str) -> bool:
    with open(path, "rb") as f:
        return f.read(4) == CORPUS_MAGIC


def _iter_text_corpus(path: str, vocab_size: int | None) -> Iterator[Document]:
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"malformed record: {e}", path=path, offset=lineno) from e
            if not isinstance(rec, dict) or "doc_id" not in rec or "tokens" not in rec:
                raise FormatError(
                    "record must be an object with doc_id and tokens", path=path, offset=lineno
                )
            doc_id = str(rec["doc_id"])
            tokens = _as_token_array(rec["tokens"], doc_id, path=path, line=lineno)
            if vocab_size is not None and int(tokens.max()) >= vocab_size:
                raise FormatError(
                    f"token id {int(tokens.max())} >= vocab_size {vocab_size} "
                    f"in document {doc_id!r}",
                    path=path,
                    offset=lineno,
                )
            yield Document(doc_id, tokens)


def _iter_binary_corpus(path: str, vocab_size: int | None) -> Iterator[Document]:
    with open(path, "rb") as f:
        magic = read_exact(f, 4, path)
        if magic != CORPUS_MAGIC:
            raise FormatError(f"bad corpus magic {magic!r}", path=path)
        version, file_vocab, doc_count = read_struct(f, "<HIQ", path)
        if version != CORPUS_VERSION:
            raise FormatError(f"unsupported corpus version {version}", path=path)
        bound = vocab_size if vocab_size is not None else file_vocab
        for k in range(doc_count):
            (id_len,) = read_struct(f, "<H", path)
            doc_id = read_exact(f, id_len, path).decode("utf-8")
            (tok_count,) = read_struct(f, "<I", path)
            if tok_count == 0:
                raise FormatError(f"empty document {doc_id!r}", path=path, offset=k)
            raw = read_exact(f, 4 * tok_count, path)
            tokens = np.frombuffer(raw, dtype="<u4").astype(np.uint32)
            if bound is not None and int(tokens.max()) >= bound:
                raise FormatError(
                    f"token id {int(tokens.max())} >= vocab_size {bound} "
                    f"in document {doc_id!r}",
                    path=path,
                    offset=k,
                )
            yield Document(doc_id, tokens)
        if f.read(1):
            raise FormatError("trailing bytes after last document", path=path)


def load_documents(path: str, manifest: CorpusManifest | None = None) -> Iterator[Document]:
    """Stream documents from a corpus file, verifying against a manifest if given.

    Manifest verification covers the file hash (against the matching source
    entry) and, at end of stream, the per-source document and token counts.
    """
    vocab_size = manifest.vocab_size if manifest is not None else None
    source = None
    if manifest is not None:
        for s in manifest.sources:
            if s.path == path or path.endswith("/" + s.path) or s.path.endswith("/" + path):
                source = s
                break
        if source is None and manifest.sources:
            raise ManifestMismatchError(f"{path} is not listed in the manifest sources")
        if source is not None:
            actual = sha256_file(path)
            if actual != source.sha256:
                raise ManifestMismatchError(
                    f"hash mismatch for {path}: manifest {source.sha256}, file {actual}"
                )

    docs = 0
    tokens = 0
    it = _iter_binary_corpus(path, vocab_size) if _is_binary_corpus(path) else _iter_text_corpus(path, vocab_size)
    for doc in it:
        docs += 1
        tokens += len(doc)
        yield doc

    if source is not None:
        if docs != source.doc_count or tokens != source.token_count:
            raise ManifestMismatchError(
                f"{path}: manifest says {source.doc_count} docs / {source.token_count} tokens, "
                f"file has {docs} docs / {tokens} tokens"
            )
    elif manifest is not None:
        if docs != manifest.doc_count or tokens != manifest.total_tokens:
            raise ManifestMismatchError(
                f"{path}: manifest says {manifest.doc_count} docs / {manifest.total_tokens} "
                f"tokens, file has {docs} docs / {tokens} tokens"
            )


def write_documents(path: str, docs: Iterable[Document], fmt: str = "jsonl") -> SourceEntry:
    """Write a corpus file and return its source entry (path, hash, counts)."""
    if fmt == "jsonl":
        h = hashlib.sha256()
        docs_n = 0
        tok_n = 0
        with open(path, "wb") as f:
            for doc in docs:
                line = json.dumps(
                    {"doc_id": doc.doc_id, "tokens": [int(t) for t in doc.tokens]},
                    sort_keys=True,
                    separators=(",", ":"),
                ).encode("utf-8") + b"\n"
                f.write(line)
                h.update(line)
                docs_n += 1
                tok_n += len(doc)
        return SourceEntry(path, h.hexdigest(), docs_n, tok_n)
    if fmt == "binary":
        doc_list = list(docs)
        vocab = 0
        for d in doc_list:
            vocab = max(vocab, int(d.tokens.max()) + 1)
        with open(path, "wb") as raw:
            w = HashingWriter(raw)
            w.write(CORPUS_MAGIC)
            w.write(struct.pack("<HIQ", CORPUS_VERSION, vocab, len(doc_list)))
            tok_n = 0
            for d in doc_list:
                ident = d.doc_id.encode("utf-8")
                w.write(struct.pack("<H", len(ident)))
                w.write(ident)
                w.write(struct.pack("<I", len(d.tokens)))
                w.write(d.tokens.astype("<u4").tobytes())
                tok_n += len(d.tokens)
        return SourceEntry(path, w.hexdigest(), len(doc_list), tok_n)
    raise ValidationError(f"unknown corpus format {fmt!r} (expected jsonl or binary)")


# ---------------------------------------------------------------------------
# synthetic corpora


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a seeded synthetic long-tailed recall corpus.

    The vocabulary is partitioned into three disjoint alphabets: key tokens
    ``[0, K)``, filler tokens ``[K, K+F)`` and answer tokens ``[K+F, K+F+K)``.
    Each document opens with one key token; every later position is, with
    probability ``recall_density``, a recall target carrying the needle rule
    applied to the document's key, and filler otherwise.  Document lengths
    are drawn from a mixture of geometric distributions, which gives the
    short-dominated, long-tailed histogram long-context packing runs into.
    """

    doc_count: int
    seed: int
    key_alphabet: int = 8
    filler_alphabet: int = 32
    length_means: tuple[float, ...] = (64.0,)
    length_weights: tuple[float, ...] = (1.0,)
    recall_density: float = 0.05
    needle_rule: str = "answer"  # "answer": map key into the answer alphabet; "identity": repeat the key
    needle_offset: int = 0

    @property
    def vocab_size(self) -> int:
        return 2 * self.key_alphabet + self.filler_alphabet

    def validate(self) -> None:
        if self.doc_count < 1:
            raise ValidationError("doc_count must be >= 1")
        if self.key_alphabet < 1 or self.filler_alphabet < 1:
            raise ValidationError("alphabet sizes must be >= 1")
        if len(self.length_means) != len(self.length_weights) or not self.length_means:
            raise ValidationError("length_means and length_weights must be non-empty and equal length")
        if any(m < 1.0 for m in self.length_means):
            raise ValidationError("length means must be >= 1")
        if any(w <= 0 for w in self.length_weights):
            raise ValidationError("length weights must be positive")
        if not (0.0 < self.recall_density <= 1.0):
            raise ValidationError("recall_density must be in (0, 1]")
        if self.needle_rule not in ("answer", "identity"):
            raise ValidationError(f"unknown needle_rule {self.needle_rule!r}")

    def needle_target(self, key: int) -> int:
        if self.needle_rule == "identity":
            return key
        return self.key_alphabet + self.filler_alphabet + (key + self.needle_offset) % self.key_alphabet

    def mixture_mean(self) -> float:
        total = sum(self.length_weights)
        return sum(w * m for w, m in zip(self.length_weights, self.length_means)) / total


def _synth_document(spec: SynthSpec, index: int) -> Document:
    # Per-document generator derived from (seed, index): sharding across
    # workers reproduces the same stream after merge by index.
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(index,)))
    probs = np.asarray(spec.length_weights, dtype=np.float64)
    probs = probs / probs.sum()
    component = int(rng.choice(len(spec.length_means), p=probs))
    length = int(rng.geometric(1.0 / spec.length_means[component]))
    key = int(rng.integers(spec.key_alphabet))
    tokens = spec.key_alphabet + rng.integers(0, spec.filler_alphabet, size=length).astype(np.uint32)
    if length > 1:
        recall = rng.random(length) < spec.recall_density
        recall[0] = False
        tokens[recall] = spec.needle_target(key)
    tokens[0] = key
    return Document(f"synth-{index:08d}", tokens)


def generate_synthetic_corpus(spec: SynthSpec) -> tuple[list[Document], CorpusManifest]:
    """Deterministically generate a recall corpus and its manifest."""
    spec.validate()
    docs = [_synth_document(spec, i) for i in range(spec.doc_count)]
    manifest = build_manifest(docs, spec.vocab_size, generator_seed=spec.seed)
    return docs, manifest


def permuted(docs: list[Document], seed: int | None) -> list[Document]:
    """Seeded document-order permutation (order preserved when seed is None)."""
    if seed is None:
        return list(docs)
    order = np.random.default_rng(seed).permutation(len(docs))
    return [docs[i] for i in order]


def split_documents(docs: list[Document], heldout_fraction: float, seed: int) -> tuple[list[Document], list[Document]]:
    """Deterministic train/heldout split by seeded permutation."""
    if not (0.0 <= heldout_fraction < 1.0):
        raise ValidationError("heldout_fraction must be in [0, 1)")
    n_held = int(math.floor(len(docs) * heldout_fraction))
    order = np.random.default_rng(seed).permutation(len(docs))
    held_idx = set(int(i) for i in order[:n_held])
    train = [d for i, d in enumerate(docs) if i not in held_idx]
    held = [d for i, d in enumerate(docs) if i in held_idx]
    return train, held
