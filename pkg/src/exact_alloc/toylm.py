"""A deliberately small causal LM for measuring allocation effects.

Position i is predicted from two segment-local views: the embedding of the
immediately preceding token and the mean embedding of all tokens from the
segment start up to i - 1.  Both views are zero when the effective context
ell_i is zero, so with zero-initialized output weights every supervised
position starts at cross entropy log(vocab).  The output layer is linear
(no hidden nonlinearity) and gradients are computed analytically; the only
model-specific kernels are the pooled forward (prefix means) and its
backward (suffix-summed shares), which share the packed-stream kernel
backend with the statistics code.

Padding positions may hold out-of-vocab token ids; they are mapped to row 0
for lookups, their CE is pinned to 0, and their gradient factor is 0, so
they never influence the loss or the update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import kernels, objective
from .errors import DivergenceError, ValidationError
from .packer import PackedSequence, PackedStream
from .weights import WeightSet


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    dim: int = 16
    seed: int = 0

    def validate(self) -> None:
        if self.vocab_size < 2:
            raise ValidationError("vocab_size must be >= 2")
        if self.dim < 1:
            raise ValidationError("dim must be >= 1")


@dataclass
class ToyLM:
    emb: np.ndarray  # (V, d) float64
    out_w: np.ndarray  # (2d, V) float64
    out_b: np.ndarray  # (V,) float64

    @property
    def vocab_size(self) -> int:
        return self.emb.shape[0]

    @property
    def dim(self) -> int:
        return self.emb.shape[1]


def init_model(config: ModelConfig) -> ToyLM:
    """Uniform embeddings scaled by 1/sqrt(d); zero output layer.

    The zero output layer pins the step-0 per-token CE to exactly
    log(vocab_size) at every supervised position.
    """
    config.validate()
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    emb = rng.uniform(-1.0, 1.0, size=(config.vocab_size, config.dim))
    emb /= math.sqrt(config.dim)
    out_w = np.zeros((2 * config.dim, config.vocab_size), dtype=np.float64)
    out_b = np.zeros(config.vocab_size, dtype=np.float64)
    return ToyLM(emb, out_w, out_b)


@dataclass
class Grads:
    emb: np.ndarray
    out_w: np.ndarray
    out_b: np.ndarray

    @classmethod
    def zeros_like(cls, model: ToyLM) -> "Grads":
        return cls(
            np.zeros_like(model.emb),
            np.zeros_like(model.out_w),
            np.zeros_like(model.out_b),
        )

    def add_(self, other: "Grads") -> None:
        self.emb += other.emb
        self.out_w += other.out_w
        self.out_b += other.out_b


@dataclass
class SequenceCache:
    tok_safe: np.ndarray  # int64 (L,), out-of-vocab ids mapped to 0
    features: np.ndarray  # (L, 2d)
    probs: np.ndarray  # (L, V)
    ce: np.ndarray  # (L,) float64, 0 at masked positions


def forward(model: ToyLM, seq: PackedSequence) -> SequenceCache:
    V, d = model.emb.shape
    n = len(seq.tokens)
    tokens = seq.tokens.astype(np.int64)
    tok_safe = np.where(tokens < V, tokens, 0)
    ell = seq.effective_context
    rows = model.emb[tok_safe]

    prev = np.zeros_like(rows)
    prev[1:] = rows[:-1]
    prev[ell == 0] = 0.0
    pooled = kernels.segment_prefix_mean(rows, seq.segment_starts)
    features = np.concatenate([prev, pooled], axis=1)

    logits = features @ model.out_w + model.out_b
    zmax = logits.max(axis=1, keepdims=True)
    z = logits - zmax
    expz = np.exp(z)
    total = expz.sum(axis=1, keepdims=True)
    logp = z - np.log(total)
    ce = -logp[np.arange(n), tok_safe]
    ce = np.where(seq.mask == 1, ce, 0.0)
    return SequenceCache(tok_safe, features, expz / total, ce)


def backward(
    model: ToyLM, seq: PackedSequence, cache: SequenceCache, scale: np.ndarray
) -> Grads:
    """Gradients of sum_i scale_i * ce_i for one sequence.

    The pooled path routes the gradient of each downstream position back to
    every earlier row of its segment with factor 1/ell; that suffix sum is a
    kernel so the compiled and reference backends agree bitwise.
    """
    d = model.dim
    n = len(seq.tokens)
    ell = seq.effective_context

    dlogits = cache.probs * scale[:, None]
    dlogits[np.arange(n), cache.tok_safe] -= scale
    g = Grads.zeros_like(model)
    g.out_w = cache.features.T @ dlogits
    g.out_b = dlogits.sum(axis=0)

    dfeat = dlogits @ model.out_w.T
    dprev = dfeat[:, :d].copy()
    dpool = dfeat[:, d:]
    dprev[ell == 0] = 0.0
    np.add.at(g.emb, cache.tok_safe[:-1], dprev[1:])
    shares = kernels.segment_suffix_scatter(
        dpool, ell.astype(np.float64), seq.segment_starts
    )
    np.add.at(g.emb, cache.tok_safe, shares)
    return g


def loss_and_grads(
    model: ToyLM,
    seqs: Sequence[PackedSequence],
    weights: Sequence[np.ndarray],
    normalization: str = "mask_sum",
) -> tuple[float, Grads]:
    """Batch objective and its analytic gradient."""
    masks = [s.mask for s in seqs]
    caches = [forward(model, s) for s in seqs]
    ces = [c.ce for c in caches]
    loss = objective.weighted_ce(masks, weights, ces, normalization)
    scales = objective.gradient_scale(masks, weights, normalization)
    total = Grads.zeros_like(model)
    for seq, cache, scale in zip(seqs, caches, scales):
        total.add_(backward(model, seq, cache, scale))
    return loss, total


def evaluate(model: ToyLM, stream: PackedStream) -> list[np.ndarray]:
    """Per-token CE rows for every sequence (0 at masked positions)."""
    return [forward(model, seq).ce for seq in stream.sequences]


@dataclass(frozen=True)
class TrainConfig:
    steps: int
    batch_size: int
    lr: float
    normalization: str = "mask_sum"
    shuffle_seed: int = 0

    def validate(self, n_seqs: int) -> None:
        if self.steps < 0:
            raise ValidationError("steps must be >= 0")
        if not (1 <= self.batch_size <= n_seqs):
            raise ValidationError(
                f"batch_size must be in [1, {n_seqs}], got {self.batch_size}"
            )
        if not (self.lr > 0 and math.isfinite(self.lr)):
            raise ValidationError(f"lr must be finite and > 0, got {self.lr}")
        if self.normalization not in objective.NORMALIZATIONS:
            raise ValidationError(f"unknown normalization {self.normalization!r}")


def _batches(n_seqs: int, batch_size: int, seed: int) -> Iterator[np.ndarray]:
    # Fresh permutation per epoch; a ragged final batch is carried over by
    # simply not emitting it, which keeps every step the same size.
    epoch = 0
    while True:
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(epoch,)))
        perm = rng.permutation(n_seqs)
        for i in range(0, n_seqs - batch_size + 1, batch_size):
            yield perm[i : i + batch_size]
        epoch += 1


def train(
    model: ToyLM, stream: PackedStream, ws: WeightSet, config: TrainConfig
) -> list[dict]:
    """Plain SGD on the weighted objective; returns per-step loss history."""
    config.validate(len(stream.sequences))
    if len(ws.per_seq) != len(stream.sequences):
        raise ValidationError("weight set row count disagrees with packed stream")
    batches = _batches(len(stream.sequences), config.batch_size, config.shuffle_seed)
    history = []
    for step in range(config.steps):
        idx = next(batches)
        seqs = [stream.sequences[i] for i in idx]
        weights = [ws.per_seq[i].astype(np.float64) for i in idx]
        loss, grads = loss_and_grads(model, seqs, weights, config.normalization)
        if not math.isfinite(loss):
            raise DivergenceError(step)
        model.emb -= config.lr * grads.emb
        model.out_w -= config.lr * grads.out_w
        model.out_b -= config.lr * grads.out_b
        history.append({"step": step, "loss": float(loss)})
    return history
