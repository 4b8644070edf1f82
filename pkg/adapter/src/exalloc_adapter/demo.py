"""Drop-in demo: train a tiny attention model on exported pack+weight files.

The point is plumbing, not modeling quality: the packed tokens, the
block-diagonal visibility mask, and the per-token weights all flow through
a standard autodiff loop unchanged.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .batch import AdapterBatch, batch_from_records, check_pair
from .errors import ValidationError
from .formats import read_pack, read_weight_file
from .loss import weighted_loss


class TinyAttentionLM(torch.nn.Module):
    """Embedding -> one masked self-attention mix -> tied-width output head."""

    def __init__(self, vocab_size: int, dim: int = 32):
        super().__init__()
        self.embed = torch.nn.Embedding(vocab_size, dim)
        self.qkv = torch.nn.Linear(dim, 3 * dim)
        self.head = torch.nn.Linear(dim, vocab_size)

    def forward(self, batch: AdapterBatch) -> torch.Tensor:
        x = self.embed(batch.tokens)  # (B, L, D)
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        # next-token setup: position i may attend to j <= i in its own
        # segment; the first position of a segment sees only itself
        mixed = F.scaled_dot_product_attention(
            q.unsqueeze(1), k.unsqueeze(1), v.unsqueeze(1),
            attn_mask=batch.visibility.unsqueeze(1),
        ).squeeze(1)
        return self.head(mixed)


def per_position_ce(logits: torch.Tensor, batch: AdapterBatch) -> torch.Tensor:
    """Cross entropy of predicting token i from the prefix ending at i - 1.

    Position 0 of each segment has no prefix; it is graded against the
    model's segment-start output, which keeps shapes simple and is masked
    out of nothing (exactly like the toolkit, every position gets a CE and
    the loss mask decides what counts).
    """
    vocab = logits.shape[-1]
    prev = torch.roll(logits, shifts=1, dims=1)
    # a segment's first position predicts from its own (self-only) mix
    fresh = batch.segment_ids != torch.roll(batch.segment_ids, shifts=1, dims=1)
    fresh[:, 0] = True
    prev = torch.where(fresh.unsqueeze(-1), logits, prev)
    targets = batch.tokens.clamp(max=vocab - 1)
    ce = F.cross_entropy(
        prev.reshape(-1, vocab), targets.reshape(-1), reduction="none"
    )
    return ce.reshape(batch.tokens.shape)


@dataclass
class DemoResult:
    losses: list[float]
    grad_norm_first_step: float


def run_demo(
    pack_path: str,
    weights_path: str,
    steps: int = 5,
    batch_size: int = 2,
    lr: float = 0.1,
    dim: int = 32,
    seed: int = 0,
    normalization: str = "mask_sum",
) -> DemoResult:
    pack = read_pack(pack_path)
    wf = read_weight_file(weights_path)
    check_pair(pack, wf)
    if not pack.records:
        raise ValidationError("packed stream holds no sequences")
    vocab = int(max(int(r.tokens.max()) for r in pack.records)) + 1

    torch.manual_seed(seed)
    model = TinyAttentionLM(vocab, dim)
    opt = torch.optim.SGD(model.parameters(), lr=lr)
    n = len(pack.records)
    losses: list[float] = []
    grad_norm = 0.0
    for step in range(steps):
        lo = (step * batch_size) % n
        indices = [(lo + k) % n for k in range(min(batch_size, n))]
        batch = batch_from_records(pack, wf, indices)
        logits = model(batch)
        ce = per_position_ce(logits, batch)
        loss = weighted_loss(ce, batch.loss_mask, batch.weights, normalization)
        opt.zero_grad()
        loss.backward()
        if step == 0:
            grad_norm = float(
                torch.sqrt(
                    sum((p.grad**2).sum() for p in model.parameters() if p.grad is not None)
                ).item()
            )
        opt.step()
        losses.append(float(loss.item()))
    return DemoResult(losses=losses, grad_norm_first_step=grad_norm)
