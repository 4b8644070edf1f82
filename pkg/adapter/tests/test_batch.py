"""Batch assembly: visibility blocks, weight alignment, guard rails."""

import torch
import pytest

from exalloc_adapter import (
    FingerprintMismatchError,
    ValidationError,
    load_batch,
    read_pack,
)
from exalloc_adapter.demo import run_demo


def test_two_segment_visibility_blocks(two_segment):
    batch = load_batch(str(two_segment["pack"]), str(two_segment["weights"]), 0)
    assert batch.tokens.shape == (1, 8)
    assert batch.tokens[0].tolist() == [1, 2, 3, 4, 5, 11, 12, 13]
    assert batch.segment_ids[0].tolist() == [0, 0, 0, 0, 0, 1, 1, 1]
    assert batch.loss_mask[0].all()

    vis = batch.visibility[0]
    # block-diagonal causal visibility: lower triangles of sizes 5 and 3
    assert torch.equal(vis[:5, :5], torch.tril(torch.ones(5, 5, dtype=torch.bool)))
    assert torch.equal(vis[5:, 5:], torch.tril(torch.ones(3, 3, dtype=torch.bool)))
    assert not vis[5:, :5].any()  # the second document never sees the first
    assert not vis[:5, 5:].any()
    assert torch.equal(batch.weights[0], torch.ones(8))


def test_batch_slicing_and_bounds(artifacts):
    n = artifacts["pack_info"]["sequences"]
    pack, weights = str(artifacts["pack"]), str(artifacts["weights_exact"])
    b0 = load_batch(pack, weights, 0, batch_size=2)
    b1 = load_batch(pack, weights, 1, batch_size=2)
    assert b0.tokens.shape == b1.tokens.shape == (2, 64)
    assert not torch.equal(b0.tokens, b1.tokens)
    whole = read_pack(pack)
    assert torch.equal(
        b1.tokens[0], torch.from_numpy(whole.records[2].tokens.astype("int64"))
    )
    with pytest.raises(ValidationError, match="outside"):
        load_batch(pack, weights, n, batch_size=1)
    with pytest.raises(ValidationError, match="batch_size"):
        load_batch(pack, weights, 0, batch_size=0)


def test_padding_is_invisible_to_the_loss_mask(artifacts):
    pack = read_pack(str(artifacts["pack"]))
    idx = next(
        (i for i, r in enumerate(pack.records) if int(r.mask.sum()) < pack.seq_len), None
    )
    if idx is None:
        pytest.skip("no padded sequence in this stream")
    batch = load_batch(str(artifacts["pack"]), str(artifacts["weights_exact"]), idx)
    fill = int(pack.records[idx].mask.sum())
    assert not batch.loss_mask[0, fill:].any()
    assert batch.loss_mask[0, :fill].all()


def test_mismatched_weight_file_is_rejected(artifacts, two_segment):
    with pytest.raises(FingerprintMismatchError):
        load_batch(str(artifacts["pack"]), str(two_segment["weights"]), 0)


def test_tampered_fingerprint_is_rejected(artifacts, tmp_path):
    data = bytearray(artifacts["weights_exact"].read_bytes())
    data[60] ^= 0xFF  # past the 55-byte header, inside the 32-byte fingerprint
    bad = tmp_path / "bad.exwt"
    bad.write_bytes(bytes(data))
    with pytest.raises(FingerprintMismatchError):
        load_batch(str(artifacts["pack"]), str(bad), 0)


def test_demo_training_step_runs_and_backprops(artifacts):
    result = run_demo(
        str(artifacts["pack"]), str(artifacts["weights_exact"]),
        steps=4, batch_size=3, lr=0.2, dim=16, seed=0,
    )
    assert len(result.losses) == 4
    assert all(torch.isfinite(torch.tensor(result.losses)).tolist())
    assert result.grad_norm_first_step > 0.0
    assert result.losses[-1] < result.losses[0]  # a few steps go downhill
