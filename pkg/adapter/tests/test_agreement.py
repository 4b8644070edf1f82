"""Acceptance: adapter weighted loss agrees with the toolkit within 1e-5."""

import json
import math
import struct
import subprocess
import sys

import numpy as np
import pytest
import torch

from exalloc_adapter import ValidationError, cross_check_loss, render_report, weighted_loss


@pytest.mark.parametrize("weights_key,ce_key", [
    ("weights_identity", "ce_untrained"),
    ("weights_exact", "ce_untrained"),
    ("weights_exact", "ce_trained"),
])
@pytest.mark.parametrize("normalization", ["mask_sum", "weighted_mask_sum"])
def test_loss_agreement_within_tolerance(artifacts, weights_key, ce_key, normalization):
    result = cross_check_loss(
        str(artifacts["pack"]),
        str(artifacts[weights_key]),
        str(artifacts[ce_key]),
        normalization,
    )
    assert result["within_tolerance"], result
    assert result["abs_diff"] <= 1e-5
    assert "AGREE" in render_report(result)


def test_identity_weights_reduce_to_masked_mean(artifacts):
    result = cross_check_loss(
        str(artifacts["pack"]),
        str(artifacts["weights_identity"]),
        str(artifacts["ce_untrained"]),
        "mask_sum",
    )
    # untrained toolkit model is uniform over the vocabulary
    assert result["adapter_loss"] == pytest.approx(
        math.log(artifacts["vocab_size"]), abs=1e-12
    )


def test_two_token_hand_fixture_agrees(two_segment):
    result = cross_check_loss(
        str(two_segment["pack"]), str(two_segment["weights"]), str(two_segment["ce"]),
    )
    assert result["within_tolerance"]
    assert result["adapter_loss"] == pytest.approx(math.log(32), abs=1e-12)


def test_report_command_emits_agreement(artifacts, tmp_path):
    proc = subprocess.run(
        [
            sys.executable, "-m", "exalloc_adapter", "report",
            "--pack", str(artifacts["pack"]),
            "--weights", str(artifacts["weights_exact"]),
            "--ce", str(artifacts["ce_trained"]),
            "--out", str(tmp_path),
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "verdict          : AGREE" in proc.stdout
    saved = json.loads((tmp_path / "agreement.json").read_text())
    assert saved["within_tolerance"] is True


def _write_all_masked_fixture(root):
    """Hand-craft a pack whose single sequence is entirely padding."""
    seq_len, pad = 8, 31
    pack = root / "allpad.expk"
    with open(pack, "wb") as fh:
        fh.write(b"EXPK" + struct.pack("<HIQI", 1, seq_len, 1, pad))
        fh.write(np.full(seq_len, pad, dtype="<u4").tobytes())
        fh.write(struct.pack("<H", 1))
        fh.write(np.array([0], dtype="<u4").tobytes())
        fh.write(b"\x00")  # every mask bit clear
        fh.write(np.arange(seq_len, dtype="<u4").tobytes())
    ce = root / "allpad.exce"
    with open(ce, "wb") as fh:
        fh.write(b"EXCE" + struct.pack("<HIQ", 1, seq_len, 1))
        fh.write(np.zeros(seq_len, dtype="<f8").tobytes())
    return pack, ce


def test_all_masked_batch_raises_on_both_sides(tmp_path):
    pack, ce = _write_all_masked_fixture(tmp_path)
    # the toolkit accepts the file and derives identity weights for it
    proc = subprocess.run(
        [sys.executable, "-m", "exact_alloc", "weights", "--out", str(tmp_path / "w"),
         "--pack", str(pack), "--kind", "identity", "--tau", "0"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    weights = tmp_path / "w" / "weights.exwt"

    with pytest.raises(ValidationError, match="no supervised tokens"):
        weighted_loss(
            torch.zeros(1, 8), torch.zeros(1, 8, dtype=torch.bool), torch.ones(1, 8)
        )
    with pytest.raises(ValidationError, match="no supervised tokens"):
        cross_check_loss(str(pack), str(weights), str(ce))

    proc = subprocess.run(
        [sys.executable, "-m", "exact_alloc", "loss-eval", "--out", str(tmp_path / "l"),
         "--pack", str(pack), "--weights", str(weights), "--ce", str(ce)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 1
    assert json.loads(proc.stderr)["error"] == "validation"
