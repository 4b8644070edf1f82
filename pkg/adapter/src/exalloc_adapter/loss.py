"""Weighted objective in torch plus a cross-check against the toolkit CLI."""

import json
import math
import os
import subprocess
import sys
import tempfile

import torch

from .batch import check_pair
from .errors import AdapterError, ValidationError
from .formats import read_ce_file, read_pack, read_weight_file

NORMALIZATIONS = ("mask_sum", "weighted_mask_sum")
DEFAULT_TOLERANCE = 1e-5  # f32 weight storage dominates the gap


def weighted_loss(
    ce: torch.Tensor,
    loss_mask: torch.Tensor,
    weights: torch.Tensor,
    normalization: str = "mask_sum",
) -> torch.Tensor:
    """sum(mask * weight * ce) / D with D = sum(mask) or sum(mask * weight).

    Differentiable in ``ce``; computed in float64 so the comparison with the
    toolkit is limited by the stored f32 weights, not by this reduction.
    """
    if normalization not in NORMALIZATIONS:
        raise ValidationError(
            f"unknown normalization {normalization!r}; expected one of {NORMALIZATIONS}"
        )
    m = loss_mask.to(torch.float64)
    w = weights.to(torch.float64)
    denom = (m * w).sum() if normalization == "weighted_mask_sum" else m.sum()
    if denom.item() <= 0.0:
        raise ValidationError("no supervised tokens in batch")
    return (m * w * ce.to(torch.float64)).sum() / denom


def toolkit_command() -> list[str]:
    """How to invoke the toolkit CLI; override with EXACT_ALLOC_CLI."""
    override = os.environ.get("EXACT_ALLOC_CLI")
    if override:
        return override.split()
    return [sys.executable, "-m", "exact_alloc"]


def _toolkit_loss_eval(pack: str, weights: str, ce: str, normalization: str, out_dir: str) -> dict:
    cmd = toolkit_command() + [
        "loss-eval",
        "--out", out_dir,
        "--pack", pack,
        "--weights", weights,
        "--ce", ce,
        "--normalization", normalization,
    ]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise AdapterError(f"toolkit loss-eval failed: {proc.stderr.strip()}")
    with open(os.path.join(out_dir, "loss.json")) as fh:
        return json.load(fh)


def cross_check_loss(
    pack_path: str,
    weights_path: str,
    ce_path: str,
    normalization: str = "mask_sum",
    tolerance: float = DEFAULT_TOLERANCE,
) -> dict:
    """Compare the adapter's weighted loss with the toolkit's on one CE dump.

    The adapter side only touches the decoded files; the toolkit side runs
    the installed CLI on the very same files, so agreement certifies the
    formats, not shared code.
    """
    pack = read_pack(pack_path)
    wf = read_weight_file(weights_path)
    check_pair(pack, wf)
    ce_rows, ce_len = read_ce_file(ce_path)
    if ce_len != pack.seq_len or len(ce_rows) != len(pack.records):
        raise ValidationError("ce dump does not align with the packed stream")

    masks = torch.stack([torch.from_numpy(r.mask.astype(bool)) for r in pack.records])
    weights = torch.stack([torch.from_numpy(row) for row in wf.rows])
    ce = torch.stack([torch.from_numpy(row) for row in ce_rows])
    adapter_value = float(weighted_loss(ce, masks, weights, normalization).item())

    with tempfile.TemporaryDirectory() as tmp:
        report = _toolkit_loss_eval(pack_path, weights_path, ce_path, normalization, tmp)
    toolkit_value = float(report["objective"])
    diff = abs(adapter_value - toolkit_value)
    return {
        "normalization": normalization,
        "adapter_loss": adapter_value,
        "toolkit_loss": toolkit_value,
        "abs_diff": diff,
        "tolerance": tolerance,
        "within_tolerance": bool(diff <= tolerance),
        "weight_kind": wf.kind,
        "sequences": len(pack.records),
        "supervised_tokens": int(sum(int(r.mask.sum()) for r in pack.records)),
        "pack_fingerprint": pack.fingerprint,
    }


def render_report(result: dict) -> str:
    status = "AGREE" if result["within_tolerance"] else "DISAGREE"
    lines = [
        "weighted-loss agreement report",
        "==============================",
        f"pack fingerprint : {result['pack_fingerprint']}",
        f"weight kind      : {result['weight_kind']}",
        f"sequences        : {result['sequences']}"
        f" ({result['supervised_tokens']} supervised tokens)",
        f"normalization    : {result['normalization']}",
        f"adapter loss     : {result['adapter_loss']:.12f}",
        f"toolkit loss     : {result['toolkit_loss']:.12f}",
        f"abs difference   : {result['abs_diff']:.3e} (tolerance {result['tolerance']:.0e})",
        f"verdict          : {status}",
    ]
    assert math.isfinite(result["abs_diff"])
    return "\n".join(lines)
