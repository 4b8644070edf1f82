"""Evidence-sensitivity analysis of externally produced probe dumps.

Each probe record carries a gold-answer margin measured twice: once with the
original context and once with the evidence replaced by a same-type
distractor.  The gap G = margin_original - margin_counterfactual is the
context-induced part of the margin; fields bin it over (context length,
evidence distance) cells, delta fields compare two arms cell-wise, and a
paired bootstrap puts confidence intervals on the arm difference using the
same cell aggregation as the point estimate.

This module only analyzes numeric dumps; producing them (prompting, model
inference, distractor construction) happens elsewhere.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import FormatError, ValidationError

MARGIN_MODES = ("direct", "competitor-max")


@dataclass(frozen=True)
class ProbeRecord:
    """One paired observation from a probe run."""

    prompt_id: str
    context_length: int
    evidence_distance: int
    margin_original: float
    margin_counterfactual: float
    arm: str
    view: str | None = None
    correct: bool | None = None

    def validate(self) -> None:
        if self.evidence_distance > self.context_length:
            raise ValidationError(
                f"record {self.prompt_id!r}: evidence_distance "
                f"{self.evidence_distance} exceeds context_length {self.context_length}"
            )
        if self.evidence_distance < 0 or self.context_length < 0:
            raise ValidationError(f"record {self.prompt_id!r}: negative geometry")
        if not (math.isfinite(self.margin_original) and math.isfinite(self.margin_counterfactual)):
            raise ValidationError(f"record {self.prompt_id!r}: non-finite margin")


def compute_g(record: ProbeRecord) -> float:
    """Context-induced answer margin: original minus counterfactual."""
    return record.margin_original - record.margin_counterfactual


def margin_from_logprobs(gold: float, competitors: Sequence[float]) -> float:
    """Gold-answer margin over the strongest competitor candidate."""
    if len(competitors) == 0:
        raise ValidationError("competitor candidate list is empty")
    return float(gold) - max(float(c) for c in competitors)


def _record_from_json(obj: dict, margin_mode: str) -> ProbeRecord:
    if margin_mode == "direct":
        orig = float(obj["margin_original"])
        counter = float(obj["margin_counterfactual"])
    else:
        lo = obj["logprobs_original"]
        lc = obj["logprobs_counterfactual"]
        orig = margin_from_logprobs(lo["gold"], lo["competitors"])
        counter = margin_from_logprobs(lc["gold"], lc["competitors"])
    rec = ProbeRecord(
        prompt_id=str(obj["prompt_id"]),
        context_length=int(obj["context_length"]),
        evidence_distance=int(obj["evidence_distance"]),
        margin_original=orig,
        margin_counterfactual=counter,
        arm=str(obj["arm"]),
        view=obj.get("view"),
        correct=None if obj.get("correct") is None else bool(obj["correct"]),
    )
    rec.validate()
    return rec


def read_probe_dump(path: str, margin_mode: str = "direct") -> list[ProbeRecord]:
    """Load a line-delimited probe dump, rejecting malformed records early."""
    if margin_mode not in MARGIN_MODES:
        raise ValidationError(f"unknown margin mode {margin_mode!r}; expected {MARGIN_MODES}")
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"line {lineno}: invalid JSON ({exc})", path=path) from exc
            try:
                records.append(_record_from_json(obj, margin_mode))
            except (KeyError, TypeError, ValueError, ValidationError) as exc:
                raise FormatError(f"line {lineno}: {exc}", path=path) from exc
    return records


def write_probe_dump(path: str, records: Iterable[ProbeRecord]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            obj = {
                "prompt_id": rec.prompt_id,
                "context_length": rec.context_length,
                "evidence_distance": rec.evidence_distance,
                "margin_original": rec.margin_original,
                "margin_counterfactual": rec.margin_counterfactual,
                "arm": rec.arm,
            }
            if rec.view is not None:
                obj["view"] = rec.view
            if rec.correct is not None:
                obj["correct"] = rec.correct
            f.write(json.dumps(obj, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Fields


def _check_edges(edges: np.ndarray, name: str) -> np.ndarray:
    e = np.asarray(edges, dtype=np.float64)
    if e.ndim != 1 or len(e) < 2 or np.any(np.diff(e) <= 0):
        raise ValidationError(f"{name} bin edges must be strictly increasing, length >= 2")
    return e


def _cell_of(value: float, edges: np.ndarray) -> int | None:
    """Index of the half-open bin [e_k, e_{k+1}) holding value, or None."""
    if value < edges[0] or value >= edges[-1]:
        return None
    return int(np.searchsorted(edges, value, side="right") - 1)


@dataclass
class ProbeField:
    """Mean G per (context bin, distance bin) cell for one arm."""

    arm: str
    context_edges: np.ndarray
    distance_edges: np.ndarray
    mean: np.ndarray  # (n_context_bins, n_distance_bins), nan where empty
    count: np.ndarray  # int64, same shape

    def same_grid(self, other: "ProbeField") -> bool:
        return np.array_equal(self.context_edges, other.context_edges) and np.array_equal(
            self.distance_edges, other.distance_edges
        )

    def to_json(self) -> dict:
        return {
            "arm": self.arm,
            "context_edges": [float(e) for e in self.context_edges],
            "distance_edges": [float(e) for e in self.distance_edges],
            "mean": [
                [None if not math.isfinite(v) else float(v) for v in row]
                for row in self.mean
            ],
            "count": [[int(c) for c in row] for row in self.count],
        }


def build_field(
    records: Iterable[ProbeRecord],
    context_edges: Sequence[float],
    distance_edges: Sequence[float],
    arm: str | None = None,
    view: str | None = None,
) -> ProbeField:
    """Bin per-record G into a (context, distance) grid of cell means.

    Records outside the outer edges fall off the grid; a populated cell
    always satisfies the geometry constraint because every record does.
    """
    ce = _check_edges(context_edges, "context")
    de = _check_edges(distance_edges, "distance")
    nc, nd = len(ce) - 1, len(de) - 1
    total = np.zeros((nc, nd), dtype=np.float64)
    count = np.zeros((nc, nd), dtype=np.int64)
    label = arm
    for rec in records:
        if arm is not None and rec.arm != arm:
            continue
        if view is not None and rec.view != view:
            continue
        rec.validate()
        if label is None:
            label = rec.arm
        elif arm is None and rec.arm != label:
            raise ValidationError(
                f"field mixes arms {label!r} and {rec.arm!r}; pass arm= to select one"
            )
        ci = _cell_of(rec.context_length, ce)
        di = _cell_of(rec.evidence_distance, de)
        if ci is None or di is None:
            continue
        total[ci, di] += compute_g(rec)
        count[ci, di] += 1
    mean = np.full((nc, nd), np.nan)
    populated = count > 0
    mean[populated] = total[populated] / count[populated]
    return ProbeField(label or "unlabeled", ce, de, mean, count)


def delta_field(field_a: ProbeField, field_b: ProbeField) -> ProbeField:
    """Cell-wise G_a - G_b, defined only where both arms populate the cell."""
    if not field_a.same_grid(field_b):
        raise ValidationError("delta requires identical bin edges in both arms")
    both = (field_a.count > 0) & (field_b.count > 0)
    mean = np.full_like(field_a.mean, np.nan)
    mean[both] = field_a.mean[both] - field_b.mean[both]
    return ProbeField(
        arm=f"{field_a.arm}-{field_b.arm}",
        context_edges=field_a.context_edges,
        distance_edges=field_a.distance_edges,
        mean=mean,
        count=np.minimum(field_a.count, field_b.count),
    )


def robust_display_normalize(
    fields: Sequence[ProbeField], lower: float = 5.0, upper: float = 95.0
) -> tuple[list[ProbeField], bool]:
    """Clip to shared percentiles and min-max scale to [0, 1].

    The percentile range is computed once over the union of all populated
    cells of the fields being compared, so compared panels share a scale.
    Display only: deltas are always taken on unnormalized means.  Returns
    (normalized fields, degenerate_flag); a degenerate range maps every
    populated cell to 0.5.
    """
    if not (0.0 <= lower < upper <= 100.0):
        raise ValidationError("percentiles must satisfy 0 <= lower < upper <= 100")
    pool = np.concatenate(
        [f.mean[np.isfinite(f.mean)].ravel() for f in fields]
    ) if fields else np.zeros(0)
    if pool.size == 0:
        raise ValidationError("no populated cells to normalize")
    lo, hi = np.percentile(pool, [lower, upper])
    degenerate = not (hi > lo)
    out = []
    for f in fields:
        mean = f.mean.copy()
        ok = np.isfinite(mean)
        if degenerate:
            mean[ok] = 0.5
        else:
            mean[ok] = (np.clip(mean[ok], lo, hi) - lo) / (hi - lo)
        out.append(ProbeField(f.arm, f.context_edges, f.distance_edges, mean, f.count.copy()))
    return out, degenerate


def correct_rate_by_distance(
    records: Iterable[ProbeRecord], distance_edges: Sequence[float]
) -> list[dict]:
    """Plain mean of the optional correctness bit per distance band."""
    de = _check_edges(distance_edges, "distance")
    hits = np.zeros(len(de) - 1)
    seen = np.zeros(len(de) - 1, dtype=np.int64)
    for rec in records:
        if rec.correct is None:
            continue
        di = _cell_of(rec.evidence_distance, de)
        if di is None:
            continue
        hits[di] += 1.0 if rec.correct else 0.0
        seen[di] += 1
    return [
        {
            "distance_lo": float(de[i]),
            "distance_hi": float(de[i + 1]),
            "count": int(seen[i]),
            "rate": float(hits[i] / seen[i]) if seen[i] else None,
        }
        for i in range(len(de) - 1)
    ]


# ---------------------------------------------------------------------------
# Paired bootstrap


@dataclass(frozen=True)
class BootstrapResult:
    point: float
    lower: float
    upper: float
    resamples: int
    confidence: float
    n_cells: int
    n_pairs: int

    def to_json(self) -> dict:
        return {
            "point": self.point,
            "lower": self.lower,
            "upper": self.upper,
            "resamples": self.resamples,
            "confidence": self.confidence,
            "n_cells": self.n_cells,
            "n_pairs": self.n_pairs,
        }


def pair_differences_by_cell(
    records: Iterable[ProbeRecord],
    arm_a: str,
    arm_b: str,
    context_edges: Sequence[float],
    distance_edges: Sequence[float],
) -> dict[tuple[int, int], np.ndarray]:
    """Per-cell arrays of paired per-prompt differences G_a - G_b.

    Every prompt_id must appear exactly once per arm and agree on its
    geometry across arms; prompts falling off the grid are dropped.
    """
    ce = _check_edges(context_edges, "context")
    de = _check_edges(distance_edges, "distance")
    by_prompt: dict[str, dict[str, ProbeRecord]] = {}
    for rec in records:
        if rec.arm not in (arm_a, arm_b):
            continue
        rec.validate()
        slot = by_prompt.setdefault(rec.prompt_id, {})
        if rec.arm in slot:
            raise ValidationError(f"duplicate record for prompt {rec.prompt_id!r} arm {rec.arm!r}")
        slot[rec.arm] = rec
    cells: dict[tuple[int, int], list[float]] = {}
    for pid, slot in by_prompt.items():
        if arm_a not in slot or arm_b not in slot:
            raise ValidationError(f"prompt {pid!r} is not paired across both arms")
        ra, rb = slot[arm_a], slot[arm_b]
        if (ra.context_length, ra.evidence_distance) != (rb.context_length, rb.evidence_distance):
            raise ValidationError(f"prompt {pid!r} geometry differs between arms")
        ci = _cell_of(ra.context_length, ce)
        di = _cell_of(ra.evidence_distance, de)
        if ci is None or di is None:
            continue
        cells.setdefault((ci, di), []).append(compute_g(ra) - compute_g(rb))
    if not cells:
        raise ValidationError("no populated cells after pairing")
    return {key: np.asarray(vals, dtype=np.float64) for key, vals in sorted(cells.items())}


def _macro_mean(cell_means: np.ndarray, cell_sizes: np.ndarray) -> float:
    return float(np.mean(cell_means))


def _pooled_mean(cell_means: np.ndarray, cell_sizes: np.ndarray) -> float:
    return float(np.sum(cell_means * cell_sizes) / np.sum(cell_sizes))


_AGGREGATIONS: dict[str, Callable[[np.ndarray, np.ndarray], float]] = {
    "macro": _macro_mean,
    "pooled": _pooled_mean,
}


def paired_bootstrap_ci(
    cells: dict[tuple[int, int], np.ndarray],
    resamples: int = 1000,
    confidence: float = 0.95,
    seed: int = 0,
    aggregation: str = "macro",
) -> BootstrapResult:
    """Percentile interval for the aggregated paired difference.

    Each replicate resamples pairs with replacement within every cell and
    aggregates cell means exactly as the point estimate does (macro mean by
    default).  Replicate r draws from a generator seeded by (seed, r), so
    results do not depend on how replicates are scheduled.
    """
    if resamples < 1:
        raise ValidationError("resamples must be >= 1")
    if not (0.0 < confidence < 1.0):
        raise ValidationError("confidence must be in (0, 1)")
    if aggregation not in _AGGREGATIONS:
        raise ValidationError(
            f"unknown aggregation {aggregation!r}; expected one of {tuple(_AGGREGATIONS)}"
        )
    agg = _AGGREGATIONS[aggregation]
    keys = sorted(cells.keys())
    if not keys:
        raise ValidationError("no cells to bootstrap")
    samples = [cells[k] for k in keys]
    if any(len(s) == 0 for s in samples):
        raise ValidationError("empty cell in bootstrap input")
    sizes = np.asarray([len(s) for s in samples], dtype=np.float64)
    point = agg(np.asarray([float(np.mean(s)) for s in samples]), sizes)
    stats = np.empty(resamples, dtype=np.float64)
    for rep in range(resamples):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep,)))
        means = np.empty(len(samples))
        for j, s in enumerate(samples):
            draw = rng.integers(0, len(s), size=len(s))
            means[j] = float(np.mean(s[draw]))
        stats[rep] = agg(means, sizes)
    alpha = 1.0 - confidence
    lower, upper = np.percentile(stats, [100.0 * alpha / 2.0, 100.0 * (1.0 - alpha / 2.0)])
    return BootstrapResult(
        point=float(point),
        lower=float(lower),
        upper=float(upper),
        resamples=resamples,
        confidence=confidence,
        n_cells=len(samples),
        n_pairs=int(sizes.sum()),
    )
