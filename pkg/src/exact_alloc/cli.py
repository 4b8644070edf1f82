"""One executable for the whole pipeline.

Subcommands: synth, pack, stats, weights, export, loss-eval, toy-train,
probe.  Every run writes a manifest.json into --out that echoes the fully
resolved configuration (defaults included), the sha256 of every input file,
and the sha256 of every artifact written, so a rerun with identical inputs
can be checked byte for byte.  Values resolve as: built-in default, then
the --config file (flat keys, overridden by a per-subcommand section),
then explicit flags.  Module errors exit non-zero after printing a single
JSON line to stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import __version__, objective, probe, toylm
from .binio import sha256_file
from .corpus import CorpusManifest, SynthSpec, generate_synthetic_corpus, load_documents, split_documents, write_documents
from .errors import ToolkitError, ValidationError
from .exposure import bucket_label, bucket_lower, collect_stats
from .packer import PackPolicy, pack_documents, read_packed, write_packed
from .weights import WeightPolicy, compute_weights, read_weights, write_weights

_LOG = logging.getLogger("exact_alloc.cli")


def _setup_logging() -> None:
    level = os.environ.get("EXACT_ALLOC_LOG", "warning").upper()
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


# ---------------------------------------------------------------------------
# config resolution and run manifests


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as f:
        obj = json.load(f)
    if not isinstance(obj, dict):
        raise ValidationError("config file must hold a JSON object")
    return obj


def _resolve(ns: argparse.Namespace, command: str, defaults: dict) -> dict:
    """defaults < flat config keys < config[command] section < explicit flags."""
    cfg = _load_config(getattr(ns, "config", None))
    flat = {k: v for k, v in cfg.items() if not isinstance(v, dict)}
    section = cfg.get(command, {})
    if not isinstance(section, dict):
        raise ValidationError(f"config section {command!r} must be an object")
    resolved = {}
    for key, default in defaults.items():
        value = getattr(ns, key, None)
        if value is None:
            value = section.get(key, flat.get(key, default))
        resolved[key] = value
    resolved["workers"] = getattr(ns, "workers", None) or 1
    return resolved


def _floats(value) -> tuple[float, ...]:
    if isinstance(value, str):
        return tuple(float(p) for p in value.split(",") if p.strip() != "")
    return tuple(float(v) for v in value)


def _require(resolved: dict, *keys: str) -> None:
    for key in keys:
        if resolved.get(key) is None:
            raise ValidationError(f"missing required option --{key.replace('_', '-')}")


def _config_hash(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _finish_run(out_dir: str, command: str, resolved: dict, inputs: dict, outputs: list[str]) -> None:
    manifest = {
        "tool": "exact-alloc",
        "version": __version__,
        "command": command,
        "config": resolved,
        "config_hash": _config_hash(resolved),
        "inputs": {path: sha256_file(path) for path in sorted(inputs)},
        "outputs": {name: sha256_file(os.path.join(out_dir, name)) for name in sorted(outputs)},
    }
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)
    _LOG.info("wrote %s", os.path.join(out_dir, "manifest.json"))


def _out_dir(resolved: dict) -> str:
    _require(resolved, "out")
    os.makedirs(resolved["out"], exist_ok=True)
    return resolved["out"]


# ---------------------------------------------------------------------------
# subcommands

_SYNTH_DEFAULTS = {
    "out": None,
    "docs": 2000,
    "seed": 0,
    "key_alphabet": 8,
    "filler_alphabet": 32,
    "length_means": "64",
    "length_weights": "1",
    "recall_density": 0.05,
    "needle_rule": "answer",
    "needle_offset": 0,
    "format": "jsonl",
    "heldout_fraction": 0.0,
    "split_seed": 0,
}


def cmd_synth(ns: argparse.Namespace) -> int:
    r = _resolve(ns, "synth", _SYNTH_DEFAULTS)
    out = _out_dir(r)
    spec = SynthSpec(
        doc_count=int(r["docs"]),
        seed=int(r["seed"]),
        key_alphabet=int(r["key_alphabet"]),
        filler_alphabet=int(r["filler_alphabet"]),
        length_means=_floats(r["length_means"]),
        length_weights=_floats(r["length_weights"]),
        recall_density=float(r["recall_density"]),
        needle_rule=str(r["needle_rule"]),
        needle_offset=int(r["needle_offset"]),
    )
    docs, manifest = generate_synthetic_corpus(spec)
    ext = "jsonl" if r["format"] == "jsonl" else "extk"
    outputs = []
    frac = float(r["heldout_fraction"])
    if frac > 0.0:
        train, held = split_documents(docs, frac, int(r["split_seed"]))
        entry = write_documents(os.path.join(out, f"corpus.{ext}"), train, r["format"])
        entry.path = f"corpus.{ext}"
        held_entry = write_documents(os.path.join(out, f"heldout.{ext}"), held, r["format"])
        held_entry.path = f"heldout.{ext}"
        manifest.sources = [entry, held_entry]
        manifest.split_sizes = {"train": len(train), "heldout": len(held)}
        outputs += [entry.path, held_entry.path]
    else:
        entry = write_documents(os.path.join(out, f"corpus.{ext}"), docs, r["format"])
        entry.path = f"corpus.{ext}"
        manifest.sources = [entry]
        outputs.append(entry.path)
    manifest.save(os.path.join(out, "corpus_manifest.json"))
    outputs.append("corpus_manifest.json")
    _finish_run(out, "synth", r, inputs={}, outputs=outputs)
    return 0


_PACK_DEFAULTS = {
    "out": None,
    "corpus": None,
    "corpus_manifest": None,
    "seq_len": 1024,
    "pad_id": None,
    "vocab_size": None,
    "permutation_seed": None,
    "keep_final_partial": False,
}


def _load_pack_inputs(r: dict) -> tuple[list, int | None, dict]:
    _require(r, "corpus")
    paths = r["corpus"] if isinstance(r["corpus"], list) else [r["corpus"]]
    manifest = None
    inputs = {p: None for p in paths}
    if r["corpus_manifest"] is not None:
        manifest = CorpusManifest.load(r["corpus_manifest"])
        inputs[r["corpus_manifest"]] = None
    docs = []
    for p in paths:
        docs.extend(load_documents(p, manifest))
    vocab = r["vocab_size"]
    if vocab is None and manifest is not None:
        vocab = manifest.vocab_size
    return docs, (int(vocab) if vocab is not None else None), inputs


def _pack_policy(r: dict) -> PackPolicy:
    return PackPolicy(
        seq_len=int(r["seq_len"]),
        permutation_seed=None if r["permutation_seed"] is None else int(r["permutation_seed"]),
        drop_final_partial=not bool(r["keep_final_partial"]),
        pad_id=None if r["pad_id"] is None else int(r["pad_id"]),
    )


def cmd_pack(ns: argparse.Namespace) -> int:
    r = _resolve(ns, "pack", _PACK_DEFAULTS)
    out = _out_dir(r)
    docs, vocab, inputs = _load_pack_inputs(r)
    stream = pack_documents(docs, _pack_policy(r), vocab)
    fp = write_packed(os.path.join(out, "stream.expk"), stream)
    _write_json(
        os.path.join(out, "pack_info.json"),
        {
            "fingerprint": fp,
            "seq_len": stream.seq_len,
            "pad_id": stream.pad_id,
            "sequences": len(stream.sequences),
            "supervised_tokens": stream.supervised_tokens(),
        },
    )
    _finish_run(out, "pack", r, inputs, ["stream.expk", "pack_info.json"])
    return 0


_STATS_DEFAULTS = {"out": None, "pack": None, "absolute": False, "tau": 2048}


def cmd_stats(ns: argparse.Namespace) -> int:
    r = _resolve(ns, "stats", _STATS_DEFAULTS)
    out = _out_dir(r)
    _require(r, "pack")
    stream, fp = read_packed(r["pack"])
    stats = collect_stats(stream, absolute=bool(r["absolute"]))
    shares = stats.shares()
    tau = int(r["tau"])
    rows = []
    print(f"{'bucket':>6}  {'range':>14}  {'count':>12}  {'share':>10}")
    for b in range(len(stats.counts)):
        rows.append(
            {
                "bucket": b,
                "lower": bucket_lower(b),
                "label": bucket_label(b),
                "count": int(stats.counts[b]),
                "share": float(shares[b]),
            }
        )
        print(f"{b:>6}  {bucket_label(b):>14}  {int(stats.counts[b]):>12}  {shares[b]:>10.6f}")
    print(f"tail(tau={tau}): share={stats.tail_share(tau):.6f} buckets={stats.tail_buckets(tau)}")
    payload = {
        "pack_fingerprint": fp,
        "seq_len": stream.seq_len,
        "absolute": bool(r["absolute"]),
        "supervised_total": stats.supervised_total,
        "buckets": rows,
        "tau": tau,
        "tail_share": stats.tail_share(tau),
        "tail_buckets": stats.tail_buckets(tau),
    }
    _write_json(os.path.join(out, "stats.json"), payload)
    _finish_run(out, "stats", r, {r["pack"]: None}, ["stats.json"])
    return 0


_WEIGHT_DEFAULTS = {
    "out": None,
    "pack": None,
    "kind": "exact",
    "alpha": 0.15,
    "gamma": 0.5,
    "epsilon": 1e-4,
    "tau": 2048,
    "seed": 0,
}


def _weight_policy(r: dict) -> WeightPolicy:
    return WeightPolicy(
        kind=str(r["kind"]),
        alpha=float(r["alpha"]),
        gamma=float(r["gamma"]),
        eps=float(r["epsilon"]),
        tau=int(r["tau"]),
        seed=int(r["seed"]),
    )


def cmd_weights(ns: argparse.Namespace) -> int:
    r = _resolve(ns, "weights", _WEIGHT_DEFAULTS)
    out = _out_dir(r)
    _require(r, "pack")
    stream, _ = read_packed(r["pack"])
    ws = compute_weights(stream, _weight_policy(r))
    write_weights(os.path.join(out, "weights.exwt"), ws)
    _write_json(
        os.path.join(out, "weights_info.json"),
        {
            "policy": ws.policy.to_json(),
            "pack_fingerprint": ws.pack_fingerprint,
            "bucket_table": [float(w) for w in ws.bucket_table],
            "weighted_mass": ws.total_weighted_mass(stream),
            "supervised_tokens": stream.supervised_tokens(),
        },
    )
    _finish_run(out, "weights", r, {r["pack"]: None}, ["weights.exwt", "weights_info.json"])
    return 0


_EXPORT_DEFAULTS = dict(_PACK_DEFAULTS, **{k: v for k, v in _WEIGHT_DEFAULTS.items() if k != "pack"})


def cmd_export(ns: argparse.Namespace) -> int:
    r = _resolve(ns, "export", _EXPORT_DEFAULTS)
    out = _out_dir(r)
    docs, vocab, inputs = _load_pack_inputs(r)
    stream = pack_documents(docs, _pack_policy(r), vocab)
    fp = write_packed(os.path.join(out, "stream.expk"), stream)
    ws = compute_weights(stream, _weight_policy(r))
    write_weights(os.path.join(out, "weights.exwt"), ws)
    _write_json(
        os.path.join(out, "export_info.json"),
        {
            "fingerprint": fp,
            "seq_len": stream.seq_len,
            "pad_id": stream.pad_id,
            "sequences": len(stream.sequences),
            "supervised_tokens": stream.supervised_tokens(),
            "policy": ws.policy.to_json(),
            "bucket_table": [float(w) for w in ws.bucket_table],
        },
    )
    _finish_run(out, "export", r, inputs, ["stream.expk", "weights.exwt", "export_info.json"])
    return 0


_LOSS_EVAL_DEFAULTS = {
    "out": None,
    "pack": None,
    "weights": None,
    "ce": None,
    "normalization": "mask_sum",
}


def cmd_loss_eval(ns: argparse.Namespace) -> int:
    r = _resolve(ns, "loss-eval", _LOSS_EVAL_DEFAULTS)
    out = _out_dir(r)
    _require(r, "pack", "weights", "ce")
    stream, fp = read_packed(r["pack"])
    ws = read_weights(r["weights"])
    ws.check_pack(fp)
    rows, ce_len = objective.read_ce(r["ce"])
    if ce_len != stream.seq_len or len(rows) != len(stream.sequences):
        raise ValidationError("ce dump does not align with the packed stream")
    masks = [s.mask for s in stream.sequences]
    weights64 = [w.astype(np.float64) for w in ws.per_seq]
    report = {
        "pack_fingerprint": fp,
        "policy": ws.policy.to_json(),
        "normalization": r["normalization"],
        "objective": objective.weighted_ce(masks, weights64, rows, r["normalization"]),
        "objective_mask_sum": objective.weighted_ce(masks, weights64, rows, "mask_sum"),
        "objective_weighted_mask_sum": objective.weighted_ce(
            masks, weights64, rows, "weighted_mask_sum"
        ),
        "region": objective.region_means(stream, rows, ws.policy.tau),
        "loss_mass": objective.loss_mass_shares(stream, weights64, rows, ws.policy.tau),
    }
    _write_json(os.path.join(out, "loss.json"), report)
    print(
        f"objective[{r['normalization']}]={report['objective']:.10f} "
        f"tail_loss_mass={report['loss_mass']['weighted_tail_share']:.6f} "
        f"(unweighted {report['loss_mass']['unweighted_tail_share']:.6f})"
    )
    _finish_run(
        out, "loss-eval", r, {r["pack"]: None, r["weights"]: None, r["ce"]: None}, ["loss.json"]
    )
    return 0


_TOY_TRAIN_DEFAULTS = {
    "out": None,
    "pack": None,
    "weights": None,
    "eval_pack": None,
    "vocab_size": None,
    "dim": 16,
    "seed": 0,
    "shuffle_seed": 0,
    "steps": 0,
    "batch_size": 1,
    "lr": 0.1,
    "normalization": "mask_sum",
}


def cmd_toy_train(ns: argparse.Namespace) -> int:
    r = _resolve(ns, "toy-train", _TOY_TRAIN_DEFAULTS)
    out = _out_dir(r)
    _require(r, "pack", "weights", "vocab_size")
    stream, fp = read_packed(r["pack"])
    ws = read_weights(r["weights"])
    ws.check_pack(fp)
    model = toylm.init_model(
        toylm.ModelConfig(vocab_size=int(r["vocab_size"]), dim=int(r["dim"]), seed=int(r["seed"]))
    )
    config = toylm.TrainConfig(
        steps=int(r["steps"]),
        batch_size=int(r["batch_size"]),
        lr=float(r["lr"]),
        normalization=str(r["normalization"]),
        shuffle_seed=int(r["shuffle_seed"]),
    )
    history = toylm.train(model, stream, ws, config)
    inputs = {r["pack"]: None, r["weights"]: None}
    if r["eval_pack"] is not None:
        eval_stream, _ = read_packed(r["eval_pack"])
        inputs[r["eval_pack"]] = None
    else:
        eval_stream = stream
    rows = toylm.evaluate(model, eval_stream)
    objective.write_ce(os.path.join(out, "ce.exce"), rows, eval_stream.seq_len)
    metrics = {
        "history": history,
        "eval": objective.region_means(eval_stream, rows, ws.policy.tau),
        "policy": ws.policy.to_json(),
        "pack_fingerprint": fp,
    }
    _write_json(os.path.join(out, "metrics.json"), metrics)
    tail = metrics["eval"]["tail_mean_ce"]
    print(
        f"steps={len(history)} final_loss="
        f"{history[-1]['loss'] if history else float('nan'):.6f} eval_tail_ce={tail:.6f}"
    )
    _finish_run(out, "toy-train", r, inputs, ["ce.exce", "metrics.json"])
    return 0


_PROBE_DEFAULTS = {
    "out": None,
    "dump": None,
    "mode": "field",
    "margin_mode": "direct",
    "context_edges": "0,256,1024,4096,16384",
    "distance_edges": "0,256,1024,4096,16384",
    "arm": None,
    "arm_a": None,
    "arm_b": None,
    "view": None,
    "resamples": 1000,
    "confidence": 0.95,
    "seed": 0,
    "aggregation": "macro",
    "normalize": False,
    "percentiles": "5,95",
}


def _field_text(field: probe.ProbeField) -> str:
    ce, de = field.context_edges, field.distance_edges
    lines = [
        f"# arm: {field.arm}",
        "# context_edges: " + " ".join(f"{e:g}" for e in ce),
        "# distance_edges: " + " ".join(f"{e:g}" for e in de),
    ]
    header = ["context\\distance"] + [f"[{de[j]:g},{de[j+1]:g})" for j in range(len(de) - 1)]
    lines.append("\t".join(header))
    for i in range(len(ce) - 1):
        cells = []
        for j in range(len(de) - 1):
            v = field.mean[i, j]
            cells.append("." if not np.isfinite(v) else f"{v:.6g}")
        lines.append("\t".join([f"[{ce[i]:g},{ce[i+1]:g})"] + cells))
    return "\n".join(lines)


def cmd_probe(ns: argparse.Namespace) -> int:
    r = _resolve(ns, "probe", _PROBE_DEFAULTS)
    out = _out_dir(r)
    _require(r, "dump")
    records = probe.read_probe_dump(r["dump"], str(r["margin_mode"]))
    ce = _floats(r["context_edges"])
    de = _floats(r["distance_edges"])
    mode = str(r["mode"])
    if mode == "field":
        field = probe.build_field(records, ce, de, arm=r["arm"], view=r["view"])
        payload = {"field": field.to_json()}
        if bool(r["normalize"]):
            lo, hi = _floats(r["percentiles"])
            normed, degenerate = probe.robust_display_normalize([field], lo, hi)
            payload["normalized"] = normed[0].to_json()
            payload["degenerate_range"] = degenerate
        print(_field_text(field))
        _write_json(os.path.join(out, "field.json"), payload)
        _finish_run(out, "probe", r, {r["dump"]: None}, ["field.json"])
        return 0
    _require(r, "arm_a", "arm_b")
    if mode == "delta":
        field_a = probe.build_field(records, ce, de, arm=r["arm_a"], view=r["view"])
        field_b = probe.build_field(records, ce, de, arm=r["arm_b"], view=r["view"])
        delta = probe.delta_field(field_a, field_b)
        payload = {
            "field_a": field_a.to_json(),
            "field_b": field_b.to_json(),
            "delta": delta.to_json(),
        }
        if bool(r["normalize"]):
            lo, hi = _floats(r["percentiles"])
            normed, degenerate = probe.robust_display_normalize([field_a, field_b], lo, hi)
            payload["normalized_a"] = normed[0].to_json()
            payload["normalized_b"] = normed[1].to_json()
            payload["degenerate_range"] = degenerate
        print(_field_text(delta))
        _write_json(os.path.join(out, "delta.json"), payload)
        _finish_run(out, "probe", r, {r["dump"]: None}, ["delta.json"])
        return 0
    if mode == "bootstrap":
        cells = probe.pair_differences_by_cell(records, str(r["arm_a"]), str(r["arm_b"]), ce, de)
        result = probe.paired_bootstrap_ci(
            cells,
            resamples=int(r["resamples"]),
            confidence=float(r["confidence"]),
            seed=int(r["seed"]),
            aggregation=str(r["aggregation"]),
        )
        payload = dict(result.to_json())
        payload.update(
            {
                "arm_a": r["arm_a"],
                "arm_b": r["arm_b"],
                "aggregation": r["aggregation"],
                "context_edges": list(ce),
                "distance_edges": list(de),
            }
        )
        print(
            f"# context_edges: {' '.join(f'{e:g}' for e in ce)}\n"
            f"# distance_edges: {' '.join(f'{e:g}' for e in de)}\n"
            f"delta[{r['arm_a']}-{r['arm_b']}] point={result.point:.6g} "
            f"ci{int(result.confidence * 100)}=[{result.lower:.6g}, {result.upper:.6g}] "
            f"cells={result.n_cells} pairs={result.n_pairs}"
        )
        _write_json(os.path.join(out, "ci.json"), payload)
        _finish_run(out, "probe", r, {r["dump"]: None}, ["ci.json"])
        return 0
    raise ValidationError(f"unknown probe mode {mode!r}")


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--out", help="output directory (created if missing)")
    p.add_argument("--workers", type=int, help="worker count (results are order-independent)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exact-alloc",
        description="Supervision-allocation toolkit for packed causal-LM training.",
    )
    parser.add_argument("--version", action="version", version=f"exact-alloc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded synthetic recall corpus")
    _add_common(p)
    p.add_argument("--docs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--key-alphabet", dest="key_alphabet", type=int)
    p.add_argument("--filler-alphabet", dest="filler_alphabet", type=int)
    p.add_argument("--length-means", dest="length_means")
    p.add_argument("--length-weights", dest="length_weights")
    p.add_argument("--recall-density", dest="recall_density", type=float)
    p.add_argument("--needle-rule", dest="needle_rule", choices=["answer", "identity"])
    p.add_argument("--needle-offset", dest="needle_offset", type=int)
    p.add_argument("--format", choices=["jsonl", "binary"])
    p.add_argument("--heldout-fraction", dest="heldout_fraction", type=float)
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pack", help="pack a corpus into fixed-length sequences")
    _add_common(p)
    p.add_argument("--corpus", action="append")
    p.add_argument("--corpus-manifest", dest="corpus_manifest")
    p.add_argument("--seq-len", dest="seq_len", type=int)
    p.add_argument("--pad-id", dest="pad_id", type=int)
    p.add_argument("--vocab-size", dest="vocab_size", type=int)
    p.add_argument("--permutation-seed", dest="permutation_seed", type=int)
    p.add_argument(
        "--keep-final-partial",
        dest="keep_final_partial",
        action=argparse.BooleanOptionalAction,
        help="pad and keep the unfinished final sequence",
    )
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("stats", help="exposure histogram of a packed stream")
    _add_common(p)
    p.add_argument("--pack")
    p.add_argument("--absolute", action=argparse.BooleanOptionalAction)
    p.add_argument("--tau", type=int)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("weights", help="derive per-token weights from a packed stream")
    _add_common(p)
    p.add_argument("--pack")
    p.add_argument("--kind", choices=["exact", "uniform_boost", "packed_position", "random_same_mass", "identity"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--tau", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("export", help="pack a corpus and derive weights in one bundle")
    _add_common(p)
    p.add_argument("--corpus", action="append")
    p.add_argument("--corpus-manifest", dest="corpus_manifest")
    p.add_argument("--seq-len", dest="seq_len", type=int)
    p.add_argument("--pad-id", dest="pad_id", type=int)
    p.add_argument("--vocab-size", dest="vocab_size", type=int)
    p.add_argument("--permutation-seed", dest="permutation_seed", type=int)
    p.add_argument(
        "--keep-final-partial",
        dest="keep_final_partial",
        action=argparse.BooleanOptionalAction,
    )
    p.add_argument("--kind", choices=["exact", "uniform_boost", "packed_position", "random_same_mass", "identity"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--tau", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("loss-eval", help="weighted objective + loss-mass report from a CE dump")
    _add_common(p)
    p.add_argument("--pack")
    p.add_argument("--weights")
    p.add_argument("--ce")
    p.add_argument("--normalization", choices=list(objective.NORMALIZATIONS))
    p.set_defaults(func=cmd_loss_eval)

    p = sub.add_parser("toy-train", help="train/evaluate the toy LM on a packed stream")
    _add_common(p)
    p.add_argument("--pack")
    p.add_argument("--weights")
    p.add_argument("--eval-pack", dest="eval_pack")
    p.add_argument("--vocab-size", dest="vocab_size", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--shuffle-seed", dest="shuffle_seed", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--normalization", choices=list(objective.NORMALIZATIONS))
    p.set_defaults(func=cmd_toy_train)

    p = sub.add_parser("probe", help="field / delta / bootstrap analytics on a probe dump")
    _add_common(p)
    p.add_argument("--dump")
    p.add_argument("--mode", choices=["field", "delta", "bootstrap"])
    p.add_argument("--margin-mode", dest="margin_mode", choices=list(probe.MARGIN_MODES))
    p.add_argument("--context-edges", dest="context_edges")
    p.add_argument("--distance-edges", dest="distance_edges")
    p.add_argument("--arm")
    p.add_argument("--arm-a", dest="arm_a")
    p.add_argument("--arm-b", dest="arm_b")
    p.add_argument("--view")
    p.add_argument("--resamples", type=int)
    p.add_argument("--confidence", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--aggregation", choices=["macro", "pooled"])
    p.add_argument("--normalize", action=argparse.BooleanOptionalAction)
    p.add_argument("--percentiles")
    p.set_defaults(func=cmd_probe)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except ToolkitError as e:
        print(json.dumps({"error": e.code, "message": str(e)}, sort_keys=True), file=sys.stderr)
        return 1
    except OSError as e:
        print(json.dumps({"error": "io", "message": str(e)}, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
