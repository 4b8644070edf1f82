"""Command-line pipeline: resolution order, manifests, determinism, errors."""

import filecmp
import hashlib
import json
import math
import os
import shutil
import subprocess
import sys

import numpy as np
import pytest

from exact_alloc.cli import main
from exact_alloc.probe import ProbeRecord, write_probe_dump


def run(*argv):
    return main([str(a) for a in argv])


def run_fail(capsys, *argv):
    code = run(*argv)
    assert code == 1
    err = capsys.readouterr().err.strip()
    assert "\n" not in err  # one record per failure
    record = json.loads(err)
    assert set(record) == {"error", "message"}
    return record


def read_json(*parts):
    with open(os.path.join(*[str(p) for p in parts])) as fh:
        return json.load(fh)


@pytest.fixture()
def pipeline(tmp_path):
    """synth -> pack shared by several tests; returns dict of dirs."""
    d = {k: tmp_path / k for k in ("synth", "pack")}
    assert run("synth", "--out", d["synth"], "--docs", 60, "--seed", 3,
               "--heldout-fraction", 0.0) == 0
    assert run("pack", "--out", d["pack"], "--corpus", d["synth"] / "corpus.jsonl",
               "--corpus-manifest", d["synth"] / "corpus_manifest.json",
               "--seq-len", 128, "--permutation-seed", 1) == 0
    d["vocab"] = read_json(d["synth"], "corpus_manifest.json")["vocab_size"]
    return d


def test_identity_weight_chain_reproduces_plain_masked_ce(pipeline, tmp_path):
    wdir, tdir, ldir = tmp_path / "w", tmp_path / "t", tmp_path / "l"
    assert run("weights", "--out", wdir, "--pack", pipeline["pack"] / "stream.expk",
               "--kind", "identity", "--tau", 8) == 0
    assert run("toy-train", "--out", tdir, "--pack", pipeline["pack"] / "stream.expk",
               "--weights", wdir / "weights.exwt", "--vocab-size", pipeline["vocab"],
               "--steps", 0) == 0
    assert run("loss-eval", "--out", ldir, "--pack", pipeline["pack"] / "stream.expk",
               "--weights", wdir / "weights.exwt", "--ce", tdir / "ce.exce") == 0
    report = read_json(ldir, "loss.json")
    # untrained model is exactly uniform, and identity weights change nothing
    assert report["objective"] == pytest.approx(math.log(pipeline["vocab"]), abs=1e-12)
    assert report["objective_mask_sum"] == report["objective_weighted_mask_sum"]
    assert report["loss_mass"]["weighted_tail_share"] == pytest.approx(
        report["loss_mass"]["unweighted_tail_share"], abs=1e-15
    )


def test_stats_and_weights_reports(pipeline, tmp_path, capsys):
    sdir, wdir = tmp_path / "s", tmp_path / "w"
    assert run("stats", "--out", sdir, "--pack", pipeline["pack"] / "stream.expk",
               "--tau", 32) == 0
    stats = read_json(sdir, "stats.json")
    assert stats["supervised_total"] > 0
    assert sum(b["count"] for b in stats["buckets"]) == stats["supervised_total"]
    assert 0.0 <= stats["tail_share"] <= 1.0
    out = capsys.readouterr().out
    assert "bucket" in out and "share" in out

    assert run("weights", "--out", wdir, "--pack", pipeline["pack"] / "stream.expk",
               "--kind", "exact", "--alpha", 0.15, "--gamma", 0.5, "--tau", 32) == 0
    info = read_json(wdir, "weights_info.json")
    assert info["policy"]["kind"] == "exact"
    assert info["weighted_mass"] > info["supervised_tokens"]  # boost adds mass
    assert info["pack_fingerprint"] == read_json(
        pipeline["pack"], "pack_info.json")["fingerprint"]


def test_config_file_and_flag_precedence(pipeline, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "alpha": 0.30,
        "tau": 32,
        "weights": {"alpha": 0.25, "kind": "exact"},
    }))
    base = ["--config", cfg, "--pack", pipeline["pack"] / "stream.expk"]

    d1 = tmp_path / "w1"  # command section beats the flat key
    assert run("weights", "--out", d1, *base) == 0
    assert read_json(d1, "weights_info.json")["policy"]["alpha"] == 0.25

    d2 = tmp_path / "w2"  # explicit flag beats the config file
    assert run("weights", "--out", d2, *base, "--alpha", 0.2) == 0
    assert read_json(d2, "weights_info.json")["policy"]["alpha"] == 0.2

    d3 = tmp_path / "w3"  # flat key still applies to keys the section omits
    assert run("weights", "--out", d3, *base, "--alpha", 0.2) == 0
    assert read_json(d3, "weights_info.json")["policy"]["tau"] == 32


def test_manifest_records_inputs_and_outputs(pipeline):
    manifest = read_json(pipeline["pack"], "manifest.json")
    assert manifest["tool"] == "exact-alloc"
    assert manifest["command"] == "pack"
    assert "version" in manifest and "config_hash" in manifest
    for name, digest in manifest["outputs"].items():
        with open(os.path.join(pipeline["pack"], name), "rb") as fh:
            assert hashlib.sha256(fh.read()).hexdigest() == digest
    assert any(k.endswith("corpus.jsonl") for k in manifest["inputs"])
    for path, digest in manifest["inputs"].items():
        with open(path, "rb") as fh:
            assert hashlib.sha256(fh.read()).hexdigest() == digest


def test_reruns_are_byte_identical(tmp_path):
    root = tmp_path / "run"

    def drive():
        assert run("synth", "--out", root / "synth", "--docs", 50, "--seed", 11,
                   "--heldout-fraction", 0.2, "--split-seed", 12) == 0
        assert run("pack", "--out", root / "pack",
                   "--corpus", root / "synth" / "corpus.jsonl",
                   "--corpus-manifest", root / "synth" / "corpus_manifest.json",
                   "--seq-len", 64, "--permutation-seed", 5) == 0
        assert run("weights", "--out", root / "w", "--pack", root / "pack" / "stream.expk",
                   "--kind", "random_same_mass", "--tau", 16, "--seed", 9) == 0

    drive()
    snap = tmp_path / "snap"
    shutil.copytree(root, snap)
    drive()  # identical command line, identical directories -> identical bytes
    for sub in ("synth", "pack", "w"):
        da, db = root / sub, snap / sub
        names = sorted(os.listdir(da))
        assert names == sorted(os.listdir(db))
        match, mismatch, errors = filecmp.cmpfiles(da, db, names, shallow=False)
        assert mismatch == [] and errors == []


def test_empty_tail_is_a_clean_single_line_error(pipeline, tmp_path, capsys):
    record = run_fail(capsys, "weights", "--out", tmp_path / "w",
                      "--pack", pipeline["pack"] / "stream.expk",
                      "--kind", "exact", "--tau", 1 << 20)
    assert record["error"] == "empty-tail"
    assert "tau" in record["message"]


def test_missing_inputs_reported_as_validation_or_io(tmp_path, capsys):
    record = run_fail(capsys, "weights", "--out", tmp_path / "w1", "--kind", "exact")
    assert record["error"] == "validation"
    record = run_fail(capsys, "stats", "--out", tmp_path / "w2",
                      "--pack", tmp_path / "nope.expk")
    assert record["error"] == "io"


def test_pack_rejects_tampered_corpus(pipeline, tmp_path, capsys):
    corpus = pipeline["synth"] / "corpus.jsonl"
    clone = tmp_path / "corpus.jsonl"
    data = corpus.read_bytes()
    clone.write_bytes(data[:-2] + b"9\n")
    manifest = json.loads((pipeline["synth"] / "corpus_manifest.json").read_text())
    for src in manifest["sources"]:
        src["path"] = "corpus.jsonl"
    (tmp_path / "corpus_manifest.json").write_text(json.dumps(manifest))
    record = run_fail(capsys, "pack", "--out", tmp_path / "p", "--corpus", clone,
                      "--corpus-manifest", tmp_path / "corpus_manifest.json",
                      "--seq-len", 64)
    assert record["error"] == "manifest-mismatch"


def _probe_dump(path, n=80, delta=0.5, seed=0):
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        ctx = int(rng.integers(64, 2000))
        dist = int(rng.integers(0, min(ctx, 500)))
        base = float(rng.normal())
        records.append(ProbeRecord(f"p{i}", ctx, dist, base + delta, 0.0, "treated"))
        records.append(ProbeRecord(f"p{i}", ctx, dist, base, 0.0, "control"))
    write_probe_dump(str(path), records)


def test_probe_field_delta_bootstrap(tmp_path, capsys):
    dump = tmp_path / "dump.jsonl"
    _probe_dump(dump)
    edges = ["--context-edges", "0,256,4096", "--distance-edges", "0,64,512"]

    fdir = tmp_path / "field"
    assert run("probe", "--out", fdir, "--dump", dump, "--mode", "field",
               "--arm", "treated", *edges) == 0
    field = read_json(fdir, "field.json")["field"]
    assert field["arm"] == "treated"
    assert len(field["mean"]) == 2 and len(field["mean"][0]) == 2
    assert "#" in capsys.readouterr().out

    ddir = tmp_path / "delta"
    assert run("probe", "--out", ddir, "--dump", dump, "--mode", "delta",
               "--arm-a", "treated", "--arm-b", "control", *edges) == 0
    payload = read_json(ddir, "delta.json")
    delta = payload["delta"]
    assert delta["arm"] == "treated-control"
    assert payload["field_a"]["arm"] == "treated"
    ridx = [(i, j) for i, row in enumerate(delta["mean"])
            for j, v in enumerate(row) if v is not None]
    assert ridx  # populated somewhere
    for i, j in ridx:
        assert delta["mean"][i][j] == pytest.approx(0.5, abs=1e-9)

    bdir = tmp_path / "boot"
    assert run("probe", "--out", bdir, "--dump", dump, "--mode", "bootstrap",
               "--arm-a", "treated", "--arm-b", "control",
               "--resamples", 200, "--seed", 4, *edges) == 0
    ci = read_json(bdir, "ci.json")
    assert ci["lower"] <= ci["point"] <= ci["upper"]
    assert ci["point"] == pytest.approx(0.5, abs=1e-9)
    assert ci["resamples"] == 200 and ci["aggregation"] == "macro"


def test_probe_normalized_field_output(tmp_path):
    dump = tmp_path / "dump.jsonl"
    _probe_dump(dump, delta=2.0)
    ndir = tmp_path / "norm"
    assert run("probe", "--out", ndir, "--dump", dump, "--mode", "field",
               "--arm", "treated", "--context-edges", "0,256,4096",
               "--distance-edges", "0,64,512", "--normalize",
               "--percentiles", "5,95") == 0
    payload = read_json(ndir, "field.json")
    vals = [v for row in payload["normalized"]["mean"] for v in row if v is not None]
    assert vals and all(0.0 <= v <= 1.0 for v in vals)
    assert payload["degenerate_range"] is False


def test_module_entry_point_and_version():
    proc = subprocess.run(
        [sys.executable, "-m", "exact_alloc", "--version"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.startswith("exact-alloc ")

    proc = subprocess.run(
        [sys.executable, "-m", "exact_alloc", "weights", "--kind", "exact"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 1
    assert json.loads(proc.stderr)["error"] == "validation"
