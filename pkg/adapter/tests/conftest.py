"""Fixtures produced exclusively through the toolkit's public CLI."""

import json
import subprocess
import sys

import pytest


def toolkit(*argv):
    proc = subprocess.run(
        [sys.executable, "-m", "exact_alloc", *[str(a) for a in argv]],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    return proc


@pytest.fixture(scope="session")
def artifacts(tmp_path_factory):
    """One synthetic pipeline: pack + identity/exact weights + two CE dumps."""
    root = tmp_path_factory.mktemp("artifacts")
    toolkit("synth", "--out", root / "synth", "--docs", 60, "--seed", 3,
            "--heldout-fraction", 0.0)
    toolkit("pack", "--out", root / "pack",
            "--corpus", root / "synth" / "corpus.jsonl",
            "--corpus-manifest", root / "synth" / "corpus_manifest.json",
            "--seq-len", 64, "--permutation-seed", 1, "--keep-final-partial")
    pack = root / "pack" / "stream.expk"
    toolkit("weights", "--out", root / "w_exact", "--pack", pack,
            "--kind", "exact", "--tau", 16)
    toolkit("weights", "--out", root / "w_identity", "--pack", pack,
            "--kind", "identity", "--tau", 16)
    toolkit("toy-train", "--out", root / "t0", "--pack", pack,
            "--weights", root / "w_identity" / "weights.exwt",
            "--vocab-size", 48, "--steps", 0)
    toolkit("toy-train", "--out", root / "t1", "--pack", pack,
            "--weights", root / "w_exact" / "weights.exwt",
            "--vocab-size", 48, "--steps", 30, "--batch-size", 4, "--lr", 1.0)
    return {
        "root": root,
        "pack": pack,
        "pack_info": json.loads((root / "pack" / "pack_info.json").read_text()),
        "weights_exact": root / "w_exact" / "weights.exwt",
        "weights_exact_info": json.loads((root / "w_exact" / "weights_info.json").read_text()),
        "weights_identity": root / "w_identity" / "weights.exwt",
        "ce_untrained": root / "t0" / "ce.exce",
        "ce_trained": root / "t1" / "ce.exce",
        "vocab_size": 48,
    }


@pytest.fixture(scope="session")
def two_segment(tmp_path_factory):
    """Hand-written corpus of a 5-token and a 3-token doc packed into L=8."""
    root = tmp_path_factory.mktemp("twoseg")
    corpus = root / "corpus.jsonl"
    lines = [
        {"doc_id": "a", "tokens": [1, 2, 3, 4, 5]},
        {"doc_id": "b", "tokens": [11, 12, 13]},
    ]
    corpus.write_text("".join(json.dumps(rec) + "\n" for rec in lines))
    toolkit("pack", "--out", root / "pack", "--corpus", corpus,
            "--seq-len", 8, "--vocab-size", 32)
    toolkit("weights", "--out", root / "w", "--pack", root / "pack" / "stream.expk",
            "--kind", "identity", "--tau", 0)
    toolkit("toy-train", "--out", root / "t", "--pack", root / "pack" / "stream.expk",
            "--weights", root / "w" / "weights.exwt", "--vocab-size", 32, "--steps", 0)
    return {
        "pack": root / "pack" / "stream.expk",
        "weights": root / "w" / "weights.exwt",
        "ce": root / "t" / "ce.exce",
    }
