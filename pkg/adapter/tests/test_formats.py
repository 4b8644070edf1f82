"""The adapter's independent decoders against toolkit-written files."""

import hashlib
import math

import numpy as np
import pytest

from exalloc_adapter import FormatError, read_ce_file, read_pack, read_weight_file


def test_pack_decodes_and_revalidates(artifacts):
    pack = read_pack(str(artifacts["pack"]))
    info = artifacts["pack_info"]
    assert pack.seq_len == info["seq_len"] == 64
    assert len(pack.records) == info["sequences"]
    assert sum(int(r.mask.sum()) for r in pack.records) == info["supervised_tokens"]
    assert pack.fingerprint == info["fingerprint"]
    with open(artifacts["pack"], "rb") as fh:
        assert pack.fingerprint == hashlib.sha256(fh.read()).hexdigest()
    for rec in pack.records:
        assert rec.tokens.shape == (64,)
        assert rec.segment_starts[0] == 0
        # context counter restarts at each stored segment start
        assert rec.effective_context[rec.segment_starts].max() == 0


def test_pack_rejects_corrupted_context(artifacts, tmp_path):
    data = bytearray(artifacts["pack"].read_bytes())
    data[-1] ^= 0xFF  # last byte sits inside the final context array
    bad = tmp_path / "bad.expk"
    bad.write_bytes(bytes(data))
    with pytest.raises(FormatError, match="effective context"):
        read_pack(str(bad))


def test_pack_rejects_bad_magic_and_truncation(artifacts, tmp_path):
    data = artifacts["pack"].read_bytes()
    bad = tmp_path / "magic.expk"
    bad.write_bytes(b"XXXX" + data[4:])
    with pytest.raises(FormatError, match="magic"):
        read_pack(str(bad))
    cut = tmp_path / "cut.expk"
    cut.write_bytes(data[:-3])
    with pytest.raises(FormatError, match="truncated"):
        read_pack(str(cut))
    tail = tmp_path / "tail.expk"
    tail.write_bytes(data + b"\x00")
    with pytest.raises(FormatError, match="trailing"):
        read_pack(str(tail))


def test_weight_file_round_trips_policy_and_table(artifacts):
    wf = read_weight_file(str(artifacts["weights_exact"]))
    info = artifacts["weights_exact_info"]
    assert wf.kind == info["policy"]["kind"] == "exact"
    assert wf.alpha == info["policy"]["alpha"]
    assert wf.gamma == info["policy"]["gamma"]
    assert wf.eps == info["policy"]["eps"]
    assert wf.tau == info["policy"]["tau"]
    assert wf.seed == info["policy"]["seed"]
    assert wf.pack_fingerprint == info["pack_fingerprint"]
    assert wf.bucket_table.tolist() == info["bucket_table"]
    assert all(row.dtype == np.float32 for row in wf.rows)
    # the documented f32 storage is the only loss: summing the decoded rows
    # reproduces the toolkit's own weighted-mass value exactly
    mass = math.fsum(
        float(w)
        for rec, row in zip(read_pack(str(artifacts["pack"])).records, wf.rows)
        for w, m in zip(row.astype(np.float64), rec.mask)
        if m == 1
    )
    assert mass == info["weighted_mass"]


def test_identity_weight_rows_are_unit(artifacts):
    wf = read_weight_file(str(artifacts["weights_identity"]))
    assert wf.kind == "identity"
    for row in wf.rows:
        assert np.all(row == 1.0)


def test_ce_dump_shape_and_values(artifacts):
    rows, seq_len = read_ce_file(str(artifacts["ce_untrained"]))
    pack = read_pack(str(artifacts["pack"]))
    assert seq_len == pack.seq_len and len(rows) == len(pack.records)
    logv = math.log(artifacts["vocab_size"])
    for rec, row in zip(pack.records, rows):
        sup = rec.mask == 1
        # untrained toolkit model scores exactly uniform at every target
        assert np.allclose(row[sup], logv, atol=1e-12, rtol=0.0)
        assert np.all(row[~sup] == 0.0)


def test_weight_file_magic_guard(artifacts, tmp_path):
    data = artifacts["weights_exact"].read_bytes()
    bad = tmp_path / "bad.exwt"
    bad.write_bytes(b"XXXX" + data[4:])
    with pytest.raises(FormatError, match="magic"):
        read_weight_file(str(bad))
