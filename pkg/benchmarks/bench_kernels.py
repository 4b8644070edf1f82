"""Benchmark the compiled kernel core against the pure-numpy fallback.

Builds one packed-shaped workload, checks the two backends agree bit for
bit on it, then reports best-of-N wall times per kernel and the speedup.

    python3 benchmarks/bench_kernels.py --seq-len 4096 --seqs 64 --repeats 5
"""

import argparse
import json
import time

import numpy as np

from exact_alloc.exposure import bucket_count_for
from exact_alloc.kernels import _ref

try:
    from exact_alloc.kernels import _core
except ImportError:
    _core = None


def build_workload(seq_len: int, n_seqs: int, dim: int, seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    n_buckets = bucket_count_for(seq_len)
    table = 1.0 + rng.random(n_buckets)
    work = []
    for _ in range(n_seqs):
        n_seg = int(rng.integers(1, max(2, seq_len // 48)))
        starts = np.concatenate(
            [[0], np.sort(rng.choice(np.arange(1, seq_len), size=n_seg - 1, replace=False))]
        ).astype(np.int64)
        fill = int(rng.integers(seq_len // 2, seq_len + 1))
        mask = (np.arange(seq_len) < fill).astype(np.uint8)
        starts = starts[starts < fill] if fill < seq_len else starts
        ell = _ref.effective_context(starts, seq_len)
        work.append(
            {
                "starts": starts,
                "mask": mask,
                "ell": ell,
                "table": table,
                "vectors": rng.standard_normal((seq_len, dim)),
                "grads": rng.standard_normal((seq_len, dim)),
                "denoms": ell.astype(np.float64),
                "n_buckets": n_buckets,
            }
        )
    return work


def kernel_calls(backend) -> dict:
    return {
        "effective_context": lambda w: backend.effective_context(
            w["starts"], len(w["mask"])
        ),
        "bucket_indices": lambda w: backend.bucket_indices(w["ell"]),
        "bucket_counts": lambda w: backend.bucket_counts(
            w["ell"], w["mask"], w["n_buckets"]
        ),
        "map_bucket_weights": lambda w: backend.map_bucket_weights(
            w["ell"], w["mask"], w["table"]
        ),
        "segment_prefix_mean": lambda w: backend.segment_prefix_mean(
            w["vectors"], w["starts"]
        ),
        "segment_suffix_scatter": lambda w: backend.segment_suffix_scatter(
            w["grads"], w["denoms"], w["starts"]
        ),
    }


def check_parity(work: list[dict]) -> None:
    ref_calls, core_calls = kernel_calls(_ref), kernel_calls(_core)
    for name in ref_calls:
        for w in work:
            a, b = ref_calls[name](w), core_calls[name](w)
            if np.asarray(a).tobytes() != np.asarray(b).tobytes():
                raise SystemExit(f"backend outputs differ for {name}")


def time_backend(call, work: list[dict], repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for w in work:
            call(w)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    ap = argparse.ArgumentParser(description="compare kernel backends")
    ap.add_argument("--seq-len", type=int, default=4096)
    ap.add_argument("--seqs", type=int, default=64)
    ap.add_argument("--dim", type=int, default=16)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", dest="json_out", help="also write results to this file")
    ns = ap.parse_args()

    work = build_workload(ns.seq_len, ns.seqs, ns.dim, ns.seed)
    print(f"workload: {ns.seqs} sequences x L={ns.seq_len}, dim={ns.dim}, "
          f"best of {ns.repeats}")
    if _core is None:
        print("compiled core not importable; timing the numpy fallback only")
    else:
        check_parity(work)
        print("parity: both backends bit-identical on this workload")

    rows = []
    ref_calls = kernel_calls(_ref)
    core_calls = kernel_calls(_core) if _core is not None else None
    for name, call in ref_calls.items():
        py_s = time_backend(call, work, ns.repeats)
        row = {"kernel": name, "python_ms": 1e3 * py_s}
        if core_calls is not None:
            cy_s = time_backend(core_calls[name], work, ns.repeats)
            row["cython_ms"] = 1e3 * cy_s
            row["speedup"] = py_s / cy_s
        rows.append(row)

    width = max(len(r["kernel"]) for r in rows)
    header = f"{'kernel':<{width}}  {'python':>10}"
    if _core is not None:
        header += f"  {'cython':>10}  {'speedup':>8}"
    print(header)
    for r in rows:
        line = f"{r['kernel']:<{width}}  {r['python_ms']:>8.3f}ms"
        if "cython_ms" in r:
            line += f"  {r['cython_ms']:>8.3f}ms  {r['speedup']:>7.2f}x"
        print(line)

    if ns.json_out:
        with open(ns.json_out, "w") as fh:
            json.dump(
                {
                    "seq_len": ns.seq_len,
                    "seqs": ns.seqs,
                    "dim": ns.dim,
                    "repeats": ns.repeats,
                    "seed": ns.seed,
                    "core_available": _core is not None,
                    "results": rows,
                },
                fh,
                indent=2,
                sort_keys=True,
            )
            fh.write("\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
