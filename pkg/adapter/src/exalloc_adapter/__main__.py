"""CLI: agreement report and the drop-in training demo.

    python3 -m exalloc_adapter report --pack s.expk --weights w.exwt --ce c.exce
    python3 -m exalloc_adapter demo --pack s.expk --weights w.exwt --steps 5
"""

import argparse
import json
import os
import sys

from .errors import AdapterError
from .loss import NORMALIZATIONS, cross_check_loss, render_report
from .demo import run_demo


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="exalloc-adapter")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("report", help="cross-check the weighted loss against the toolkit")
    p.add_argument("--pack", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--ce", required=True)
    p.add_argument("--normalization", choices=list(NORMALIZATIONS), default="mask_sum")
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.add_argument("--out", help="directory for agreement.json")

    p = sub.add_parser("demo", help="run a few weighted training steps on a tiny model")
    p.add_argument("--pack", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=2)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalization", choices=list(NORMALIZATIONS), default="mask_sum")

    ns = parser.parse_args(argv)
    try:
        if ns.command == "report":
            result = cross_check_loss(
                ns.pack, ns.weights, ns.ce, ns.normalization, ns.tolerance
            )
            print(render_report(result))
            if ns.out:
                os.makedirs(ns.out, exist_ok=True)
                with open(os.path.join(ns.out, "agreement.json"), "w") as fh:
                    json.dump(result, fh, indent=2, sort_keys=True)
                    fh.write("\n")
            return 0 if result["within_tolerance"] else 1
        result = run_demo(
            ns.pack, ns.weights, ns.steps, ns.batch_size, ns.lr, ns.dim, ns.seed,
            ns.normalization,
        )
        for step, loss in enumerate(result.losses):
            print(f"step {step}: weighted loss {loss:.6f}")
        print(f"first-step grad norm {result.grad_norm_first_step:.6f}")
        return 0
    except AdapterError as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
