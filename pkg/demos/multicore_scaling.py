#!/usr/bin/env python3
"""
Partition one schedule across cores and watch the energy split move.

Two sharing schemes are on offer: K_PARTITION gives every core a slice of the
kernels and lets the cores share the input buffer (finished outputs then hop
cores once per slice, the "shuffle" column); XY_PARTITION gives every core an
image tile and shares the kernel buffer via broadcast.  With a roomy budget
(the conv1 default here) energy per MAC stays flat as cores are added: work
per core shrinks and the shared structure is billed once.  Under tight
budgets expect a wobble at core counts that force an outer loop to be split —
the split inserts a tile level with its own refill traffic.
"""
from __future__ import annotations

import argparse
import sys

from convblock.model import InfeasiblePartitionError, builtin_benchmarks, LayerShape
from convblock.optimize import SearchConfig, optimize
from convblock.parallel import (
    SCHEMES,
    multicore_report,
    plans_to_csv,
    scheme_sharing_largest_buffer,
)


def parse_layer(text: str) -> LayerShape:
    bench = builtin_benchmarks()
    if text in bench:
        return bench[text]
    parts = [int(p) for p in text.split("x")]
    if len(parts) == 6:
        parts.append(1)
    x, y, c, k, fw, fh, n = parts
    return LayerShape(f"cli{text}", x, y, c, k, fw, fh, n=n)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--layer", default="conv1")
    ap.add_argument("--cores", default="1,2,4,8")
    ap.add_argument("--budget-kb", type=float, default=8192)
    ap.add_argument("--beam-width", type=int, default=64)
    ap.add_argument("--scheme", choices=("auto",) + tuple(SCHEMES),
                    default="auto")
    ap.add_argument("--csv", action="store_true")
    args = ap.parse_args()

    layer = parse_layer(args.layer)
    budget = int(args.budget_kb * 1024)
    cores = tuple(int(s) for s in args.cores.split(","))

    cfg = SearchConfig(levels=2, beam_width=args.beam_width, seed=0,
                       threads=4, budget_bytes=budget)
    best = optimize(layer, cfg)
    scheme = (scheme_sharing_largest_buffer(best.blocking, layer)
              if args.scheme == "auto" else args.scheme)
    print(f"layer {layer.name}, schedule {best.rendered}", file=sys.stderr)
    print(f"scheme {scheme} (largest buffer stays shared)", file=sys.stderr)

    try:
        plans = multicore_report(layer, best.blocking, schemes=(scheme,),
                                 cores=cores, budget_bytes=budget)
    except InfeasiblePartitionError as exc:
        raise SystemExit(f"cannot partition: {exc}")

    if args.csv:
        print(plans_to_csv(plans))
        return

    print(f"{'cores':>5} {'private':>12} {'shared':>12} {'broadcast':>12} "
          f"{'shuffle':>12} {'dram':>14} {'total':>14} {'pJ/MAC':>8}")
    for p in plans:
        print(f"{p.cores:>5} {p.private_pj:12.3e} {p.shared_pj:12.3e} "
              f"{p.broadcast_pj:12.3e} {p.shuffle_pj:12.3e} "
              f"{p.dram_pj:14.4e} {p.total_pj:14.4e} {p.pj_per_mac:8.4f}")


if __name__ == "__main__":
    main()
