#!/usr/bin/env python3
"""
Compare three ways of scheduling one layer:
- the single-level nest (no blocking at all),
- stochastic beam search over orders and tile extents,
- full enumeration, when the candidate space is small enough to afford it.

Prints the winning blocking string for each and the energy gap.  Useful for
getting a feel for how much of the win comes from just one extra level.
"""
from __future__ import annotations

import argparse
import time

from convblock.model import LayerShape, builtin_benchmarks
from convblock.optimize import (
    SearchConfig,
    optimize_beam,
    optimize_exhaustive,
    unblocked_result,
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


def show(tag: str, res, base: float, secs: float) -> None:
    print(f"{tag:<11} {res.total_pj:14,.0f} pJ  "
          f"(x{base / res.total_pj:6.2f} vs unblocked, "
          f"{res.evaluated:>7,} evaluated, {secs:5.1f}s)")
    print(f"            {res.rendered}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--layer", default="32x32x16x16x3x3")
    ap.add_argument("--levels", type=int, default=2)
    ap.add_argument("--beam-width", type=int, default=64)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--budget-kb", type=float, default=None)
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--skip-exhaustive", action="store_true",
                    help="for layers with many divisors this saves a long wait")
    args = ap.parse_args()

    layer = parse_layer(args.layer)
    budget = int(args.budget_kb * 1024) if args.budget_kb else None
    print(f"layer {layer.name}, {layer.total_macs:,} MACs, "
          f"budget {args.budget_kb or 'none'} KB\n")

    flat = unblocked_result(layer, budget_bytes=budget)
    print(f"{'unblocked':<11} {flat.total_pj:14,.0f} pJ")
    print(f"            {flat.rendered}")

    best = None
    t0 = time.monotonic()
    for seed in range(args.seeds):
        cfg = SearchConfig(levels=args.levels, beam_width=args.beam_width,
                           seed=seed, threads=args.threads,
                           budget_bytes=budget)
        res = optimize_beam(layer, cfg)
        if best is None or res.total_pj < best.total_pj:
            best = res
    show("beam", best, flat.total_pj, time.monotonic() - t0)

    if not args.skip_exhaustive:
        t0 = time.monotonic()
        cfg = SearchConfig(search="exhaustive", levels=args.levels,
                           threads=args.threads, budget_bytes=budget)
        exact = optimize_exhaustive(layer, cfg)
        show("exhaustive", exact, flat.total_pj, time.monotonic() - t0)
        gap = best.total_pj / exact.total_pj - 1.0
        print(f"\nbeam lands within {gap * 100:.2f}% of the optimum")


if __name__ == "__main__":
    main()
