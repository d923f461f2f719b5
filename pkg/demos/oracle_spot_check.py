#!/usr/bin/env python3
"""Spot-check the closed-form access model against the execution simulator.

Draws random small layers with random valid blockings, replays each schedule,
and diffs every per-level counter.  Any mismatch is printed verbatim; the run
exits nonzero if one occurs.  With --dump the last trace is shown in full so
you can eyeball what the simulator actually counted.
"""
from __future__ import annotations

import argparse
import random
import sys
import time

from convblock.model import LayerShape, divisors, render_blocking
from convblock.simulate import check_equivalence, simulate


def random_layer(rng: random.Random) -> LayerShape:
    x = rng.randint(1, 16)
    y = rng.randint(1, 16)
    c = rng.randint(1, 8)
    k = rng.randint(1, 8)
    fw = rng.choice((1, 3))
    fh = rng.choice((1, 3))
    n = rng.randint(1, 2)
    return LayerShape(f"r{x}x{y}x{c}x{k}", x, y, c, k, fw, fh, n=n)


def random_blocking(rng: random.Random, layer: LayerShape):
    # build a divisor chain per data dim, then riffle the window loops in
    from convblock.model import BlockingString, Loop

    loops: list[Loop] = []
    for dim, size in (("X", layer.x), ("Y", layer.y), ("C", layer.c),
                      ("K", layer.k), ("N", layer.n)):
        if size == 1 and rng.random() < 0.7:
            continue
        depth = rng.randint(1, 3)
        exts = [size]
        for _ in range(depth - 1):
            exts.append(rng.choice(divisors(exts[-1])))
        for e in reversed(exts):
            loops.append(Loop(dim, e))
    rng.shuffle(loops)
    merged: list[Loop] = []
    chain: dict[str, int] = {}
    for lp in loops:
        if chain.get(lp.dim, 0) > lp.extent:
            continue
        chain[lp.dim] = lp.extent
        merged.append(lp)
    for dim, size in (("Fw", layer.fw), ("Fh", layer.fh)):
        if size > 1:
            merged.insert(rng.randint(0, len(merged)), Loop(dim, size))
    return BlockingString(tuple(merged))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cases", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mode", choices=("walk", "literal"), default="walk",
                    help="walk replays loop arithmetic; literal touches arrays")
    ap.add_argument("--dump", action="store_true")
    args = ap.parse_args()

    rng = random.Random(args.seed)
    bad = 0
    start = time.monotonic()
    last = None
    for i in range(args.cases):
        layer = random_layer(rng)
        bs = random_blocking(rng, layer)
        last = (bs, layer)
        diffs = check_equivalence(bs, layer, mode=args.mode)
        if diffs:
            bad += 1
            print(f"[{i}] MISMATCH {layer.name} :: {render_blocking(bs)}")
            for d in diffs:
                print("     ", d)
    elapsed = time.monotonic() - start
    print(f"{args.cases} schedules, {bad} mismatches, "
          f"{elapsed:.1f}s ({args.mode} mode)")

    if args.dump and last is not None:
        bs, layer = last
        trace = simulate(bs, layer, mode=args.mode)
        print(f"\nlast trace: {layer.name} :: {render_blocking(bs)}")
        for lv in trace.levels:
            print(f"  {lv.kind} L{lv.level}: size {lv.size_elements}, "
                  f"served {lv.reads_served}, writes {lv.writes}, "
                  f"from parent {lv.elements_read_from_parent}, "
                  f"drained {lv.writeback_to_parent}")
        print(f"  dram reads {dict(trace.dram_reads)} "
              f"writes {dict(trace.dram_writes)}  macs {trace.mac_count}")

    sys.exit(1 if bad else 0)


if __name__ == "__main__":
    main()
