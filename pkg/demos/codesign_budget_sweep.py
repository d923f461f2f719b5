#!/usr/bin/env python3
"""
Co-design a buffer hierarchy for a set of layers under a silicon budget.

For each layer the search first finds its favourite schedules and reads off
the buffer capacities each one wants (its "signature").  Every signature then
becomes a candidate hierarchy that all layers must share; whichever candidate
minimises the summed energy wins.  Sweeping the budget shows how much shared
silicon the layer set actually needs before returns flatten out.

The default set (conv3..conv5) keeps the sweep under a minute.  Add conv1 or
conv2 for the full picture and expect a few minutes per budget.
"""
from __future__ import annotations

import argparse
import time
from dataclasses import replace

from convblock.codesign import DEFAULT_CODESIGN_CFG, joint_select
from convblock.model import UnschedulableError, builtin_benchmarks


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--layers", default="conv3,conv4,conv5")
    ap.add_argument("--budgets-kb", default="64,256,1024")
    ap.add_argument("--beam-width", type=int,
                    default=DEFAULT_CODESIGN_CFG.beam_width)
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--top-k", type=int, default=10,
                    help="schedule signatures kept per layer")
    args = ap.parse_args()

    bench = builtin_benchmarks()
    layers = [bench[name] for name in args.layers.split(",")]
    cfg = replace(DEFAULT_CODESIGN_CFG, beam_width=args.beam_width,
                  threads=args.threads)

    prev = None
    for kb in (float(tok) for tok in args.budgets_kb.split(",")):
        budget = int(kb * 1024)
        t0 = time.monotonic()
        try:
            point = joint_select(layers, budget, cfg=cfg, top_k=args.top_k)
        except UnschedulableError as exc:
            print(f"budget {kb:7.0f} KB: no feasible hierarchy ({exc})")
            continue
        secs = time.monotonic() - t0
        caps = " + ".join(f"{b:,}B" for b in point.capacities_bytes)
        gain = "" if prev is None else f"  ({prev / point.total_pj:.3f}x vs prev)"
        print(f"budget {kb:7.0f} KB: {point.total_pj:12.4e} pJ{gain}   "
              f"[{secs:.0f}s]")
        print(f"    sram levels: {caps} @ {point.width_bits}b ports")
        for name, pj in point.per_layer_pj.items():
            print(f"    {name:<7} {pj:12.4e} pJ   {point.schedules[name]}")
        prev = point.total_pj


if __name__ == "__main__":
    main()
