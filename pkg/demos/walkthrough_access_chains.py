#!/usr/bin/env python3
"""
Walk through the access analysis for one blocked layer:
- parse and validate a blocking string,
- print the per-buffer reuse chains (footprint, serves, refills),
- price the schedule and show where the picojoules go.
"""
from __future__ import annotations

import argparse

from convblock.analysis import access_counts, derive_buffers, schedule_energy
from convblock.model import (
    LayerShape,
    builtin_benchmarks,
    parse_blocking,
    render_blocking,
    unblocked_string,
    validate_blocking,
)

KIND_LABEL = {"IB": "inputs", "KB": "kernels", "OB": "outputs"}


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
    ap.add_argument("--layer", default="8x8x4x4x3x3",
                    help="benchmark name or XxYxCxKxFwxFh[xN]")
    ap.add_argument("--blocking", default=None,
                    help="blocking string; defaults to the single-level nest")
    ap.add_argument("--budget-kb", type=float, default=None,
                    help="on-chip capacity budget for pricing")
    args = ap.parse_args()

    layer = parse_layer(args.layer)
    if args.blocking:
        bs = parse_blocking(args.blocking)
        problems = validate_blocking(bs, layer)
        if problems:
            raise SystemExit("invalid blocking: " + "; ".join(problems))
    else:
        bs = unblocked_string(layer)

    print(f"layer    {layer.name}: {layer.x}x{layer.y} image, "
          f"{layer.c}->{layer.k} channels, {layer.fw}x{layer.fh} window, "
          f"batch {layer.n}")
    print(f"blocking {render_blocking(bs)}")
    print(f"macs     {layer.total_macs:,}")
    print()

    counts = access_counts(bs, layer)
    for kind in ("IB", "KB", "OB"):
        rows = [p for p in counts["per_buffer"] if p.kind == kind]
        print(f"{kind} ({KIND_LABEL[kind]}), innermost level first:")
        if not rows:
            print("   no reuse level survives; every access goes to DRAM")
        for p in rows:
            rr = p.reads_served / p.elements_read_from_parent
            print(f"   L{p.level}: footprint {p.size_elements:>8} elems"
                  f"   serves {p.reads_served:>10,}"
                  f"   refills {p.elements_read_from_parent:>10,}"
                  f"   reuse x{rr:g}")
        print()

    print("DRAM element traffic:")
    print(f"   reads  {dict(counts['dram_reads'])}")
    print(f"   writes {dict(counts['dram_writes'])}")
    print()

    budget = int(args.budget_kb * 1024) if args.budget_kb else None
    rep = schedule_energy(bs, layer, budget_bytes=budget)
    print(f"energy at {'%.0f KB budget' % args.budget_kb if budget else 'free capacity'}:")
    print(f"   buffers {rep.buffer_pj:14,.0f} pJ")
    print(f"   dram    {rep.dram_pj:14,.0f} pJ")
    print(f"   macs    {rep.mac_pj:14,.0f} pJ")
    print(f"   total   {rep.total_pj:14,.0f} pJ   ({rep.pj_per_mac:.3f} pJ/MAC)")
    for be in rep.per_buffer:
        print(f"     {be.kind} L{be.level:<2} {be.size_bytes:>10,} B"
              f"  @ {be.unit_pj:7.3f} pJ -> {be.pj:14,.0f} pJ"
              f"   [{be.location}]")


if __name__ == "__main__":
    main()
