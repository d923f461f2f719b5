"""Multicore partitioning: unroll one blocked loop across cores.

``K_PARTITION`` spreads output channels over cores: kernels and outputs split
into per-core slices while every core consumes the same inputs, so the input
buffer at the unrolled loop becomes a single shared structure whose reads are
broadcasts.  ``XY_PARTITION`` spreads output tiles: inputs and outputs slice,
kernels are shared and broadcast.  Partitioning input channels would make
every core produce partial sums for every output and is rejected.

Pricing keeps every access count of the single-core model (so MACs and DRAM
traffic are invariant) and only moves accesses between price classes:
per-core slices cost an access of a 1/S-sized memory, broadcasts cost an
access of a memory as large as all on-chip storage, and K-partitioned runs
pay a final output shuffle through the last on-chip level.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Mapping, Sequence

from .model import (
    BUFFER_KINDS,
    BlockingString,
    ConvblockError,
    EnergyTable,
    InfeasiblePartitionError,
    LayerShape,
    Loop,
    render_blocking,
)
from .analysis import (
    _chain_intakes,
    _raw_chains,
    budget_spill,
    codesign_width,
    derive_buffers,
    energy_per_access,
    refine_chain,
)

SCHEMES = ("K_PARTITION", "XY_PARTITION")

_SCHEME_DIMS = {"K_PARTITION": ("K",), "XY_PARTITION": ("X", "Y")}
_SHARED_KIND = {"K_PARTITION": "IB", "XY_PARTITION": "KB"}

CSV_COLUMNS = ("scheme", "S", "private_pj", "shared_pj", "broadcast_pj",
               "shuffle_pj", "dram_pj", "total_pj")


@dataclass(frozen=True)
class MulticorePlan:
    scheme: str
    cores: int
    blocking: BlockingString
    cut_position: int | None
    shared_kind: str
    onchip_bytes: int
    private_pj: float
    shared_pj: float
    broadcast_pj: float
    shuffle_pj: float
    dram_pj: float
    mac_pj: float
    total_pj: float
    pj_per_mac: float
    mac_count: int
    dram_reads: Mapping[str, int]
    dram_writes: Mapping[str, int]

    def to_json(self) -> dict:
        return {
            "scheme": self.scheme,
            "cores": self.cores,
            "blocking": render_blocking(self.blocking),
            "cut_position": self.cut_position,
            "shared_kind": self.shared_kind,
            "onchip_bytes": self.onchip_bytes,
            "private_pj": self.private_pj,
            "shared_pj": self.shared_pj,
            "broadcast_pj": self.broadcast_pj,
            "shuffle_pj": self.shuffle_pj,
            "dram_pj": self.dram_pj,
            "mac_pj": self.mac_pj,
            "total_pj": self.total_pj,
            "pj_per_mac": self.pj_per_mac,
            "dram_reads": dict(self.dram_reads),
            "dram_writes": dict(self.dram_writes),
        }

    def csv_row(self) -> str:
        return ",".join([self.scheme, str(self.cores)]
                        + [f"{getattr(self, c):.6f}" for c in CSV_COLUMNS[2:]])


def broadcast_energy(total_onchip_bytes: int, table: EnergyTable | None = None) -> float:
    """Per-word cost of a broadcast: one access of an all-on-chip-sized memory."""
    table = table or EnergyTable.default()
    return energy_per_access(total_onchip_bytes, codesign_width(table), table)


def shuffle_energy(layer: LayerShape, level_bytes: int,
                   table: EnergyTable | None = None) -> float:
    """Cost of exchanging every output once (read + write) through a level."""
    table = table or EnergyTable.default()
    unit = energy_per_access(level_bytes, codesign_width(table), table)
    return 2.0 * layer.output_elements * unit


def _cut_realizations(loops: list[tuple[str, int]], scheme: str,
                      cores: int) -> list[tuple[list[tuple[str, int]], int]]:
    """Ways to make some scheme-dim loop run exactly ``cores`` trips at the cut.

    A loop with a larger trip count is split so its outer part has ``cores``
    trips.  Outermost occurrences first.
    """
    dims = _SCHEME_DIMS[scheme]
    out = []
    for p in range(len(loops) - 1, -1, -1):
        d, ext = loops[p]
        if d not in dims:
            continue
        prev = 1
        for j in range(p):
            if loops[j][0] == d:
                prev = loops[j][1]
        trip = ext // prev
        if trip == cores:
            out.append((list(loops), p))
        elif trip > cores and trip % cores == 0:
            split = loops[:p] + [(d, ext // cores), (d, ext)] + loops[p + 1:]
            out.append((split, p + 1))
    return out


def _partition_buckets(loops: list[tuple[str, int]], layer: LayerShape,
                       table: EnergyTable, width: int, cores: int,
                       scheme: str, p_cut: int | None,
                       budget_bytes: int | None) -> dict:
    """Linkwise energy, bucketed into private/shared/broadcast/shuffle/dram."""
    raw, trips = _raw_chains(loops, layer)
    barrier = p_cut if (p_cut is not None and cores > 1) else None
    shared_kind = _SHARED_KIND[scheme]
    wm = table.write_multiplier
    bits = layer.element_bits

    chains = {}
    flat_sizes, flat_reads, flat_kinds, flat_lvls = [], [], [], []
    for kind in BUFFER_KINDS:
        chain = refine_chain(raw[kind], kind, loops, trips, barrier=barrier)
        chains[kind] = (chain, _chain_intakes(chain, kind, loops, trips))
        for lvl, e in enumerate(chain):
            flat_sizes.append(-(-e[1] * bits // 8))
            flat_reads.append(e[2])
            flat_kinds.append(kind)
            flat_lvls.append(lvl)
    flags = budget_spill(flat_sizes, flat_reads, flat_kinds, flat_lvls,
                         budget_bytes, table.dram_boundary_kb * 1024)
    spilled = {(flat_kinds[i], flat_lvls[i]): flags[i] for i in range(len(flags))}

    def klass(kind: str, positions: tuple[int, ...]) -> str:
        if barrier is None or positions[-1] < barrier:
            return "private"
        if kind == shared_kind:
            # the level that contains the cut loop is the broadcast hub
            return "shared_hub" if positions[0] <= barrier else "shared"
        return "sliced"

    # chip storage: per-core copies below the cut, one shared/sliced aggregate
    # at and above it; levels living in DRAM are not silicon
    onchip = 0
    for kind in BUFFER_KINDS:
        for lvl, e in enumerate(chains[kind][0]):
            if spilled[(kind, lvl)]:
                continue
            nbytes = -(-e[1] * bits // 8)
            onchip += nbytes * (cores if klass(kind, tuple(e[0])) == "private"
                                and barrier is not None else 1)
    e_bcast = broadcast_energy(max(onchip, 1), table) if barrier is not None else 0.0

    buckets = {"private_pj": 0.0, "shared_pj": 0.0, "broadcast_pj": 0.0,
               "shuffle_pj": 0.0, "dram_pj": 0.0}
    macs = layer.total_macs
    dram_reads: dict[str, int] = {}
    dram_writes: dict[str, int] = {}
    shuffle_ob_bytes = None

    for kind in BUFFER_KINDS:
        chain, intakes = chains[kind]
        is_ob = kind == "OB"
        if not chain:
            direct = macs * table.dram_pj * ((1 + wm) if is_ob else 1)
            buckets["dram_pj"] += direct
            dram_reads[kind] = macs
            if is_ob:
                dram_writes[kind] = macs
            continue
        n = len(chain)
        # price, bucket, and DRAM-residency per level
        level_price: list[tuple[float, str, bool]] = []
        for lvl, e in enumerate(chain):
            if spilled[(kind, lvl)]:
                level_price.append((table.dram_pj, "dram_pj", True))
                continue
            cls = klass(kind, tuple(e[0]))
            nbytes = -(-e[1] * bits // 8)
            if cls == "private":
                level_price.append((energy_per_access(nbytes, width, table),
                                    "private_pj", False))
            elif cls == "sliced":
                slice_bytes = max(1, -(-nbytes // cores))
                level_price.append((energy_per_access(slice_bytes, width, table),
                                    "private_pj", False))
            elif cls == "shared_hub":
                level_price.append((e_bcast, "broadcast_pj", False))
            else:
                level_price.append((energy_per_access(nbytes, width, table),
                                    "shared_pj", False))
            if is_ob:
                shuffle_ob_bytes = nbytes
        for lvl in range(n):
            unit, bucket, here_dram = level_price[lvl]
            below_dram = level_price[lvl - 1][2] if lvl > 0 else False
            above_dram = level_price[lvl + 1][2] if lvl + 1 < n else True
            serve_half = fill_half = 0.0
            if not (here_dram and below_dram):
                serve_half = chain[lvl][2] * unit * ((1 + wm) if is_ob else 1)
            if not (here_dram and above_dram):
                fill_half = intakes[lvl] * unit * ((wm + 1) if is_ob else wm)
            if bucket == "broadcast_pj":
                buckets["broadcast_pj"] += serve_half
                buckets["shared_pj"] += fill_half
            else:
                buckets[bucket] += serve_half + fill_half
        top_intake = intakes[-1]
        if not level_price[-1][2]:
            buckets["dram_pj"] += top_intake * table.dram_pj * ((1 + wm) if is_ob else 1)
        dram_reads[kind] = top_intake
        if is_ob:
            dram_writes[kind] = top_intake

    if scheme == "K_PARTITION" and barrier is not None:
        if shuffle_ob_bytes is not None:
            buckets["shuffle_pj"] = shuffle_energy(layer, shuffle_ob_bytes, table)
        else:
            buckets["shuffle_pj"] = (2.0 * layer.output_elements * table.dram_pj)

    buckets["onchip_bytes"] = onchip
    buckets["dram_reads"] = dram_reads
    buckets["dram_writes"] = dram_writes
    return buckets


def apply_partition(bs: BlockingString, layer: LayerShape, scheme: str,
                    cores: int, *, table: EnergyTable | None = None,
                    width_bits: int | None = None,
                    cut_position: int | None = None,
                    budget_bytes: int | None = None) -> MulticorePlan:
    """Price a schedule unrolled over ``cores`` cores under one scheme.

    With one core the plan is the plain co-designed schedule (no broadcast,
    no shuffle).  The unrolled loop must cover the scheme dimension with
    exactly ``cores`` trips; an occurrence with more trips is split.
    """
    if scheme == "C_PARTITION":
        raise InfeasiblePartitionError(
            "partitioning input channels makes every core emit partial sums "
            "for all outputs; pick K_PARTITION or XY_PARTITION")
    if scheme not in SCHEMES:
        raise ConvblockError(f"unknown scheme {scheme!r}")
    if cores < 1:
        raise ConvblockError("cores must be >= 1")
    table = table or EnergyTable.default()
    width = width_bits if width_bits is not None else codesign_width(table)
    loops = [(lp.dim, lp.extent) for lp in bs.loops]

    if cores == 1:
        buckets = _partition_buckets(loops, layer, table, width, 1, scheme,
                                     None, budget_bytes)
        final_loops, p_cut = loops, None
    else:
        options = _cut_realizations(loops, scheme, cores)
        if cut_position is not None:
            options = [(lp, p) for lp, p in options if p == cut_position]
        if not options:
            raise InfeasiblePartitionError(
                f"no {scheme} loop can be unrolled {cores} ways in "
                f"{render_blocking(bs)!r}")
        best = None
        for cand_loops, p in options:
            b = _partition_buckets(cand_loops, layer, table, width, cores,
                                   scheme, p, budget_bytes)
            tot = sum(b[k] for k in ("private_pj", "shared_pj", "broadcast_pj",
                                     "shuffle_pj", "dram_pj"))
            if best is None or tot < best[0]:
                best = (tot, cand_loops, p, b)
        _, final_loops, p_cut, buckets = best

    macs = layer.total_macs
    mac_pj = macs * table.mac_pj
    total = mac_pj + sum(buckets[k] for k in ("private_pj", "shared_pj",
                                              "broadcast_pj", "shuffle_pj", "dram_pj"))
    return MulticorePlan(
        scheme=scheme, cores=cores,
        blocking=BlockingString(tuple(Loop(d, e) for d, e in final_loops)),
        cut_position=p_cut, shared_kind=_SHARED_KIND[scheme],
        onchip_bytes=buckets["onchip_bytes"],
        private_pj=buckets["private_pj"], shared_pj=buckets["shared_pj"],
        broadcast_pj=buckets["broadcast_pj"], shuffle_pj=buckets["shuffle_pj"],
        dram_pj=buckets["dram_pj"], mac_pj=mac_pj, total_pj=total,
        pj_per_mac=total / macs, mac_count=macs,
        dram_reads=buckets["dram_reads"], dram_writes=buckets["dram_writes"])


def scheme_sharing_largest_buffer(bs: BlockingString, layer: LayerShape) -> str:
    """The scheme that turns the schedule's largest buffer into the shared one."""
    allocs = derive_buffers(bs, layer)
    if not allocs:
        return "K_PARTITION"
    largest = max(allocs, key=lambda a: (a.size_bytes, a.kind))
    if largest.kind == "KB":
        return "XY_PARTITION"
    if largest.kind == "IB":
        return "K_PARTITION"
    by_kind = {k: 0 for k in BUFFER_KINDS}
    for a in allocs:
        by_kind[a.kind] += a.size_bytes
    return "XY_PARTITION" if by_kind["KB"] >= by_kind["IB"] else "K_PARTITION"


def multicore_report(layer: LayerShape, bs: BlockingString, *,
                     schemes: Sequence[str] = SCHEMES,
                     cores: Sequence[int] = (1, 2, 4, 8),
                     table: EnergyTable | None = None,
                     width_bits: int | None = None,
                     budget_bytes: int | None = None) -> list[MulticorePlan]:
    """Cross product of schemes and core counts for one schedule."""
    plans = []
    for scheme in schemes:
        for s in cores:
            plans.append(apply_partition(bs, layer, scheme, s, table=table,
                                         width_bits=width_bits,
                                         budget_bytes=budget_bytes))
    return plans


def plans_to_csv(plans: Sequence[MulticorePlan]) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for p in plans:
        buf.write(p.csv_row() + "\n")
    return buf.getvalue()
