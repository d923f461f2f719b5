"""Analytical buffer derivation, access counting, energy, and buffer packing.

Every loop of a blocking string can introduce one buffer level per data kind:

* an X, Y or N loop resweeps the kernels -> kernel buffer (KB),
* a C loop resweeps the partial outputs -> output buffer (OB),
* a K loop resweeps the inputs -> input buffer (IB),
* an Fw or Fh loop resweeps both inputs and partial outputs -> IB and OB.

The buffer owned at loop position ``p`` holds exactly the elements of its kind
touched strictly inside one iteration of ``p`` (inputs carry the sliding-window
halo), and serves that working set once per iteration of ``p`` over the whole
run.  Each level refills from the next level of the same kind above it, so a
level's reads equal the level below's refill volume; the top level refills
from DRAM once per change of its contents.  Levels that would be refilled as
often as they are read provide no reuse and are dropped; adjacent levels from
different dimensions with identical footprints are one physical buffer and are
merged.  Output buffers count update *pairs* (read + write per accumulation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Mapping, Sequence

from .model import (
    BUFFER_KINDS,
    OB_UPDATE_ACCESSES,
    BlockingString,
    ConvblockError,
    EnergyTable,
    LayerShape,
    MemLevel,
    MemoryHierarchy,
    UnschedulableError,
    validate_blocking,
)

# which loop dims emit which buffer kind
_EMITS = {"X": ("KB",), "Y": ("KB",), "N": ("KB",), "C": ("OB",),
          "K": ("IB",), "Fw": ("IB", "OB"), "Fh": ("IB", "OB")}

# dims whose outer trips change a kind's buffer contents (used for the top
# level's refill count; K does not change inputs, C/Fw/Fh do not change
# outputs, X/Y/N do not change kernels)
_CONTENT_DIMS = {
    "IB": frozenset({"X", "Y", "C", "N", "Fw", "Fh"}),
    "KB": frozenset({"C", "K", "Fw", "Fh"}),
    "OB": frozenset({"X", "Y", "K", "N"}),
}


def _kind_totals(layer: LayerShape) -> dict[str, int]:
    """Unique element count per kind for the whole layer (inputs unhaloed)."""
    return {"IB": layer.n * layer.x * layer.y * layer.c,
            "KB": layer.kernel_elements,
            "OB": layer.output_elements}


def _raw_chains(loops: Sequence[tuple[str, int]], layer: LayerShape):
    """Emission chains per kind before reuse filtering.

    Returns ``{kind: [[positions, footprint, serve], ...]}`` innermost first,
    plus the per-position trip counts.  ``serve`` counts elements (update pairs
    for OB) streamed out of the level across the whole run.
    """
    m = len(loops)
    trips = [0] * m
    prev = {d: 1 for d in ("X", "Y", "C", "K", "Fw", "Fh", "N")}
    for p, (dim, ext) in enumerate(loops):
        trips[p] = ext // prev[dim]
        prev[dim] = ext

    iters = [1] * (m + 1)
    for p in range(m - 1, -1, -1):
        iters[p] = iters[p + 1] * trips[p]

    chains: dict[str, list[list]] = {"IB": [], "KB": [], "OB": []}
    cx = cy = cc = ck = cn = cfw = cfh = 1
    for p, (dim, ext) in enumerate(loops):
        u_ib = (cx + cfw - 1) * (cy + cfh - 1) * cc * cn
        for kind in _EMITS[dim]:
            if kind == "KB":
                fp = serve_unit = cfw * cfh * cc * ck
            elif kind == "OB":
                fp = serve_unit = cx * cy * ck * cn
            else:
                serve_unit = u_ib
                if dim == "K":
                    fp = u_ib
                else:  # window loop: the buffer holds its own swept extent
                    nfw = ext if dim == "Fw" else cfw
                    nfh = ext if dim == "Fh" else cfh
                    fp = (cx + nfw - 1) * (cy + nfh - 1) * cc * cn
            chains[kind].append([[p], fp, iters[p] * serve_unit])
        if dim == "X":
            cx = ext
        elif dim == "Y":
            cy = ext
        elif dim == "C":
            cc = ext
        elif dim == "K":
            ck = ext
        elif dim == "N":
            cn = ext
        elif dim == "Fw":
            cfw = ext
        else:
            cfh = ext
    return chains, trips


def refine_chain(chain: list[list], kind: str,
                 loops: Sequence[tuple[str, int]], trips: Sequence[int],
                 barrier: int | None = None) -> list[list]:
    """Apply the drop/merge fixpoint to one kind's raw emission chain.

    Entries are ``[positions, footprint, serve]``.  The top level's refill
    volume is its footprint times the trips of every outer loop that changes
    its contents; inner levels refill as often as the level above serves.
    A ``barrier`` position forbids merging levels across it (used when the
    loop at that position is unrolled over cores).
    """
    chain = [list(e) for e in chain]
    content = _CONTENT_DIMS[kind]

    def intake(i: int) -> int:
        if i + 1 < len(chain):
            return chain[i + 1][2]
        top = chain[i]
        fills = 1
        for q in range(top[0][-1] + 1, len(loops)):
            if loops[q][0] in content:
                fills *= trips[q]
        return fills * top[1]

    changed = True
    while changed:
        changed = False
        for i in range(len(chain)):
            if chain[i][2] == intake(i):  # no reuse: pass-through level
                del chain[i]
                changed = True
                break
        if changed:
            continue
        for i in range(len(chain) - 1):
            a, b = chain[i], chain[i + 1]
            if barrier is not None and a[0][-1] < barrier <= b[0][0]:
                continue
            if a[1] == b[1] and loops[a[0][-1]][0] != loops[b[0][0]][0]:
                # same physical buffer swept by two different dims: one level
                chain[i] = [a[0] + b[0], a[1], a[2]]
                del chain[i + 1]
                changed = True
                break
    return chain


def _chain_intakes(chain: list[list], kind: str,
                   loops: Sequence[tuple[str, int]], trips: Sequence[int]) -> list[int]:
    out = []
    content = _CONTENT_DIMS[kind]
    for i, entry in enumerate(chain):
        if i + 1 < len(chain):
            out.append(chain[i + 1][2])
        else:
            fills = 1
            for q in range(entry[0][-1] + 1, len(loops)):
                if loops[q][0] in content:
                    fills *= trips[q]
            out.append(fills * entry[1])
    return out


def _loops_of(bs: BlockingString) -> list[tuple[str, int]]:
    return [(lp.dim, lp.extent) for lp in bs.loops]


def analyze_chains(bs: BlockingString, layer: LayerShape, check: bool = True):
    """Refined chains + intakes for each kind.

    Returns ``{kind: [(positions, footprint, serve, intake), ...]}``.
    """
    if check:
        problems = validate_blocking(bs, layer)
        if problems:
            raise ConvblockError("invalid blocking: " + "; ".join(problems))
    loops = _loops_of(bs)
    raw, trips = _raw_chains(loops, layer)
    out: dict[str, list[tuple[tuple[int, ...], int, int, int]]] = {}
    for kind in BUFFER_KINDS:
        chain = refine_chain(raw[kind], kind, loops, trips)
        intakes = _chain_intakes(chain, kind, loops, trips)
        out[kind] = [(tuple(e[0]), e[1], e[2], intakes[i]) for i, e in enumerate(chain)]
    return out


@dataclass(frozen=True)
class BufferAlloc:
    """One buffer level of one kind.  ``level`` 0 is innermost for its kind."""

    kind: str
    level: int
    position: int                 # innermost owning loop position
    positions: tuple[int, ...]    # all owning loop positions after merging
    size_elements: int
    size_bytes: int
    refetch_rate: Fraction        # reads served per element refilled from above


@dataclass(frozen=True)
class AccessProfile:
    """Traffic through one buffer level over the whole layer."""

    kind: str
    level: int
    size_elements: int
    reads_served: int             # reads toward compute / the level below
    writes: int                   # update write-backs into this level (OB only)
    elements_read_from_parent: int
    writeback_to_parent: int      # drained partials (OB only)
    fills: Fraction               # refills of the full footprint

    @property
    def total_accesses(self) -> int:
        return (self.reads_served + self.writes
                + self.elements_read_from_parent + self.writeback_to_parent)


def derive_buffers(bs: BlockingString, layer: LayerShape) -> list[BufferAlloc]:
    """All buffer levels implied by a blocking string, innermost first per kind.

    The refetch rate of a level is its reads divided by the reads of the level
    above (the whole-layer unique element count closes the top; output levels
    report read+write accesses per update, hence the factor 2).
    """
    chains = analyze_chains(bs, layer)
    totals = _kind_totals(layer)
    allocs: list[BufferAlloc] = []
    for kind in BUFFER_KINDS:
        chain = chains[kind]
        for lvl, (positions, fp, serve, _intake) in enumerate(chain):
            nxt = chain[lvl + 1][2] if lvl + 1 < len(chain) else totals[kind]
            rr = Fraction(serve, nxt)
            if kind == "OB":
                rr *= OB_UPDATE_ACCESSES
            allocs.append(BufferAlloc(kind, lvl, positions[0], positions, fp,
                                      layer.bytes_of(fp), rr))
    return allocs


def access_counts(bs: BlockingString, layer: LayerShape) -> dict:
    """Exact whole-layer access counts per buffer plus DRAM traffic and MACs.

    DRAM reads are the top level's refill volume per kind (an empty chain
    means compute streams that kind straight from DRAM, one access per MAC);
    output drains add the same volume of DRAM writes.
    """
    chains = analyze_chains(bs, layer)
    macs = layer.total_macs
    profiles: list[AccessProfile] = []
    dram_reads: dict[str, int] = {}
    dram_writes: dict[str, int] = {}
    for kind in BUFFER_KINDS:
        chain = chains[kind]
        for lvl, (positions, fp, serve, intake) in enumerate(chain):
            if kind == "OB":
                profiles.append(AccessProfile(kind, lvl, fp, serve, serve,
                                              intake, intake, Fraction(intake, fp)))
            else:
                profiles.append(AccessProfile(kind, lvl, fp, serve, 0,
                                              intake, 0, Fraction(intake, fp)))
        if chain:
            top_intake = chain[-1][3]
            dram_reads[kind] = top_intake
            if kind == "OB":
                dram_writes[kind] = top_intake
        else:
            dram_reads[kind] = macs
            if kind == "OB":
                dram_writes[kind] = macs
    return {
        "per_buffer": profiles,
        "dram_reads": dram_reads,
        "dram_writes": dram_writes,
        "mac_count": macs,
    }


# ---------------------------------------------------------------------------
# Energy lookup


def _snap_width(width_bits: int, widths: Sequence[int]) -> int:
    chosen = widths[0]
    for w in widths:
        if w <= width_bits:
            chosen = w
    return chosen


@lru_cache(maxsize=None)
def _cached_energy(size_bytes: int, width_bits: int, table: EnergyTable) -> float:
    sizes = table.sizes_kb()
    widths = table.widths()
    w = _snap_width(width_bits, widths)
    kb = size_bytes / 1024.0
    if kb > table.dram_boundary_kb:
        return table.dram_pj
    col = [table.sram_pj[s][w] for s in sizes]
    if kb <= sizes[0]:
        # extrapolate the first interval's log-log slope below the table,
        # clamped at the floor
        if len(sizes) < 2 or kb <= 0:
            return max(col[0], table.subkb_floor_pj) if kb >= sizes[0] else table.subkb_floor_pj
        slope = math.log(col[1] / col[0]) / math.log(sizes[1] / sizes[0])
        val = col[0] * (kb / sizes[0]) ** slope
        return max(val, table.subkb_floor_pj)
    for lo, hi in zip(range(len(sizes) - 1), range(1, len(sizes))):
        if sizes[lo] <= kb <= sizes[hi]:
            if kb == sizes[lo]:
                return col[lo]
            if kb == sizes[hi]:
                return col[hi]
            t = math.log(kb / sizes[lo]) / math.log(sizes[hi] / sizes[lo])
            return col[lo] * (col[hi] / col[lo]) ** t
    # between the largest SRAM row and the DRAM boundary
    lo_kb, lo_pj = sizes[-1], col[-1]
    hi_kb, hi_pj = float(table.dram_boundary_kb), table.dram_pj
    if kb >= hi_kb:
        return table.dram_pj
    t = math.log(kb / lo_kb) / math.log(hi_kb / lo_kb)
    return lo_pj * (hi_pj / lo_pj) ** t


def energy_per_access(size_bytes: int, width_bits: int,
                      table: EnergyTable | None = None) -> float:
    """pJ for one 16-bit access of a memory of the given capacity and port width.

    Width snaps down to the nearest table column (narrower-than-table widths
    clamp up to the narrowest column).  Capacity interpolates log-log between
    table rows, extends from the largest row toward the DRAM boundary cost,
    and extrapolates below the smallest row with a floor.
    """
    return _cached_energy(int(size_bytes), int(width_bits), table or EnergyTable.default())


# ---------------------------------------------------------------------------
# Packing onto a fixed hierarchy


@dataclass(frozen=True)
class PoolAssignment:
    kind: str
    level: int
    size_bytes: int
    pool_index: int | None        # None = spilled to DRAM


@dataclass(frozen=True)
class PackingPlan:
    assignments: tuple[PoolAssignment, ...]
    occupancy_bytes: tuple[int, ...]

    def pool_of(self, kind: str, level: int) -> int | None:
        for a in self.assignments:
            if a.kind == kind and a.level == level:
                return a.pool_index
        raise KeyError((kind, level))

    @property
    def spilled(self) -> tuple[PoolAssignment, ...]:
        return tuple(a for a in self.assignments if a.pool_index is None)


def pack_buffers(buffers: Sequence[BufferAlloc], profiles: Sequence[AccessProfile],
                 hierarchy: MemoryHierarchy) -> PackingPlan:
    """Greedy placement of buffer levels into fixed pools.

    Most-read buffers claim pools first; each kind walks the pools outward and
    never returns inward, so a buffer sits at least as far out as the hotter
    levels of its own kind.  Whatever fits nowhere lives in DRAM.  If nothing
    at all fits on chip the schedule is unschedulable on this hierarchy.
    """
    reads = {(p.kind, p.level): p.reads_served for p in profiles}
    order = sorted(range(len(buffers)),
                   key=lambda i: (-reads[(buffers[i].kind, buffers[i].level)],
                                  -buffers[i].size_bytes, buffers[i].kind, buffers[i].level))
    pools = hierarchy.pools
    remaining = [p.capacity_bytes for p in pools]
    pointer = {kind: 0 for kind in BUFFER_KINDS}
    placed: dict[int, int | None] = {}
    for idx in order:
        buf = buffers[idx]
        spot = None
        for j in range(pointer[buf.kind], len(pools)):
            if pools[j].allows(buf.kind) and remaining[j] >= buf.size_bytes:
                spot = j
                break
        placed[idx] = spot
        if spot is not None:
            remaining[spot] -= buf.size_bytes
            pointer[buf.kind] = spot
    assignments = tuple(PoolAssignment(b.kind, b.level, b.size_bytes, placed[i])
                        for i, b in enumerate(buffers))
    if buffers and all(a.pool_index is None for a in assignments):
        raise UnschedulableError("no buffer fits any on-chip pool")
    occupancy = tuple((p.capacity_bytes or 0) - r for p, r in zip(pools, remaining))
    return PackingPlan(assignments, occupancy)


def budget_spill(sizes: Sequence[int], reads: Sequence[int],
                 kinds: Sequence[str], levels: Sequence[int],
                 budget_bytes: int | None, boundary_bytes: int) -> list[bool]:
    """Which right-sized buffer levels live in DRAM under a silicon budget.

    Mirrors fixed-mode packing: the hottest levels claim silicon first; a
    level that exceeds the remaining budget, or is as large as the DRAM
    boundary itself, is not built and its traffic goes to DRAM instead.
    """
    n = len(sizes)
    spilled = [False] * n
    remaining = budget_bytes
    order = sorted(range(n), key=lambda i: (-reads[i], -sizes[i],
                                            kinds[i], levels[i]))
    for i in order:
        if sizes[i] >= boundary_bytes:
            spilled[i] = True
        elif remaining is not None:
            if sizes[i] <= remaining:
                remaining -= sizes[i]
            else:
                spilled[i] = True
    return spilled


# ---------------------------------------------------------------------------
# Whole-schedule energy


@dataclass(frozen=True)
class BufferEnergy:
    kind: str
    level: int
    size_bytes: int
    location: str                 # "sram:<pool or size>" | "dram"
    unit_pj: float
    accesses: int
    pj: float


@dataclass(frozen=True)
class EnergyReport:
    total_pj: float
    mac_pj: float
    dram_pj: float
    buffer_pj: float
    pj_per_mac: float
    mac_count: int
    per_buffer: tuple[BufferEnergy, ...]
    by_kind_dram_pj: Mapping[str, float]
    dram_reads: Mapping[str, int]
    dram_writes: Mapping[str, int]
    packing: PackingPlan | None = None

    def to_json(self) -> dict:
        return {
            "total_pj": self.total_pj,
            "mac_pj": self.mac_pj,
            "dram_pj": self.dram_pj,
            "buffer_pj": self.buffer_pj,
            "pj_per_mac": self.pj_per_mac,
            "mac_count": self.mac_count,
            "per_buffer": [{
                "kind": b.kind, "level": b.level, "size_bytes": b.size_bytes,
                "location": b.location, "unit_pj": b.unit_pj,
                "accesses": b.accesses, "pj": b.pj,
            } for b in self.per_buffer],
            "by_kind_dram_pj": dict(self.by_kind_dram_pj),
            "dram_reads": dict(self.dram_reads),
            "dram_writes": dict(self.dram_writes),
        }


def codesign_width(table: EnergyTable) -> int:
    return max(table.widths())


def schedule_energy(bs: BlockingString, layer: LayerShape, *,
                    mode: str = "codesign",
                    hierarchy: MemoryHierarchy | None = None,
                    table: EnergyTable | None = None,
                    width_bits: int | None = None,
                    budget_bytes: int | None = None) -> EnergyReport:
    """Total memory + MAC energy of one schedule.

    ``codesign`` prices every buffer level at its own capacity (widest table
    port by default); under ``budget_bytes`` only the hottest levels that fit
    the budget are built and the rest live in DRAM.  ``fixed`` packs levels
    into ``hierarchy`` pools first and prices each at its pool, with spilled
    levels living in DRAM.  Writes cost ``write_multiplier`` times a read.
    Data moving between two DRAM-resident levels is free (it never leaves
    DRAM).
    """
    table = table or EnergyTable.default()
    if mode not in ("codesign", "fixed"):
        raise ConvblockError(f"unknown mode {mode!r}")
    if mode == "fixed" and hierarchy is None:
        raise ConvblockError("fixed mode needs a hierarchy")

    chains = analyze_chains(bs, layer)
    counts = access_counts(bs, layer)
    profiles: list[AccessProfile] = counts["per_buffer"]
    buffers = derive_buffers(bs, layer)
    wm = table.write_multiplier
    width = width_bits if width_bits is not None else codesign_width(table)

    packing = None
    if mode == "fixed":
        packing = pack_buffers(buffers, profiles, hierarchy)

    # unit price, location label, lives-in-DRAM flag per (kind, level)
    price: dict[tuple[str, int], tuple[float, str, bool]] = {}
    if mode == "codesign":
        reads_of = {(p.kind, p.level): p.reads_served for p in profiles}
        spill = budget_spill([b.size_bytes for b in buffers],
                             [reads_of[(b.kind, b.level)] for b in buffers],
                             [b.kind for b in buffers],
                             [b.level for b in buffers],
                             budget_bytes, table.dram_boundary_kb * 1024)
    for i, b in enumerate(buffers):
        if mode == "codesign":
            if spill[i]:
                price[(b.kind, b.level)] = (table.dram_pj, "dram", True)
            else:
                price[(b.kind, b.level)] = (
                    energy_per_access(b.size_bytes, width, table),
                    f"sram:{b.size_bytes}B", False)
        else:
            pool_idx = packing.assignments[i].pool_index
            if pool_idx is None:
                price[(b.kind, b.level)] = (table.dram_pj, "dram", True)
            else:
                pool = hierarchy.pools[pool_idx]
                price[(b.kind, b.level)] = (
                    energy_per_access(pool.capacity_bytes, pool.word_bits, table),
                    f"pool:{pool_idx}", False)

    per_buffer: list[BufferEnergy] = []
    by_kind_dram = {k: 0.0 for k in BUFFER_KINDS}
    dram_total = 0.0
    buffer_total = 0.0

    # Every movement is a link between a level and its consumer / parent;
    # each endpoint pays for its half.  A link whose two endpoints are both
    # DRAM-resident moves nothing.
    for kind in BUFFER_KINDS:
        chain = chains[kind]
        is_ob = kind == "OB"
        if not chain:
            direct = counts["dram_reads"][kind] * table.dram_pj
            if is_ob:
                direct += counts["dram_writes"][kind] * wm * table.dram_pj
            dram_total += direct
            by_kind_dram[kind] += direct
            continue
        n = len(chain)
        units = [price[(kind, lvl)] for lvl in range(n)]
        serves = [e[2] for e in chain]
        intakes = [e[3] for e in chain]
        for lvl in range(n):
            unit, label, here_dram = units[lvl]
            below_dram = units[lvl - 1][2] if lvl > 0 else False
            above_dram = units[lvl + 1][2] if lvl + 1 < n else True
            pj = 0.0
            accesses = 0
            # consumer-side half: reads served downward (plus the update
            # write-back for outputs)
            if not (here_dram and below_dram):
                pj += serves[lvl] * unit * ((1 + wm) if is_ob else 1)
                accesses += serves[lvl] * (2 if is_ob else 1)
            # parent-side half: refill writes into this level (plus the drain
            # reads out of it for outputs)
            if not (here_dram and above_dram):
                pj += intakes[lvl] * unit * ((wm + 1) if is_ob else wm)
                accesses += intakes[lvl] * (2 if is_ob else 1)
            if here_dram:
                dram_total += pj
                by_kind_dram[kind] += pj
                row_pj = pj
            else:
                buffer_total += pj
                row_pj = pj
            per_buffer.append(BufferEnergy(kind, lvl, layer.bytes_of(chain[lvl][1]),
                                           label, unit, accesses, row_pj))
        # the ultimate parent (DRAM proper) pays for the top level's refills
        if not units[-1][2]:
            link = intakes[-1] * table.dram_pj * ((1 + wm) if is_ob else 1)
            dram_total += link
            by_kind_dram[kind] += link

    mac_total = counts["mac_count"] * table.mac_pj
    total = buffer_total + dram_total + mac_total
    return EnergyReport(total, mac_total, dram_total, buffer_total,
                        total / counts["mac_count"], counts["mac_count"],
                        tuple(per_buffer), by_kind_dram,
                        counts["dram_reads"], counts["dram_writes"], packing)
