"""Execution-driven oracle for blocking-string access counts.

Two engines re-derive every buffer count without the closed-form reuse
algebra used by :mod:`convblock.analysis`:

* ``walk`` materialises the literal per-dimension index offsets each loop
  contributes, takes Minkowski sums to build the actual coordinate sets a
  subtree touches, and multiplies by literal trip counts.  It is exact at any
  layer size and fast (no per-iteration execution).
* ``literal`` actually runs the loop nest, collecting address tuples into
  sets per loop body instance and detecting buffer refills by comparing
  consecutive working sets.  It is the ground truth for small layers.

Both engines classify emissions the same trivial way (which loop dim resweeps
which operand) but count footprints, serves and refills from actual index
sets, so agreement with the analytical model is a real check of the halo,
reuse-chain, drop and merge rules.
"""

from __future__ import annotations

import itertools
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .model import (
    BlockingString,
    ConvblockError,
    LayerShape,
    validate_blocking,
)
from . import analysis as _analysis

_DIMS7 = ("N", "X", "Y", "C", "K", "Fw", "Fh")


def _addr_input(n, x, y, c, k, fw, fh):
    return (n, x + fw, y + fh, c)


def _addr_kernel(n, x, y, c, k, fw, fh):
    return (k, c, fw, fh)


def _addr_output(n, x, y, c, k, fw, fh):
    return (n, x, y, k)


ADDR_FNS: Mapping[str, Callable] = {"IB": _addr_input, "KB": _addr_kernel, "OB": _addr_output}

_EMITS = {"X": ("KB",), "Y": ("KB",), "N": ("KB",), "C": ("OB",),
          "K": ("IB",), "Fw": ("IB", "OB"), "Fh": ("IB", "OB")}


def _coordinate_dims(kind: str) -> list[tuple[str, ...]]:
    """Which dims feed each coordinate of a kind's address, found by probing."""
    fn = ADDR_FNS[kind]
    base = fn(*(0,) * 7)
    groups: list[list[str]] = [[] for _ in base]
    for di, dim in enumerate(_DIMS7):
        args = [0] * 7
        args[di] = 1
        probe = fn(*args)
        for j, (a, b) in enumerate(zip(base, probe)):
            if a != b:
                groups[j].append(dim)
    return [tuple(g) for g in groups]


_COORD_DIMS = {kind: _coordinate_dims(kind) for kind in ADDR_FNS}
_CONTENT_DIMS = {kind: frozenset(d for g in groups for d in g)
                 for kind, groups in _COORD_DIMS.items()}


@dataclass(frozen=True)
class SimLevel:
    kind: str
    level: int
    size_elements: int
    reads_served: int
    writes: int
    elements_read_from_parent: int
    writeback_to_parent: int


@dataclass(frozen=True)
class SimTrace:
    mode: str
    mac_count: int
    levels: tuple[SimLevel, ...]
    dram_reads: Mapping[str, int]
    dram_writes: Mapping[str, int]
    unique_elements: Mapping[str, int] = field(default_factory=dict)

    def level_map(self) -> dict[tuple[str, int], SimLevel]:
        return {(lv.kind, lv.level): lv for lv in self.levels}

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "mac_count": self.mac_count,
            "levels": [vars(lv) for lv in self.levels],
            "dram_reads": dict(self.dram_reads),
            "dram_writes": dict(self.dram_writes),
            "unique_elements": dict(self.unique_elements),
        }


def _contributions(loops: Sequence[tuple[str, int]]) -> list[tuple[str, tuple[int, ...]]]:
    """Literal index offsets each loop steps through (cumulative extents)."""
    prev: dict[str, int] = {}
    out = []
    for dim, ext in loops:
        step = prev.get(dim, 1)
        out.append((dim, tuple(range(0, ext, step))))
        prev[dim] = ext
    return out


def _minkowski(a: frozenset, b: Sequence[int]) -> frozenset:
    return frozenset(x + y for x in a for y in b)


def _refine(chain: list[list], loops: Sequence[tuple[str, int]],
            top_intake_of: Callable[[list], int]) -> tuple[list[list], list[int]]:
    """Drop no-reuse levels, merge different-dim same-footprint neighbours.

    Entries are ``[positions, footprint, serve]``; returns the surviving chain
    with per-level refill volumes.
    """
    chain = [list(e) for e in chain]

    def intake(i: int) -> int:
        if i + 1 < len(chain):
            return chain[i + 1][2]
        return top_intake_of(chain[i])

    while True:
        for i in range(len(chain)):
            if chain[i][2] == intake(i):
                del chain[i]
                break
        else:
            merged = False
            for i in range(len(chain) - 1):
                a, b = chain[i], chain[i + 1]
                if a[1] == b[1] and loops[a[0][-1]][0] != loops[b[0][0]][0]:
                    chain[i] = [a[0] + b[0], a[1], a[2]]
                    del chain[i + 1]
                    merged = True
                    break
            if not merged:
                break
    return chain, [intake(i) for i in range(len(chain))]


def _walk_engine(loops: Sequence[tuple[str, int]], layer: LayerShape):
    contribs = _contributions(loops)
    m = len(loops)
    trips = [len(offs) for _, offs in contribs]
    iters = [1] * (m + 1)
    for p in range(m - 1, -1, -1):
        iters[p] = iters[p + 1] * trips[p]

    def count(kind: str, sets: Mapping[str, frozenset]) -> int:
        total = 1
        for group in _COORD_DIMS[kind]:
            merged = frozenset([0])
            for d in group:
                merged = frozenset(x + y for x in merged for y in sets[d])
            total *= len(merged)
        return total

    sets: dict[str, frozenset] = {d: frozenset([0]) for d in _DIMS7}
    raw: dict[str, list[list]] = {"IB": [], "KB": [], "OB": []}
    for p, (dim, offs) in enumerate(contribs):
        for kind in _EMITS[dim]:
            inside = count(kind, sets)
            if dim in ("Fw", "Fh") and kind == "IB":
                grown = dict(sets)
                grown[dim] = _minkowski(sets[dim], offs)
                fp = count(kind, grown)
            else:
                fp = inside
            raw[kind].append([[p], fp, iters[p] * inside])
        sets[dim] = _minkowski(sets[dim], offs)

    uniques = {kind: count(kind, sets) for kind in ADDR_FNS}

    def topper(kind: str):
        content = _CONTENT_DIMS[kind]

        def top_intake(entry: list) -> int:
            fills = 1
            for q in range(entry[0][-1] + 1, m):
                if loops[q][0] in content:
                    fills *= trips[q]
            return fills * entry[1]
        return top_intake

    chains = {}
    for kind in ADDR_FNS:
        chain, intakes = _refine(raw[kind], loops, topper(kind))
        chains[kind] = [(tuple(e[0]), e[1], e[2], intakes[i]) for i, e in enumerate(chain)]
    return chains, iters[0], uniques


def _literal_engine(loops: Sequence[tuple[str, int]], layer: LayerShape, mac_cap: int):
    contribs = _contributions(loops)
    m = len(loops)
    macs = 1
    for _, offs in contribs:
        macs *= len(offs)
    if macs > mac_cap:
        raise ConvblockError(f"literal simulation of {macs} MACs exceeds cap {mac_cap}")

    dim_index = {d: i for i, d in enumerate(_DIMS7)}

    def iter_bases(start: int):
        """Dim-value bases over all iterations of loops at/above ``start``,
        in true execution order (outermost slowest)."""
        outer = contribs[start:]
        for combo in itertools.product(*[offs for _, offs in reversed(outer)]):
            vals = [0] * 7
            for (d, _), off in zip(reversed(outer), combo):
                vals[dim_index[d]] += off
            yield vals

    def inner_set(kind: str, p: int, base: Sequence[int]) -> frozenset:
        """Addresses one kind touches inside one body instance at ``p``."""
        fn = ADDR_FNS[kind]
        inner = contribs[:p]
        touched = set()
        for combo in itertools.product(*[offs for _, offs in reversed(inner)]):
            vals = list(base)
            for (d, _), off in zip(reversed(inner), combo):
                vals[dim_index[d]] += off
            touched.add(fn(*vals))
        return frozenset(touched)

    raw: dict[str, list[list]] = {"IB": [], "KB": [], "OB": []}
    epoch_intake: dict[tuple[str, int], int] = {}
    for p, (dim, offs) in enumerate(contribs):
        for kind in _EMITS[dim]:
            window = kind == "IB" and dim in ("Fw", "Fh")
            serve = 0
            for base in iter_bases(p):
                serve += len(inner_set(kind, p, base))
            # stored content: a window buffer holds its whole swept window
            q = p + 1 if window else p
            volume = 0
            fp_store = None
            prev = None
            for base in iter_bases(q):
                s = inner_set(kind, q, base)
                if fp_store is None:
                    fp_store = len(s)
                if s != prev:
                    volume += len(s)
                    prev = s
            raw[kind].append([[p], fp_store or 0, serve])
            epoch_intake[(kind, p)] = volume

    uniques = {kind: len(inner_set(kind, m, [0] * 7)) for kind in ADDR_FNS}
    body = sum(1 for _ in iter_bases(0))

    chains = {}
    for kind in ADDR_FNS:
        chain, intakes = _refine(
            raw[kind], loops,
            lambda entry, kind=kind: epoch_intake[(kind, entry[0][-1])])
        chains[kind] = [(tuple(e[0]), e[1], e[2], intakes[i]) for i, e in enumerate(chain)]
    return chains, body, uniques


def simulate(bs: BlockingString, layer: LayerShape, *, mode: str = "walk",
             mac_cap: int = 10 ** 8) -> SimTrace:
    """Replay a schedule and count every buffer's traffic independently."""
    problems = validate_blocking(bs, layer)
    if problems:
        raise ConvblockError("invalid blocking: " + "; ".join(problems))
    loops = [(lp.dim, lp.extent) for lp in bs.loops]
    if mode == "walk":
        chains, macs, uniques = _walk_engine(loops, layer)
    elif mode == "literal":
        chains, macs, uniques = _literal_engine(loops, layer, mac_cap)
    else:
        raise ConvblockError(f"unknown simulation mode {mode!r}")

    levels: list[SimLevel] = []
    dram_reads: dict[str, int] = {}
    dram_writes: dict[str, int] = {}
    for kind in ("IB", "KB", "OB"):
        chain = chains[kind]
        for lvl, (positions, fp, serve, intake) in enumerate(chain):
            if kind == "OB":
                levels.append(SimLevel(kind, lvl, fp, serve, serve, intake, intake))
            else:
                levels.append(SimLevel(kind, lvl, fp, serve, 0, intake, 0))
        if chain:
            dram_reads[kind] = chain[-1][3]
            if kind == "OB":
                dram_writes[kind] = chain[-1][3]
        else:
            dram_reads[kind] = macs
            if kind == "OB":
                dram_writes[kind] = macs
    return SimTrace(mode, macs, tuple(levels), dram_reads, dram_writes, uniques)


def check_equivalence(bs: BlockingString, layer: LayerShape, *, mode: str = "walk",
                      mac_cap: int = 10 ** 8) -> list[str]:
    """Compare the analytical counts against a simulator replay.

    Returns a list of human-readable differences; empty means exact agreement
    on MAC count, every buffer level's footprint and traffic, and DRAM volume.
    """
    trace = simulate(bs, layer, mode=mode, mac_cap=mac_cap)
    counts = _analysis.access_counts(bs, layer)
    diffs: list[str] = []
    if trace.mac_count != counts["mac_count"]:
        diffs.append(f"mac_count: sim {trace.mac_count} vs model {counts['mac_count']}")

    model_levels = {(p.kind, p.level): p for p in counts["per_buffer"]}
    sim_levels = trace.level_map()
    for key in sorted(set(model_levels) | set(sim_levels)):
        a, b = model_levels.get(key), sim_levels.get(key)
        if a is None or b is None:
            diffs.append(f"{key}: present only in {'model' if a else 'simulator'}")
            continue
        for fld in ("size_elements", "reads_served", "writes",
                    "elements_read_from_parent", "writeback_to_parent"):
            va, vb = getattr(a, fld), getattr(b, fld)
            if va != vb:
                diffs.append(f"{key} {fld}: sim {vb} vs model {va}")
    for kind in ("IB", "KB", "OB"):
        if counts["dram_reads"].get(kind) != trace.dram_reads.get(kind):
            diffs.append(f"dram reads {kind}: sim {trace.dram_reads.get(kind)} "
                         f"vs model {counts['dram_reads'].get(kind)}")
    if counts["dram_writes"].get("OB") != trace.dram_writes.get("OB"):
        diffs.append(f"dram writes OB: sim {trace.dram_writes.get('OB')} "
                     f"vs model {counts['dram_writes'].get('OB')}")
    return diffs


def lru_replay(bs: BlockingString, layer: LayerShape, capacity_elements: int, *,
               mac_cap: int = 10 ** 7) -> dict:
    """Qualitative check: run the literal address stream through one LRU cache.

    This does not model the buffer chain; it shows how hit rates respond to
    blocking choices when the schedule runs over a simple cache instead.
    """
    problems = validate_blocking(bs, layer)
    if problems:
        raise ConvblockError("invalid blocking: " + "; ".join(problems))
    loops = [(lp.dim, lp.extent) for lp in bs.loops]
    contribs = _contributions(loops)
    macs = 1
    for _, offs in contribs:
        macs *= len(offs)
    if macs > mac_cap:
        raise ConvblockError(f"literal replay of {macs} MACs exceeds cap {mac_cap}")
    dim_index = {d: i for i, d in enumerate(_DIMS7)}
    cache: OrderedDict = OrderedDict()
    hits = misses = 0
    for combo in itertools.product(*[offs for _, offs in reversed(contribs)]):
        vals = [0] * 7
        for (d, _), off in zip(reversed(contribs), combo):
            vals[dim_index[d]] += off
        for tag, fn in (("I", _addr_input), ("K", _addr_kernel), ("O", _addr_output)):
            addr = (tag, fn(*vals))
            if addr in cache:
                hits += 1
                cache.move_to_end(addr)
            else:
                misses += 1
                cache[addr] = True
                if len(cache) > capacity_elements:
                    cache.popitem(last=False)
    total = hits + misses
    return {"capacity_elements": capacity_elements, "accesses": total,
            "hits": hits, "misses": misses,
            "hit_rate": hits / total if total else 0.0}
