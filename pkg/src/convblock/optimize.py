"""Schedule search: exhaustive enumeration and beam search over blockings.

Candidates are loop orders over the data dims (X, Y, C, K, and N when the
batch is blocked) with up to ``levels`` occurrences per dim and no two equal
dims adjacent, crossed with every strictly increasing divisor chain of
extents per dim.  The kernel window loops sit innermost by default.

The beam search seeds itself with the full single-level order space, then
repeatedly grows candidates by splitting one occurrence into an inner/outer
pair (the outer copy inserted anywhere further out) plus seeded random
perturbations, keeping the best ``beam_width`` distinct schedules per round.
"""

from __future__ import annotations

import itertools
import random
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterable, Sequence

from .model import (
    BUFFER_KINDS,
    BlockingString,
    ConvblockError,
    EnergyTable,
    LayerShape,
    Loop,
    MemoryHierarchy,
    UnschedulableError,
    divisors,
    render_blocking,
    unblocked_string,
)
from .analysis import (
    EnergyReport,
    _chain_intakes,
    _raw_chains,
    budget_spill,
    codesign_width,
    energy_per_access,
    refine_chain,
    schedule_energy,
)

DATA_DIM_ORDER = ("X", "Y", "C", "K", "N")
_WINDOW = ("Fw", "Fh")


@dataclass(frozen=True)
class SearchConfig:
    """Knobs shared by the optimizers."""

    mode: str = "codesign"            # "codesign" | "fixed"
    search: str = "beam"              # "beam" | "exhaustive"
    levels: int = 2                   # max blocking occurrences per data dim
    beam_width: int = 128
    seed: int = 0
    restarts: int = 1
    perturbations: int = 16
    rounds: int | None = None
    budget_bytes: int | None = None
    threads: int = 1
    free_window_placement: bool = False
    width_bits: int | None = None     # codesign port width (widest by default)


@dataclass(frozen=True)
class ScheduleResult:
    blocking: BlockingString
    rendered: str
    report: EnergyReport
    evaluated: int
    buffer_bytes: int

    @property
    def total_pj(self) -> float:
        return self.report.total_pj

    def to_json(self) -> dict:
        return {
            "blocking": self.rendered,
            "total_pj": self.report.total_pj,
            "pj_per_mac": self.report.pj_per_mac,
            "buffer_bytes": self.buffer_bytes,
            "evaluated": self.evaluated,
            "report": self.report.to_json(),
        }


def enumerate_orders(dims: Sequence[str], levels: int) -> list[tuple[str, ...]]:
    """All loop-dim orders with 1..levels occurrences per dim and no equal
    neighbours, innermost first."""
    dims = tuple(dims)
    results: list[tuple[str, ...]] = []
    counts = {d: 0 for d in dims}
    seq: list[str] = []

    def rec(last: str | None) -> None:
        if seq and all(counts[d] >= 1 for d in dims):
            results.append(tuple(seq))
        for d in dims:
            if counts[d] < levels and d != last:
                counts[d] += 1
                seq.append(d)
                rec(d)
                seq.pop()
                counts[d] -= 1

    rec(None)
    return results


@lru_cache(maxsize=None)
def extent_chains(size: int, occurrences: int) -> tuple[tuple[int, ...], ...]:
    """Strictly increasing divisor chains of the given length ending at size."""
    if occurrences == 1:
        return ((size,),)
    out = []
    for d in divisors(size):
        if 2 <= d < size:
            for ch in extent_chains(d, occurrences - 1):
                out.append(ch + (size,))
    return tuple(out)


def _data_dims(layer: LayerShape) -> list[str]:
    return [d for d in DATA_DIM_ORDER if layer.size_of(d) > 1]


def _window_loops(layer: LayerShape) -> list[tuple[str, int]]:
    return [(d, layer.size_of(d)) for d in _WINDOW if layer.size_of(d) > 1]


def _candidates(layer: LayerShape, cfg: SearchConfig,
                levels: int | None = None) -> Iterable[list[tuple[str, int]]]:
    dims = _data_dims(layer)
    window = _window_loops(layer)
    depth = cfg.levels if levels is None else levels
    if not dims:
        if window:
            yield list(window)
        else:  # fully degenerate layer: keep the explicit unit nest
            yield [(d, 1) for d in ("Fw", "Fh", "X", "Y", "C", "K")]
        return
    for order in enumerate_orders(dims, depth):
        occ = Counter(order)
        options = [extent_chains(layer.size_of(d), occ[d]) for d in dims]
        if any(not opt for opt in options):
            continue
        for combo in itertools.product(*options):
            cursor = {d: 0 for d in dims}
            data_loops = []
            for d in order:
                ch = combo[dims.index(d)]
                data_loops.append((d, ch[cursor[d]]))
                cursor[d] += 1
            if cfg.free_window_placement and window:
                for spots in itertools.product(range(len(data_loops) + 1),
                                               repeat=len(window)):
                    loops = list(data_loops)
                    for (wdim, wext), at in sorted(zip(window, spots),
                                                   key=lambda t: -t[1]):
                        loops.insert(at, (wdim, wext))
                    yield loops
            else:
                yield window + data_loops


# ---------------------------------------------------------------------------
# Lean evaluation (must agree exactly with analysis.schedule_energy totals)


def _light_pack(sizes: list[int], reads: list[int], kinds: list[str],
                lvls: list[int], hierarchy: MemoryHierarchy) -> list[int | None]:
    order = sorted(range(len(sizes)),
                   key=lambda i: (-reads[i], -sizes[i], kinds[i], lvls[i]))
    pools = hierarchy.pools
    remaining = [p.capacity_bytes for p in pools]
    pointer = {k: 0 for k in BUFFER_KINDS}
    spots: list[int | None] = [None] * len(sizes)
    for i in order:
        for j in range(pointer[kinds[i]], len(pools)):
            if pools[j].allows(kinds[i]) and remaining[j] >= sizes[i]:
                spots[i] = j
                remaining[j] -= sizes[i]
                pointer[kinds[i]] = j
                break
    return spots


def _light_energy(loops: Sequence[tuple[str, int]], layer: LayerShape,
                  cfg: SearchConfig, table: EnergyTable,
                  hierarchy: MemoryHierarchy | None) -> tuple[float, int] | None:
    """(total_pj, buffer_bytes) for one candidate, or None when infeasible."""
    raw, trips = _raw_chains(loops, layer)
    wm = table.write_multiplier
    width = cfg.width_bits if cfg.width_bits is not None else codesign_width(table)
    bits = layer.element_bits

    chains = {}
    for kind in BUFFER_KINDS:
        chain = refine_chain(raw[kind], kind, loops, trips)
        intakes = _chain_intakes(chain, kind, loops, trips)
        chains[kind] = (chain, intakes)

    flat_kinds: list[str] = []
    flat_lvls: list[int] = []
    flat_sizes: list[int] = []
    flat_reads: list[int] = []
    for kind in BUFFER_KINDS:
        chain, _ = chains[kind]
        for lvl, e in enumerate(chain):
            flat_kinds.append(kind)
            flat_lvls.append(lvl)
            flat_sizes.append(-(-e[1] * bits // 8))
            flat_reads.append(e[2])

    if cfg.mode == "fixed":
        spots = _light_pack(flat_sizes, flat_reads, flat_kinds, flat_lvls, hierarchy)
        if flat_sizes and all(s is None for s in spots):
            return None
        prices = []
        for i, s in enumerate(spots):
            if s is None:
                prices.append((table.dram_pj, True))
            else:
                pool = hierarchy.pools[s]
                prices.append((energy_per_access(pool.capacity_bytes,
                                                 pool.word_bits, table), False))
        total_bytes = sum(flat_sizes)
    else:
        spill = budget_spill(flat_sizes, flat_reads, flat_kinds, flat_lvls,
                             cfg.budget_bytes, table.dram_boundary_kb * 1024)
        prices = [(table.dram_pj, True) if spill[i]
                  else (energy_per_access(flat_sizes[i], width, table), False)
                  for i in range(len(flat_sizes))]
        total_bytes = sum(sz for i, sz in enumerate(flat_sizes) if not spill[i])

    price_map: dict[tuple[str, int], tuple[float, bool]] = {
        (flat_kinds[i], flat_lvls[i]): prices[i] for i in range(len(prices))}

    macs = layer.total_macs
    total = macs * table.mac_pj
    for kind in BUFFER_KINDS:
        chain, intakes = chains[kind]
        is_ob = kind == "OB"
        if not chain:
            total += macs * table.dram_pj * ((1 + wm) if is_ob else 1)
            continue
        n = len(chain)
        for lvl in range(n):
            unit, here_dram = price_map[(kind, lvl)]
            below_dram = price_map[(kind, lvl - 1)][1] if lvl > 0 else False
            above_dram = price_map[(kind, lvl + 1)][1] if lvl + 1 < n else True
            if not (here_dram and below_dram):
                total += chain[lvl][2] * unit * ((1 + wm) if is_ob else 1)
            if not (here_dram and above_dram):
                total += intakes[lvl] * unit * ((wm + 1) if is_ob else wm)
        if not price_map[(kind, n - 1)][1]:
            total += intakes[-1] * table.dram_pj * ((1 + wm) if is_ob else 1)
    return total, total_bytes


def _eval_key(loops: Sequence[tuple[str, int]], layer: LayerShape,
              cfg: SearchConfig, table: EnergyTable,
              hierarchy: MemoryHierarchy | None):
    got = _light_energy(loops, layer, cfg, table, hierarchy)
    if got is None:
        return None
    total, nbytes = got
    rendered = " ".join(f"{d}({e})" for d, e in loops)
    return (total, nbytes, rendered)


def _evaluate_many(cands: list, layer: LayerShape, cfg: SearchConfig,
                   table: EnergyTable, hierarchy: MemoryHierarchy | None):
    """Evaluate candidates, returning (key, loops) pairs for feasible ones.

    With threads > 1 the list is chunked across a thread pool; chunk order is
    preserved so results do not depend on the thread count.
    """
    def run(chunk):
        out = []
        for loops in chunk:
            key = _eval_key(loops, layer, cfg, table, hierarchy)
            if key is not None:
                out.append((key, loops))
        return out

    if cfg.threads <= 1 or len(cands) < 256:
        return run(cands)
    size = max(64, len(cands) // (cfg.threads * 8))
    chunks = [cands[i:i + size] for i in range(0, len(cands), size)]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        results = []
        for part in pool.map(run, chunks):
            results.extend(part)
        return results


def _finish(best_loops: Sequence[tuple[str, int]], layer: LayerShape,
            cfg: SearchConfig, table: EnergyTable,
            hierarchy: MemoryHierarchy | None, evaluated: int) -> ScheduleResult:
    bs = BlockingString(tuple(Loop(d, e) for d, e in best_loops))
    report = schedule_energy(bs, layer, mode=cfg.mode, hierarchy=hierarchy,
                             table=table, width_bits=cfg.width_bits,
                             budget_bytes=cfg.budget_bytes)
    nbytes = _light_energy(best_loops, layer, cfg, table, hierarchy)[1]
    return ScheduleResult(bs, render_blocking(bs), report, evaluated, nbytes)


def optimize_exhaustive(layer: LayerShape, cfg: SearchConfig | None = None, *,
                        hierarchy: MemoryHierarchy | None = None,
                        table: EnergyTable | None = None) -> ScheduleResult:
    """Evaluate every candidate up to ``cfg.levels`` blocking levels."""
    cfg = cfg or SearchConfig(search="exhaustive")
    table = table or EnergyTable.default()
    if cfg.mode == "fixed" and hierarchy is None:
        raise ConvblockError("fixed mode needs a hierarchy")
    best = None
    evaluated = 0
    batch: list = []
    BATCH = 20000

    def flush(best):
        nonlocal batch
        for key, loops in _evaluate_many(batch, layer, cfg, table, hierarchy):
            if best is None or key < best[0]:
                best = (key, loops)
        batch = []
        return best

    for loops in _candidates(layer, cfg):
        batch.append(loops)
        evaluated += 1
        if len(batch) >= BATCH:
            best = flush(best)
    best = flush(best)
    if best is None:
        raise ConvblockError("no feasible candidate (budget too tight?)")
    return _finish(best[1], layer, cfg, table, hierarchy, evaluated)


def _occurrence_info(loops: Sequence[tuple[str, int]]):
    """Per-position (previous same-dim extent, next same-dim extent or None)."""
    info = []
    for i, (d, e) in enumerate(loops):
        prev = 1
        for j in range(i):
            if loops[j][0] == d:
                prev = loops[j][1]
        nxt = None
        for j in range(i + 1, len(loops)):
            if loops[j][0] == d:
                nxt = loops[j][1]
                break
        info.append((prev, nxt))
    return info


def _split_moves(loops: list[tuple[str, int]], layer: LayerShape,
                 levels: int) -> list[list[tuple[str, int]]]:
    out = []
    occ = Counter(d for d, _ in loops)
    info = _occurrence_info(loops)
    for i, (d, e) in enumerate(loops):
        if d in _WINDOW or occ[d] >= levels:
            continue
        prev = info[i][0]
        for g in divisors(e):
            if g <= prev or g >= e or g % prev != 0:
                continue
            inner = loops[:i] + [(d, g)]
            rest = loops[i:]
            for at in range(1, len(rest) + 1):
                left = rest[at - 1] if at > 1 else (d, g)
                if left[0] == d:
                    continue  # re-adjacent split adds no reuse level
                if at < len(rest) and rest[at][0] == d:
                    continue
                cand = inner + rest[1:at] + [(d, e)] + rest[at:]
                out.append(cand)
    return out


def _perturb(loops: list[tuple[str, int]], layer: LayerShape,
             rng: random.Random, levels: int) -> list[tuple[str, int]] | None:
    move = rng.randrange(3)
    idx = [i for i, (d, _) in enumerate(loops) if d not in _WINDOW]
    if not idx:
        return None
    if move == 0:  # nudge one extent within its divisor slot
        i = rng.choice(idx)
        d, e = loops[i]
        prev, nxt = _occurrence_info(loops)[i]
        if nxt is None:
            return None  # the outermost occurrence is pinned to the layer size
        alts = [v for v in divisors(nxt) if v % prev == 0 and prev < v < nxt and v != e]
        if not alts:
            return None
        new = list(loops)
        new[i] = (d, rng.choice(alts))
        return new
    if move == 1:  # swap two adjacent loops
        i = rng.randrange(len(loops) - 1) if len(loops) > 1 else 0
        if len(loops) < 2 or loops[i][0] == loops[i + 1][0]:
            return None
        new = list(loops)
        new[i], new[i + 1] = new[i + 1], new[i]
        return new
    # drop a non-final occurrence (contract one blocking level)
    cands = [i for i in idx if _occurrence_info(loops)[i][1] is not None]
    if not cands:
        return None
    i = rng.choice(cands)
    return loops[:i] + loops[i + 1:]


def optimize_beam(layer: LayerShape, cfg: SearchConfig | None = None, *,
                  hierarchy: MemoryHierarchy | None = None,
                  table: EnergyTable | None = None,
                  collect=None) -> ScheduleResult:
    """Beam search: exhaustive single-level seeds, then split/perturb rounds.

    ``collect``, when given, is called with every feasible ``(key, loops)``
    evaluated (key = (total_pj, buffer_bytes, rendered)).
    """
    cfg = cfg or SearchConfig()
    table = table or EnergyTable.default()
    if cfg.mode == "fixed" and hierarchy is None:
        raise ConvblockError("fixed mode needs a hierarchy")
    dims = _data_dims(layer)
    rounds = cfg.rounds if cfg.rounds is not None else max(len(dims), 1) * (cfg.levels - 1)

    def score(cands):
        out = _evaluate_many(cands, layer, cfg, table, hierarchy)
        if collect is not None:
            for kv in out:
                collect(*kv)
        return out

    seeds = [loops for loops in _candidates(layer, cfg, levels=1)]
    best = None
    evaluated = 0
    for restart in range(max(1, cfg.restarts)):
        rng = random.Random(cfg.seed + restart)
        scored = score(seeds)
        evaluated += len(seeds)
        scored.sort(key=lambda kv: kv[0])
        beam = scored[:cfg.beam_width]
        visited = {" ".join(f"{d}({e})" for d, e in loops) for loops in seeds}
        if beam and (best is None or beam[0][0] < best[0]):
            best = beam[0]
        for _ in range(rounds):
            fresh: dict[str, list[tuple[str, int]]] = {}
            for _, loops in beam:
                for cand in _split_moves(list(loops), layer, cfg.levels):
                    fresh.setdefault(" ".join(f"{d}({e})" for d, e in cand), cand)
                for _ in range(cfg.perturbations):
                    cand = _perturb(list(loops), layer, rng, cfg.levels)
                    if cand is not None:
                        fresh.setdefault(" ".join(f"{d}({e})" for d, e in cand), cand)
            new_cands = [v for k, v in fresh.items() if k not in visited]
            visited.update(fresh)
            scored = score(new_cands)
            evaluated += len(new_cands)
            merged = beam + scored
            merged.sort(key=lambda kv: kv[0])
            beam = merged[:cfg.beam_width]
            if beam and (best is None or beam[0][0] < best[0]):
                best = beam[0]
    if best is None:
        raise UnschedulableError("no candidate packs onto this hierarchy")
    return _finish(best[1], layer, cfg, table, hierarchy, evaluated)


def optimize_fixed(layer: LayerShape, hierarchy: MemoryHierarchy,
                   cfg: SearchConfig | None = None, *,
                   table: EnergyTable | None = None) -> ScheduleResult:
    """Search for the best schedule on a fixed memory hierarchy."""
    cfg = replace(cfg or SearchConfig(), mode="fixed")
    if cfg.search == "exhaustive":
        return optimize_exhaustive(layer, cfg, hierarchy=hierarchy, table=table)
    return optimize_beam(layer, cfg, hierarchy=hierarchy, table=table)


def optimize(layer: LayerShape, cfg: SearchConfig | None = None, *,
             hierarchy: MemoryHierarchy | None = None,
             table: EnergyTable | None = None) -> ScheduleResult:
    cfg = cfg or SearchConfig()
    if cfg.search == "exhaustive":
        return optimize_exhaustive(layer, cfg, hierarchy=hierarchy, table=table)
    return optimize_beam(layer, cfg, hierarchy=hierarchy, table=table)


def unblocked_result(layer: LayerShape, *, mode: str = "codesign",
                     hierarchy: MemoryHierarchy | None = None,
                     table: EnergyTable | None = None,
                     width_bits: int | None = None,
                     budget_bytes: int | None = None) -> ScheduleResult:
    bs = unblocked_string(layer)
    report = schedule_energy(bs, layer, mode=mode, hierarchy=hierarchy,
                             table=table, width_bits=width_bits,
                             budget_bytes=budget_bytes)
    loops = [(lp.dim, lp.extent) for lp in bs.loops]
    cfg = SearchConfig(mode=mode, width_bits=width_bits,
                       budget_bytes=budget_bytes)
    nbytes = _light_energy(loops, layer, cfg, table or EnergyTable.default(),
                           hierarchy)[1]
    return ScheduleResult(bs, render_blocking(bs), report, 1, nbytes)
