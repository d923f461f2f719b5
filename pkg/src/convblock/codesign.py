"""Buffer-hierarchy co-design under a silicon budget.

For one layer, the co-design search is the ordinary beam search with every
buffer priced at its own size; each evaluated schedule implies a hierarchy
*signature* (the sorted buffer capacities it wants).  ``layer_pareto`` keeps
the best schedule per distinct signature.  ``joint_select`` pools the
signatures proposed by several layers, realises each as a fixed pool
hierarchy, re-optimises every layer on it, and picks the signature with the
lowest network total.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .model import (
    BUFFER_KINDS,
    ConvblockError,
    EnergyTable,
    LayerShape,
    MemLevel,
    MemoryHierarchy,
    UnschedulableError,
)
from .analysis import _raw_chains, budget_spill, codesign_width, refine_chain
from .optimize import SearchConfig, ScheduleResult, optimize_beam, optimize_fixed

#: search effort used when none is specified (kept modest: co-design runs
#: many searches per call)
DEFAULT_CODESIGN_CFG = SearchConfig(levels=2, beam_width=24, perturbations=8,
                                    restarts=1)


@dataclass(frozen=True)
class DesignPoint:
    """One realised hierarchy plus the schedules it supports."""

    capacities_bytes: tuple[int, ...]
    width_bits: int
    budget_bytes: int
    total_pj: float
    per_layer_pj: Mapping[str, float]
    schedules: Mapping[str, str]
    hierarchy: MemoryHierarchy

    def to_json(self) -> dict:
        return {
            "capacities_bytes": list(self.capacities_bytes),
            "width_bits": self.width_bits,
            "budget_bytes": self.budget_bytes,
            "total_pj": self.total_pj,
            "per_layer_pj": dict(self.per_layer_pj),
            "schedules": dict(self.schedules),
            "hierarchy": self.hierarchy.to_json(),
        }


def schedule_signature(loops: Sequence[tuple[str, int]], layer: LayerShape,
                       budget_bytes: int | None = None,
                       table: EnergyTable | None = None) -> tuple[int, ...]:
    """Sorted capacities (bytes) of the buffer levels a schedule builds.

    Levels the budget does not build (they live in DRAM) are excluded.
    """
    table = table or EnergyTable.default()
    raw, trips = _raw_chains(loops, layer)
    sizes, reads, kinds, lvls = [], [], [], []
    for kind in BUFFER_KINDS:
        for lvl, e in enumerate(refine_chain(raw[kind], kind, loops, trips)):
            sizes.append(-(-e[1] * layer.element_bits // 8))
            reads.append(e[2])
            kinds.append(kind)
            lvls.append(lvl)
    spill = budget_spill(sizes, reads, kinds, lvls, budget_bytes,
                         table.dram_boundary_kb * 1024)
    return tuple(sorted(sz for i, sz in enumerate(sizes) if not spill[i]))


def hierarchy_from_signature(capacities: Sequence[int],
                             width_bits: int) -> MemoryHierarchy:
    """Pools sized exactly to a signature; equal sizes share a level."""
    levels: list[MemLevel] = []
    lvl = 0
    prev = None
    for cap in sorted(capacities):
        if prev is not None and cap != prev:
            lvl += 1
        levels.append(MemLevel(cap, width_bits, "SRAM", None, lvl))
        prev = cap
    levels.append(MemLevel(None, kind="DRAM", level=lvl + 1))
    return MemoryHierarchy(tuple(levels))


def layer_pareto(layer: LayerShape, budget_bytes: int, *,
                 cfg: SearchConfig | None = None,
                 table: EnergyTable | None = None,
                 top_k: int = 10) -> list[DesignPoint]:
    """Best co-designed schedule per distinct hierarchy signature.

    Runs the budgeted beam search, keeping for each signature the schedule
    with the lowest energy; returns up to ``top_k`` signatures by energy.
    """
    table = table or EnergyTable.default()
    cfg = replace(cfg or DEFAULT_CODESIGN_CFG, mode="codesign",
                  budget_bytes=budget_bytes)
    width = cfg.width_bits if cfg.width_bits is not None else codesign_width(table)

    best_per_sig: dict[tuple[int, ...], tuple[float, str]] = {}

    def collect(key, loops):
        sig = schedule_signature(loops, layer, budget_bytes, table)
        cur = best_per_sig.get(sig)
        if cur is None or (key[0], key[2]) < cur:
            best_per_sig[sig] = (key[0], key[2])

    optimize_beam(layer, cfg, table=table, collect=collect)
    ranked = sorted(best_per_sig.items(), key=lambda kv: (kv[1][0], kv[0]))
    points = []
    for sig, (pj, rendered) in ranked[:top_k]:
        points.append(DesignPoint(
            capacities_bytes=sig, width_bits=width, budget_bytes=budget_bytes,
            total_pj=pj, per_layer_pj={layer.name: pj},
            schedules={layer.name: rendered},
            hierarchy=hierarchy_from_signature(sig, width)))
    return points


def joint_select(layers: Sequence[LayerShape], budget_bytes: int, *,
                 cfg: SearchConfig | None = None,
                 table: EnergyTable | None = None,
                 top_k: int = 10,
                 max_candidates: int | None = None) -> DesignPoint:
    """Pick one hierarchy for a whole network under a budget.

    Pools the per-layer Pareto signatures, realises each candidate as fixed
    pools, re-optimises every layer on it, and returns the candidate with the
    lowest summed energy (ties broken toward less silicon, then the signature
    itself).  Candidates any layer cannot schedule on are discarded.

    ``max_candidates`` trims the pool for speed; the quota is split evenly
    across layers so one cheap layer cannot crowd out the signatures of an
    expensive one.
    """
    table = table or EnergyTable.default()
    base_cfg = cfg or DEFAULT_CODESIGN_CFG
    width = base_cfg.width_bits if base_cfg.width_bits is not None \
        else codesign_width(table)

    quota = None
    if max_candidates is not None:
        quota = max(1, max_candidates // max(1, len(layers)))
    union: set[tuple[int, ...]] = set()
    for layer in layers:
        kept = 0
        for pt in layer_pareto(layer, budget_bytes, cfg=base_cfg,
                               table=table, top_k=top_k):
            if quota is not None and kept >= quota:
                break
            if not pt.capacities_bytes or sum(pt.capacities_bytes) > budget_bytes:
                continue
            union.add(pt.capacities_bytes)
            kept += 1
    if not union:
        raise UnschedulableError("budget admits no candidate hierarchy")

    fixed_cfg = replace(base_cfg, mode="fixed", budget_bytes=None)
    best: tuple[float, int, tuple[int, ...], dict, dict, MemoryHierarchy] | None = None
    for sig in sorted(union):
        hier = hierarchy_from_signature(sig, width)
        per_layer: dict[str, float] = {}
        schedules: dict[str, str] = {}
        total = 0.0
        feasible = True
        for layer in layers:
            try:
                res: ScheduleResult = optimize_fixed(layer, hier, fixed_cfg,
                                                     table=table)
            except (UnschedulableError, ConvblockError):
                feasible = False
                break
            total += res.total_pj
            per_layer[layer.name] = res.total_pj
            schedules[layer.name] = res.rendered
        if not feasible:
            continue
        key = (total, sum(sig), sig)
        if best is None or key < (best[0], best[1], best[2]):
            best = (total, sum(sig), sig, per_layer, schedules, hier)
    if best is None:
        raise UnschedulableError("no candidate hierarchy can schedule every layer")
    total, _, sig, per_layer, schedules, hier = best
    return DesignPoint(capacities_bytes=sig, width_bits=width,
                       budget_bytes=budget_bytes, total_pj=total,
                       per_layer_pj=per_layer, schedules=schedules,
                       hierarchy=hier)
