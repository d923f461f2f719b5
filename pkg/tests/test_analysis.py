"""Buffer chains, access counts, packing, budget spill, energy reports.

The numeric tables frozen here were hand-derived for the two worked layers
and double-checked against the execution simulator; they are the regression
anchor for the whole counting model.
"""

from fractions import Fraction

import pytest

from conftest import pb
from convblock.analysis import (
    access_counts,
    analyze_chains,
    budget_spill,
    derive_buffers,
    pack_buffers,
    schedule_energy,
)
from convblock.model import (
    BlockingString,
    EnergyTable,
    LayerShape,
    MemLevel,
    MemoryHierarchy,
    UnschedulableError,
    builtin_benchmarks,
)

L8 = LayerShape("t8", 8, 8, 4, 4, 3, 3)
L4 = LayerShape("t4", 4, 4, 4, 4, 3, 3)
UNBLOCKED8 = "Fw(3) Fh(3) X(8) Y(8) C(4) K(4)"


# ---------------------------------------------------------------------------
# chain structure on the unblocked 8x8x4x4x3x3 layer


def test_chain_counts_unblocked():
    ch = analyze_chains(pb(UNBLOCKED8, L8), L8)
    assert [(fp, s, i) for _, fp, s, i in ch["IB"]] == [(9, 9216, 1600), (400, 1600, 400)]
    assert [(fp, s, i) for _, fp, s, i in ch["KB"]] == [(9, 9216, 144)]
    assert [(fp, s, i) for _, fp, s, i in ch["OB"]] == [(1, 9216, 1024), (64, 1024, 256)]


def test_refetch_rates_unblocked():
    rr = {(b.kind, b.level): b.refetch_rate for b in derive_buffers(pb(UNBLOCKED8, L8), L8)}
    assert rr == {
        ("IB", 0): Fraction(144, 25),
        ("IB", 1): Fraction(25, 4),
        ("KB", 0): Fraction(64),
        ("OB", 0): Fraction(18),
        ("OB", 1): Fraction(8),
    }


def test_dram_volumes_unblocked():
    ac = access_counts(pb(UNBLOCKED8, L8), L8)
    assert ac["mac_count"] == 9216
    assert ac["dram_reads"] == {"IB": 400, "KB": 144, "OB": 256}
    assert ac["dram_writes"] == {"OB": 256}


def test_adjacency_identity_unblocked():
    # each level's parent reads equal the next level's served reads
    ch = analyze_chains(pb(UNBLOCKED8, L8), L8)
    for chain in ch.values():
        for inner, outer in zip(chain, chain[1:]):
            assert inner[3] == outer[2]


# ---------------------------------------------------------------------------
# split-K layer: a level that serves its own intake is dropped, an equal
# footprint at a different dim is kept


def test_split_k_keeps_boundary_level():
    ch = analyze_chains(pb("Fw(3) Fh(3) X(4) Y(4) C(4) K(2) K(4)", L4), L4)
    ib = ch["IB"]
    assert (ib[-1][1], ib[-1][2], ib[-1][3]) == (144, 288, 144)
    assert (ib[-2][1], ib[-2][2], ib[-2][3]) == (144, 576, 288)
    rr = {(b.kind, b.level): b.refetch_rate for b in derive_buffers(pb("Fw(3) Fh(3) X(4) Y(4) C(4) K(2) K(4)", L4), L4)}
    assert rr[("IB", len(ib) - 1)] == Fraction(9, 2)


def test_trip_one_repeat_changes_nothing():
    plain = analyze_chains(pb(UNBLOCKED8, L8), L8)
    padded = analyze_chains(pb("Fw(3) Fh(3) X(8) X(8) Y(8) C(4) C(4) K(4)", L8), L8)
    for kind in plain:
        assert [e[1:] for e in plain[kind]] == [e[1:] for e in padded[kind]]


def test_degenerate_layer_runs_from_dram():
    unit = LayerShape("unit", 1, 1, 1, 1, 1, 1)
    ac = access_counts(BlockingString(()), unit)
    assert ac["mac_count"] == 1
    assert ac["per_buffer"] == []
    assert ac["dram_reads"] == {"IB": 1, "KB": 1, "OB": 1}
    assert ac["dram_writes"] == {"OB": 1}


# ---------------------------------------------------------------------------
# packing into fixed pools


def _profiles(bs, layer):
    return [p for p in access_counts(bs, layer)["per_buffer"]]


def test_pack_prefers_hot_buffers():
    bs = pb(UNBLOCKED8, L8)
    bufs = derive_buffers(bs, L8)
    plan = pack_buffers(bufs, _profiles(bs, L8), MemoryHierarchy.diannao())
    by = {(a.kind, a.level): a.pool_index for a in plan.assignments}
    # every small buffer fits one of DianNao's split scratchpads
    assert all(idx is not None for idx in by.values())
    pools = MemoryHierarchy.diannao().pools
    for (kind, _lvl), idx in by.items():
        assert pools[idx].allows(kind)


def test_pack_kind_restriction_respected():
    # an IB flood must not evict KB from its private pool
    bs = pb("Fw(11) Fh(11) X(256) Y(256) C(256) K(384)",
            builtin_benchmarks()["conv1"])
    lay = builtin_benchmarks()["conv1"]
    plan = pack_buffers(derive_buffers(bs, lay), _profiles(bs, lay),
                        MemoryHierarchy.diannao())
    kb_pools = {a.pool_index for a in plan.assignments if a.kind == "KB"
                and a.pool_index is not None}
    for idx in kb_pools:
        assert MemoryHierarchy.diannao().pools[idx].allows("KB")


def test_unschedulable_when_nothing_fits():
    tiny = MemoryHierarchy((MemLevel(1, 64, "SRAM", None, 0),
                            MemLevel(None, kind="DRAM", level=1)))
    bs = pb(UNBLOCKED8, L8)
    with pytest.raises(UnschedulableError):
        pack_buffers(derive_buffers(bs, L8), _profiles(bs, L8), tiny)


# ---------------------------------------------------------------------------
# budget spill


def test_budget_spill_hottest_first():
    sizes = [100, 200, 300]
    reads = [10, 30, 20]
    spill = budget_spill(sizes, reads, ["IB", "KB", "OB"], [0, 0, 0],
                         250, 1 << 24)
    # reads order: KB(200), OB(300 does not fit 50 left), IB(100 does not fit)
    assert spill == [True, False, True]


def test_budget_spill_none_budget_realizes_everything_small():
    spill = budget_spill([100, 200], [1, 2], ["IB", "KB"], [0, 0], None, 1 << 24)
    assert spill == [False, False]


def test_budget_spill_boundary_always_spills():
    boundary = 16 * 1024 * 1024
    spill = budget_spill([boundary, 10], [5, 1], ["IB", "KB"], [0, 0], None, boundary)
    assert spill == [True, False]


def test_budgeted_energy_never_below_unbudgeted():
    for budget in (None, 1 << 20, 64 << 10, 1 << 10):
        full = schedule_energy(pb(UNBLOCKED8, L8), L8)
        capped = schedule_energy(pb(UNBLOCKED8, L8), L8, budget_bytes=budget)
        assert capped.total_pj >= full.total_pj - 1e-9


# ---------------------------------------------------------------------------
# energy report structure


def test_report_buckets_sum():
    rep = schedule_energy(pb(UNBLOCKED8, L8), L8)
    assert rep.total_pj == pytest.approx(rep.mac_pj + rep.dram_pj + rep.buffer_pj)
    assert rep.mac_pj == rep.mac_count * EnergyTable.default().mac_pj
    assert rep.pj_per_mac == pytest.approx(rep.total_pj / rep.mac_count)


def test_by_kind_dram_covers_dram_total():
    rep = schedule_energy(pb(UNBLOCKED8, L8), L8)
    assert sum(rep.by_kind_dram_pj.values()) == pytest.approx(rep.dram_pj)


def test_fixed_mode_reports_pool_locations():
    rep = schedule_energy(pb(UNBLOCKED8, L8), L8, mode="fixed",
                          hierarchy=MemoryHierarchy.diannao())
    assert rep.packing is not None
    assert all(b.location.startswith(("pool", "dram")) for b in rep.per_buffer)


def test_fixed_mode_requires_hierarchy():
    with pytest.raises(Exception):
        schedule_energy(pb(UNBLOCKED8, L8), L8, mode="fixed")


def test_giant_sram_matches_codesign_at_forced_size():
    # one pool big enough for everything: fixed pricing = codesign pricing
    # with every buffer priced at the pool's size
    big = 1 << 20
    hier = MemoryHierarchy((MemLevel(big, 512, "SRAM", None, 0),
                            MemLevel(None, kind="DRAM", level=1)))
    bs = pb(UNBLOCKED8, L8)
    fixed = schedule_energy(bs, L8, mode="fixed", hierarchy=hier)
    # rebuild by hand: price all on-chip accesses at the giant pool's energy
    from convblock.analysis import energy_per_access
    unit = energy_per_access(big, 512, EnergyTable.default())
    onchip = sum(b.accesses for b in fixed.per_buffer if b.location != "dram")
    assert fixed.buffer_pj == pytest.approx(onchip * unit)
