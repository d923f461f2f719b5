"""Hierarchy co-design: signatures, Pareto sets, joint selection."""

import pytest

from conftest import pb
from convblock.analysis import derive_buffers
from convblock.codesign import (
    DEFAULT_CODESIGN_CFG,
    hierarchy_from_signature,
    joint_select,
    layer_pareto,
    schedule_signature,
)
from convblock.model import (
    LayerShape,
    UnschedulableError,
    builtin_benchmarks,
)
from convblock.optimize import SearchConfig, optimize, optimize_fixed

SMALL = LayerShape("small", 8, 8, 4, 4, 3, 3)
MED = LayerShape("med", 16, 16, 8, 8, 3, 3)
THIN = LayerShape("thin", 8, 8, 8, 4, 1, 1)


def _loops(bs):
    return [(lp.dim, lp.extent) for lp in bs.loops]


# ---------------------------------------------------------------------------
# signatures


def test_signature_is_sorted_buffer_sizes():
    bs = pb("Fw(3) Fh(3) X(8) Y(8) C(4) K(4)", SMALL)
    sig = schedule_signature(_loops(bs), SMALL)
    sizes = sorted(b.size_bytes for b in derive_buffers(bs, SMALL))
    assert list(sig) == sizes


def test_signature_respects_budget():
    bs = pb("Fw(3) Fh(3) X(8) Y(8) C(4) K(4)", SMALL)
    full = schedule_signature(_loops(bs), SMALL)
    capped = schedule_signature(_loops(bs), SMALL, budget_bytes=64)
    assert sum(capped) <= 64
    assert set(capped) <= set(full)


def test_hierarchy_from_signature_levels():
    hier = hierarchy_from_signature((18, 18, 128, 800), 512)
    caps = [lv.capacity_bytes for lv in hier.pools]
    assert caps == [18, 18, 128, 800]
    assert hier.pools[0].level == hier.pools[1].level
    assert hier.pools[2].level > hier.pools[1].level
    assert hier.levels[-1].is_dram


# ---------------------------------------------------------------------------
# per-layer Pareto exploration


def test_pareto_signatures_distinct_and_sorted():
    pts = layer_pareto(SMALL, 1 << 20)
    assert 1 <= len(pts) <= 10
    sigs = [p.capacities_bytes for p in pts]
    assert len(set(sigs)) == len(sigs)
    energies = [p.total_pj for p in pts]
    assert energies == sorted(energies)
    for p in pts:
        assert sum(p.capacities_bytes) <= 1 << 20


def test_pareto_top_k_one():
    pts = layer_pareto(SMALL, 1 << 20, top_k=1)
    assert len(pts) == 1


def test_pareto_best_matches_search_best():
    budget = 1 << 20
    pts = layer_pareto(SMALL, budget)
    direct = optimize(SMALL, SearchConfig(
        mode="codesign", levels=DEFAULT_CODESIGN_CFG.levels,
        beam_width=DEFAULT_CODESIGN_CFG.beam_width,
        perturbations=DEFAULT_CODESIGN_CFG.perturbations,
        seed=DEFAULT_CODESIGN_CFG.seed, budget_bytes=budget))
    assert pts[0].total_pj == pytest.approx(direct.total_pj)


def test_pareto_budget_monotone_conv4():
    lay = builtin_benchmarks()["conv4"]
    at_1m = layer_pareto(lay, 1 << 20, top_k=1)[0].total_pj
    at_8m = layer_pareto(lay, 8 << 20, top_k=1)[0].total_pj
    assert at_1m >= at_8m - 1e-6


def test_pareto_huge_budget_equals_unconstrained():
    wide_open = layer_pareto(SMALL, 1 << 40, top_k=1)[0].total_pj
    free = optimize(SMALL, SearchConfig(
        mode="codesign", levels=DEFAULT_CODESIGN_CFG.levels,
        beam_width=DEFAULT_CODESIGN_CFG.beam_width,
        perturbations=DEFAULT_CODESIGN_CFG.perturbations,
        seed=DEFAULT_CODESIGN_CFG.seed)).total_pj
    assert wide_open == pytest.approx(free)


# ---------------------------------------------------------------------------
# joint selection


def test_joint_single_layer_matches_pareto_best():
    budget = 1 << 20
    best = layer_pareto(SMALL, budget)[0]
    joint = joint_select([SMALL], budget)
    assert joint.total_pj <= best.total_pj * (1 + 1e-9)
    assert joint.total_pj == pytest.approx(best.total_pj, rel=0.05)


def test_joint_two_identical_layers_additive():
    budget = 1 << 20
    one = joint_select([SMALL], budget)
    two = joint_select([SMALL, SMALL], budget)
    assert two.total_pj == pytest.approx(2 * one.total_pj)
    assert two.capacities_bytes == one.capacities_bytes


def test_joint_not_worse_than_first_layers_best_hierarchy():
    budget = 1 << 20
    layers = [SMALL, MED, THIN]
    joint = joint_select(layers, budget)
    naive_sig = layer_pareto(layers[0], budget, top_k=1)[0].capacities_bytes
    hier = hierarchy_from_signature(naive_sig, joint.width_bits)
    naive_total = sum(
        optimize_fixed(lay, hier, DEFAULT_CODESIGN_CFG).total_pj
        for lay in layers)
    assert joint.total_pj <= naive_total + 1e-6


def test_joint_reports_every_layer():
    joint = joint_select([SMALL, MED], 1 << 20)
    assert set(joint.per_layer_pj) == {"small", "med"}
    assert set(joint.schedules) == {"small", "med"}
    assert joint.total_pj == pytest.approx(sum(joint.per_layer_pj.values()))
    assert sum(joint.capacities_bytes) <= 1 << 20


def test_joint_budget_monotone_small_pair():
    prev = None
    for budget in (2 << 10, 16 << 10, 256 << 10):
        total = joint_select([SMALL, MED], budget).total_pj
        if prev is not None:
            assert total <= prev + 1e-6
        prev = total


def test_hopeless_budget_raises():
    with pytest.raises(UnschedulableError):
        joint_select([SMALL], 1)


def test_design_point_json():
    doc = joint_select([SMALL], 64 << 10).to_json()
    for key in ("capacities_bytes", "width_bits", "budget_bytes", "total_pj",
                "per_layer_pj", "schedules", "hierarchy"):
        assert key in doc
