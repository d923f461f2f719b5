"""Blocking-string grammar, layer shapes, hierarchies, presets."""

import json

import pytest

from conftest import pb
from convblock.model import (
    BlockingString,
    BlockingSyntaxError,
    ConvblockError,
    EnergyTable,
    LayerShape,
    Loop,
    MemoryHierarchy,
    builtin_benchmarks,
    diannao_baseline,
    divisors,
    parse_blocking,
    render_blocking,
    unblocked_string,
    validate_blocking,
)

LAYER = LayerShape("t", 8, 8, 4, 4, 3, 3)


# ---------------------------------------------------------------------------
# parsing and rendering


def test_parse_render_round_trip():
    text = "Fw(3) Fh(3) X(8) Y(8) C(4) K(4)"
    assert render_blocking(parse_blocking(text)) == text


def test_parse_tolerates_whitespace():
    bs = parse_blocking("  X(4)   Y( 8 )\tC(4) K(4) Fw(3) Fh(3) X(8)")
    assert bs.loops[0] == Loop("X", 4)
    assert bs.loops[1] == Loop("Y", 8)


@pytest.mark.parametrize("bad", ["X(4", "X()", "Q(4)", "X(-2)", "4(X)", "X(0)", ""])
def test_parse_rejects_garbage(bad):
    with pytest.raises(BlockingSyntaxError):
        parse_blocking(bad)


def test_trip_counts_are_extent_ratios():
    bs = pb("Fw(3) Fh(3) X(4) Y(4) C(4) K(2) K(4)", LayerShape("s", 4, 4, 4, 4, 3, 3))
    assert bs.trip_counts() == (3, 3, 4, 4, 4, 2, 2)


# ---------------------------------------------------------------------------
# validation


def test_valid_string_passes():
    assert validate_blocking(parse_blocking("Fw(3) Fh(3) X(8) Y(8) C(4) K(4)"), LAYER) == []


def test_equal_extent_repeat_is_valid():
    # a trip-1 occurrence covers nothing new but breaks no rule
    bs = parse_blocking("Fw(3) Fh(3) X(8) X(8) Y(8) C(4) K(4)")
    assert validate_blocking(bs, LAYER) == []


def test_missing_coverage_reported():
    bs = parse_blocking("Fw(3) Fh(3) X(4) Y(8) C(4) K(4)")
    problems = validate_blocking(bs, LAYER)
    assert any("X" in p and "covers" in p for p in problems)


def test_non_divisor_extent_reported():
    bs = parse_blocking("Fw(3) Fh(3) X(3) X(8) Y(8) C(4) K(4)")
    assert validate_blocking(bs, LAYER)


def test_broken_chain_reported():
    bs = parse_blocking("Fw(3) Fh(3) X(4) X(2) X(8) Y(8) C(4) K(4)")
    problems = validate_blocking(bs, LAYER)
    assert any("does not increase" in p for p in problems)


def test_window_dim_split_rejected():
    bs = parse_blocking("Fw(3) Fw(3) Fh(3) X(8) Y(8) C(4) K(4)")
    problems = validate_blocking(bs, LAYER)
    assert any("more than once" in p for p in problems)


def test_absent_unit_dim_is_fine():
    lay = LayerShape("fc", 1, 1, 4, 4, 1, 1)
    assert validate_blocking(parse_blocking("C(4) K(4)"), lay) == []


def test_unblocked_string_is_valid_for_every_preset():
    for lay in builtin_benchmarks().values():
        assert validate_blocking(unblocked_string(lay), lay) == []


# ---------------------------------------------------------------------------
# layers


def test_layer_rejects_nonpositive():
    with pytest.raises(ConvblockError):
        LayerShape("bad", 0, 8, 4, 4, 3, 3)


def test_layer_macs():
    assert LAYER.total_macs == 8 * 8 * 4 * 4 * 3 * 3


def test_benchmark_shapes():
    bench = builtin_benchmarks()
    assert set(bench) == {"conv1", "conv2", "conv3", "conv4", "conv5", "fc1", "fc2"}
    assert bench["conv4"].total_macs == 924_844_032
    assert bench["conv1"].total_macs == 256 * 256 * 256 * 384 * 11 * 11
    assert bench["fc2"].total_macs == 4096 * 4096


def test_divisors():
    assert divisors(12) == [1, 2, 3, 4, 6, 12]
    assert divisors(1) == [1]


# ---------------------------------------------------------------------------
# hierarchies


def test_diannao_hierarchy_shape():
    h = MemoryHierarchy.diannao()
    srams = [lv for lv in h.pools if lv.kind == "SRAM"]
    assert len(srams) == 3
    assert {lv.capacity_bytes for lv in srams} == {2 * 1024, 32 * 1024, 2 * 1024}
    assert all(lv.level == 0 for lv in srams)
    assert all(lv.word_bits == 64 for lv in srams)
    kinds = {tuple(lv.buffers or ()) for lv in srams}
    assert kinds == {("IB",), ("KB",), ("OB",)}
    assert h.pools[-1].kind == "DRAM" or any(lv.kind == "DRAM" for lv in h.levels)


def test_hierarchy_json_round_trip():
    h = MemoryHierarchy.diannao()
    again = MemoryHierarchy.from_json(h.to_json())
    assert [lv.capacity_bytes for lv in again.levels] == [lv.capacity_bytes for lv in h.levels]


def test_energy_table_json_round_trip():
    t = EnergyTable.default()
    again = EnergyTable.from_json(json.loads(json.dumps(t.to_json())))
    assert again == t
    assert hash(again) == hash(t)


# ---------------------------------------------------------------------------
# built-in reference schedule


def test_reference_schedule_is_valid_everywhere():
    for lay in builtin_benchmarks().values():
        bs = diannao_baseline(lay)
        assert validate_blocking(bs, lay) == [], lay.name


def test_reference_schedule_conv1():
    bench = builtin_benchmarks()
    assert render_blocking(diannao_baseline(bench["conv1"])) == \
        "C(16) K(16) Fw(11) Fh(11) K(384) C(256) X(256) Y(256)"


def test_reference_schedule_fc1():
    bench = builtin_benchmarks()
    assert render_blocking(diannao_baseline(bench["fc1"])) == "C(10) K(10) K(100) C(200)"
