"""Command-line front end.

Subcommands: ``analyze`` a blocking string, ``simulate`` it against the
execution oracle, ``optimize`` a layer (codesign or fixed hierarchy),
``multicore`` partitioning study, ``codesign`` a shared hierarchy for a
network, and ``bench`` for the built-in layer suite.

Exit codes: 0 success, 1 validation error, 2 infeasibility.  JSON output is
canonical (sorted keys) so identical inputs and seeds give byte-identical
bytes regardless of ``--threads``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields
from importlib import resources

from .model import (
    BlockingString,
    BlockingSyntaxError,
    ConvblockError,
    EnergyTable,
    InfeasiblePartitionError,
    LayerShape,
    MemoryHierarchy,
    UnschedulableError,
    builtin_benchmarks,
    diannao_baseline,
    parse_blocking,
    render_blocking,
    unblocked_string,
    validate_blocking,
)
from .analysis import access_counts, derive_buffers, schedule_energy
from .simulate import check_equivalence, simulate
from .optimize import ScheduleResult, SearchConfig, optimize
from .parallel import SCHEMES, multicore_report, plans_to_csv, scheme_sharing_largest_buffer
from .codesign import joint_select

ENERGY_TABLE_ENV = "CONVBLOCK_ENERGY_TABLE"


@dataclass
class RunConfig:
    """Everything one invocation needs, resolved from flags."""

    subcommand: str
    layer: str
    string: str | None = None
    hierarchy: str | None = None
    energy_table: str | None = None
    mode: str | None = None
    search: str = "beam"
    levels: int = 2
    beam: int = 128
    seed: int = 0
    budget_kb: float | None = None
    cores: str = "1,2,4,8"
    scheme: str = "auto"
    format: str = "text"
    out: str | None = None
    threads: int = 1
    dump_trace: bool = False
    check: bool = False
    engine: str = "walk"
    mac_cap: int = 10**8

    @classmethod
    def from_args(cls, ns: argparse.Namespace) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in vars(ns).items() if k in known})


# ---------------------------------------------------------------------------
# input resolution


def _load_layer(source: str) -> LayerShape:
    presets = builtin_benchmarks()
    if source in presets:
        return presets[source]
    if os.path.exists(source):
        with open(source) as fh:
            doc = json.load(fh)
        if isinstance(doc, list):
            raise ConvblockError(f"{source} holds a layer list; expected one layer")
        return LayerShape.from_json(doc)
    parts = source.split("x")
    if len(parts) in (6, 7) and all(p.isdigit() for p in parts):
        x, y, c, k, fw, fh, *rest = (int(p) for p in parts)
        return LayerShape(source, x, y, c, k, fw, fh, n=rest[0] if rest else 1)
    raise ConvblockError(
        f"unknown layer {source!r} (not a preset, a file, or XxYxCxKxFwxFh[xN])")


def _load_layer_list(source: str) -> list[LayerShape]:
    presets = builtin_benchmarks()
    if os.path.exists(source):
        with open(source) as fh:
            doc = json.load(fh)
        docs = doc if isinstance(doc, list) else [doc]
        return [LayerShape.from_json(d) for d in docs]
    layers = []
    for name in source.split(","):
        name = name.strip()
        if name not in presets:
            raise ConvblockError(f"unknown layer {name!r} (not a preset, not a file)")
        layers.append(presets[name])
    return layers


def _load_hierarchy(source: str | None) -> MemoryHierarchy | None:
    if source is None:
        return None
    if source == "diannao":
        ref = resources.files("convblock").joinpath("data/diannao.json")
        return MemoryHierarchy.from_json(json.loads(ref.read_text()))
    return MemoryHierarchy.load(source)


def _load_table(cfg: RunConfig) -> EnergyTable:
    path = cfg.energy_table or os.environ.get(ENERGY_TABLE_ENV)
    return EnergyTable.load(path) if path else EnergyTable.default()


def _parse_string(cfg: RunConfig, layer: LayerShape) -> BlockingString:
    if cfg.string is None:
        raise ConvblockError("this subcommand needs --string")
    bs = parse_blocking(cfg.string)
    problems = validate_blocking(bs, layer)
    if problems:
        raise ConvblockError("; ".join(problems))
    return bs


def _search_config(cfg: RunConfig, mode: str) -> SearchConfig:
    budget = None
    if cfg.budget_kb is not None:
        budget = int(round(cfg.budget_kb * 1024))
    return SearchConfig(mode=mode, search=cfg.search, levels=cfg.levels,
                        beam_width=cfg.beam, seed=cfg.seed, threads=cfg.threads,
                        budget_bytes=budget)


def _emit(cfg: RunConfig, doc, text: str, csv: str | None = None) -> None:
    if cfg.format == "json":
        payload = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    elif cfg.format == "csv":
        if csv is None:
            raise ConvblockError(f"{cfg.subcommand} has no CSV form")
        payload = csv
    else:
        payload = text if text.endswith("\n") else text + "\n"
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)


def _fmt_table(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
                     for r in rows) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def _cmd_analyze(cfg: RunConfig) -> int:
    layer = _load_layer(cfg.layer)
    bs = _parse_string(cfg, layer)
    table = _load_table(cfg)
    hier = _load_hierarchy(cfg.hierarchy)
    mode = cfg.mode or ("fixed" if hier is not None else "codesign")
    counts = access_counts(bs, layer)
    report = schedule_energy(bs, layer, mode=mode, hierarchy=hier, table=table)
    doc = {
        "layer": layer.to_json(),
        "string": render_blocking(bs),
        "mode": mode,
        "total_macs": counts["mac_count"],
        "buffers": [{"kind": b.kind, "level": b.level,
                     "size_bytes": b.size_bytes,
                     "refetch_rate": [b.refetch_rate.numerator,
                                      b.refetch_rate.denominator]}
                    for b in derive_buffers(bs, layer)],
        "report": report.to_json(),
    }
    rows = [["kind", "level", "bytes", "location", "pJ/access", "accesses", "pJ"]]
    for be in report.per_buffer:
        rows.append([be.kind, str(be.level), str(be.size_bytes), be.location,
                     f"{be.unit_pj:.3f}", str(be.accesses), f"{be.pj:.1f}"])
    text = (f"layer {layer.name}: {render_blocking(bs)}\n"
            f"macs {counts['mac_count']}  dram reads {counts['dram_reads']}"
            f"  writes {counts['dram_writes']}\n" + _fmt_table(rows) +
            f"total {report.total_pj:.1f} pJ"
            f" ({report.pj_per_mac:.3f} pJ/mac)\n")
    _emit(cfg, doc, text)
    return 0


def _cmd_simulate(cfg: RunConfig) -> int:
    layer = _load_layer(cfg.layer)
    bs = _parse_string(cfg, layer)
    trace = simulate(bs, layer, mode=cfg.engine, mac_cap=cfg.mac_cap)
    doc = trace.to_json()
    if not cfg.dump_trace:
        doc.pop("levels", None)
    diff: list[str] = []
    if cfg.check:
        diff = check_equivalence(bs, layer, mode=cfg.engine, mac_cap=cfg.mac_cap)
        doc["equivalence_diff"] = diff
    lines = [f"{trace.mode} simulation of {render_blocking(bs)} on {layer.name}",
             f"macs {trace.mac_count}  dram reads {trace.dram_reads}"
             f"  dram writes {trace.dram_writes}"]
    if cfg.dump_trace:
        rows = [["kind", "level", "elements", "reads", "intake"]]
        for lv in trace.levels:
            rows.append([lv.kind, str(lv.level), str(lv.size_elements),
                         str(lv.reads_served), str(lv.elements_read_from_parent)])
        lines.append(_fmt_table(rows).rstrip())
    if cfg.check:
        lines.append("equivalence: " + ("ok" if not diff else "; ".join(diff)))
    _emit(cfg, doc, "\n".join(lines) + "\n")
    return 0 if not diff else 1


def _result_text(layer: LayerShape, res: ScheduleResult) -> str:
    return (f"{layer.name}: {res.rendered}\n"
            f"total {res.total_pj:.1f} pJ  ({res.report.pj_per_mac:.3f} pJ/mac)"
            f"  buffers {res.buffer_bytes} B  candidates {res.evaluated}\n")


def _cmd_optimize(cfg: RunConfig) -> int:
    layer = _load_layer(cfg.layer)
    table = _load_table(cfg)
    hier = _load_hierarchy(cfg.hierarchy)
    mode = cfg.mode or ("fixed" if hier is not None else "codesign")
    if mode == "fixed" and hier is None:
        raise ConvblockError("fixed mode needs --hierarchy (path or 'diannao')")
    res = optimize(layer, _search_config(cfg, mode), hierarchy=hier, table=table)
    _emit(cfg, res.to_json(), _result_text(layer, res))
    return 0


def _cmd_multicore(cfg: RunConfig) -> int:
    layer = _load_layer(cfg.layer)
    table = _load_table(cfg)
    if cfg.string is not None:
        bs = _parse_string(cfg, layer)
    else:
        bs = optimize(layer, _search_config(cfg, "codesign"), table=table).blocking
    cores = tuple(int(c) for c in cfg.cores.split(","))
    if cfg.scheme == "auto":
        schemes: tuple[str, ...] = (scheme_sharing_largest_buffer(bs, layer),)
    elif cfg.scheme == "all":
        schemes = SCHEMES
    else:
        schemes = (cfg.scheme,)
    budget = None if cfg.budget_kb is None else int(round(cfg.budget_kb * 1024))
    plans = multicore_report(layer, bs, schemes=schemes, cores=cores, table=table,
                             budget_bytes=budget)
    csv_text = plans_to_csv(plans)
    doc = {"layer": layer.to_json(), "string": render_blocking(bs),
           "plans": [p.to_json() for p in plans]}
    rows = [list(r.split(",")) for r in csv_text.strip().split("\n")]
    text = f"{layer.name}: {render_blocking(bs)}\n" + _fmt_table(rows)
    _emit(cfg, doc, text, csv=csv_text)
    return 0


def _cmd_codesign(cfg: RunConfig) -> int:
    layers = _load_layer_list(cfg.layer)
    if cfg.budget_kb is None:
        raise ConvblockError("codesign needs --budget-kb")
    table = _load_table(cfg)
    base = _search_config(cfg, "codesign")
    point = joint_select(layers, base.budget_bytes, cfg=base, table=table)
    doc = point.to_json()
    rows = [["layer", "pJ", "schedule"]]
    for name in point.per_layer_pj:
        rows.append([name, f"{point.per_layer_pj[name]:.1f}", point.schedules[name]])
    text = (f"budget {cfg.budget_kb:g} KB -> pools "
            f"{[b // 1024 for b in point.capacities_bytes]} KB"
            f" = {sum(point.capacities_bytes)} B total\n" + _fmt_table(rows) +
            f"network total {point.total_pj:.1f} pJ\n")
    _emit(cfg, doc, text)
    return 0


def _cmd_bench(cfg: RunConfig) -> int:
    table = _load_table(cfg)
    hier = _load_hierarchy(cfg.hierarchy or "diannao")
    header = ["layer", "macs", "baseline_pj", "optimized_pj", "gain",
              "baseline_kb_dram_pj", "optimized_kb_dram_pj", "kb_dram_gain"]
    rows, docs = [header], []
    for name, layer in builtin_benchmarks().items():
        base = diannao_baseline(layer)
        base_rep = schedule_energy(base, layer, mode="fixed", hierarchy=hier,
                                   table=table)
        res = optimize(layer, _search_config(cfg, "fixed"), hierarchy=hier,
                       table=table)
        opt_rep = res.report
        base_kb = base_rep.by_kind_dram_pj.get("KB", 0.0)
        opt_kb = opt_rep.by_kind_dram_pj.get("KB", 0.0)
        docs.append({
            "layer": name, "macs": layer.total_macs(),
            "baseline_string": render_blocking(base),
            "baseline_pj": base_rep.total_pj,
            "baseline_kb_dram_pj": base_kb,
            "optimized_string": res.rendered,
            "optimized_pj": res.total_pj,
            "optimized_kb_dram_pj": opt_kb,
        })
        rows.append([name, str(layer.total_macs()),
                     f"{base_rep.total_pj:.3e}", f"{res.total_pj:.3e}",
                     f"{base_rep.total_pj / res.total_pj:.2f}x",
                     f"{base_kb:.3e}", f"{opt_kb:.3e}",
                     f"{base_kb / opt_kb:.2f}x" if opt_kb else "inf"])
    csv_text = "\n".join(",".join(r) for r in rows) + "\n"
    _emit(cfg, {"benchmarks": docs}, _fmt_table(rows), csv=csv_text)
    return 0


_COMMANDS = {
    "analyze": _cmd_analyze,
    "simulate": _cmd_simulate,
    "optimize": _cmd_optimize,
    "multicore": _cmd_multicore,
    "codesign": _cmd_codesign,
    "bench": _cmd_bench,
}


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="convblock",
        description="Energy-aware loop blocking for convolutional layers.")
    sub = top.add_subparsers(dest="subcommand", required=True)

    def common(p: argparse.ArgumentParser, layer_required: bool = True) -> None:
        p.add_argument("--layer", required=layer_required, default="conv4",
                       help="preset name (conv1..conv5, fc1, fc2) or layer JSON path")
        p.add_argument("--energy-table", default=None,
                       help=f"energy table JSON (default: ${ENERGY_TABLE_ENV} or built-in)")
        p.add_argument("--format", choices=("text", "json", "csv"), default="text")
        p.add_argument("--out", default=None, help="write output here instead of stdout")
        p.add_argument("--seed", type=int, default=0)

    def searchy(p: argparse.ArgumentParser) -> None:
        p.add_argument("--search", choices=("beam", "exhaustive"), default="beam")
        p.add_argument("--levels", type=int, default=2,
                       help="blocking levels (occurrences per data dimension)")
        p.add_argument("--beam", type=int, default=128, help="beam width")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--budget-kb", type=float, default=None,
                       help="total on-chip capacity budget (codesign mode)")

    p = sub.add_parser("analyze", help="buffer chains and energy of a blocking string")
    common(p)
    p.add_argument("--string", required=True, help="blocking string, innermost first")
    p.add_argument("--hierarchy", default=None, help="hierarchy JSON path or 'diannao'")
    p.add_argument("--mode", choices=("codesign", "fixed"), default=None)

    p = sub.add_parser("simulate", help="run the execution oracle on a blocking string")
    common(p)
    p.add_argument("--string", required=True)
    p.add_argument("--check", action="store_true",
                   help="diff the oracle against the analytical model")
    p.add_argument("--engine", choices=("walk", "literal"), default="walk")
    p.add_argument("--mac-cap", type=int, default=10**8,
                   help="refuse runs larger than this many MACs")
    p.add_argument("--dump-trace", action="store_true",
                   help="include per-level counters in the output")

    p = sub.add_parser("optimize", help="search for the best blocking")
    common(p)
    searchy(p)
    p.add_argument("--mode", choices=("codesign", "fixed"), default=None)
    p.add_argument("--hierarchy", default=None, help="hierarchy JSON path or 'diannao'")

    p = sub.add_parser("multicore", help="partition a schedule across cores")
    common(p)
    searchy(p)
    p.add_argument("--string", default=None,
                   help="schedule to partition (default: optimize first)")
    p.add_argument("--scheme", default="auto",
                   choices=("auto", "all") + SCHEMES)
    p.add_argument("--cores", default="1,2,4,8", help="comma-separated core counts")

    p = sub.add_parser("codesign", help="choose one hierarchy for a set of layers")
    common(p)
    searchy(p)

    p = sub.add_parser("bench", help="baseline vs optimized on the preset suite")
    common(p, layer_required=False)
    searchy(p)
    p.add_argument("--hierarchy", default=None, help="defaults to the DianNao pools")
    return top


def run(cfg: RunConfig) -> int:
    """Execute one resolved invocation; raises on domain errors."""
    return _COMMANDS[cfg.subcommand](cfg)


def main(argv: list[str] | None = None) -> int:
    ns = _build_parser().parse_args(argv)
    cfg = RunConfig.from_args(ns)
    try:
        return run(cfg)
    except (UnschedulableError, InfeasiblePartitionError) as exc:
        print(f"convblock: infeasible: {exc}", file=sys.stderr)
        return 2
    except BlockingSyntaxError as exc:
        print(f"convblock: bad blocking string: {exc}", file=sys.stderr)
        return 1
    except ConvblockError as exc:
        print(f"convblock: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"convblock: invalid input: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
