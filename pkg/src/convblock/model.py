"""Core data model: layer shapes, blocking strings, memory hierarchies, energy tables.

A *blocking string* describes a blocked convolution loop nest from the innermost
loop outward.  Each entry names a dimension and the cumulative extent that the
nest covers once that loop finishes, e.g.::

    Fw(3) Fh(3) X(8) Y(8) C(4) K(4)

Extents along one dimension must form a divisor chain whose last element equals
the layer size, so trip counts (extent divided by the previous extent of the
same dimension) are always whole numbers.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

# Dimension vocabulary.  X/Y are output columns/rows, C input channels,
# K output channels, Fw/Fh the kernel window, N the batch.
DATA_DIMS = ("X", "Y", "C", "K", "N")
WINDOW_DIMS = ("Fw", "Fh")
ALL_DIMS = WINDOW_DIMS + ("X", "Y", "C", "K", "N")

BUFFER_KINDS = ("IB", "KB", "OB")

#: partial-sum updates touch an output element twice (one read, one write)
OB_UPDATE_ACCESSES = 2


class ConvblockError(Exception):
    """Base class for model/scheduling errors."""


class BlockingSyntaxError(ConvblockError):
    """Raised by :func:`parse_blocking` for malformed text."""


class UnschedulableError(ConvblockError):
    """Raised when a fixed hierarchy cannot hold any buffer on chip."""


class InfeasiblePartitionError(ConvblockError):
    """Raised when a schedule cannot be cut for the requested core count."""


@dataclass(frozen=True)
class LayerShape:
    """Shape of one convolutional (or fully connected) layer."""

    name: str
    x: int
    y: int
    c: int
    k: int
    fw: int
    fh: int
    n: int = 1
    element_bits: int = 16

    def __post_init__(self) -> None:
        for attr in ("x", "y", "c", "k", "fw", "fh", "n", "element_bits"):
            v = getattr(self, attr)
            if not isinstance(v, int) or v < 1:
                raise ConvblockError(f"layer {self.name!r}: {attr} must be a positive int, got {v!r}")

    def size_of(self, dim: str) -> int:
        return {
            "X": self.x, "Y": self.y, "C": self.c, "K": self.k,
            "Fw": self.fw, "Fh": self.fh, "N": self.n,
        }[dim]

    @property
    def total_macs(self) -> int:
        return self.n * self.x * self.y * self.c * self.k * self.fw * self.fh

    @property
    def input_elements(self) -> int:
        """Haloed input array size (what actually exists in memory)."""
        return self.n * (self.x + self.fw - 1) * (self.y + self.fh - 1) * self.c

    @property
    def kernel_elements(self) -> int:
        return self.fw * self.fh * self.c * self.k

    @property
    def output_elements(self) -> int:
        return self.n * self.x * self.y * self.k

    def bytes_of(self, elements: int) -> int:
        return -(-elements * self.element_bits // 8)

    def to_json(self) -> dict:
        return {"name": self.name, "x": self.x, "y": self.y, "c": self.c, "k": self.k,
                "fw": self.fw, "fh": self.fh, "n": self.n, "element_bits": self.element_bits}

    @classmethod
    def from_json(cls, doc: Mapping) -> "LayerShape":
        return cls(name=str(doc.get("name", "layer")),
                   x=int(doc["x"]), y=int(doc["y"]), c=int(doc["c"]), k=int(doc["k"]),
                   fw=int(doc.get("fw", 1)), fh=int(doc.get("fh", 1)),
                   n=int(doc.get("n", 1)), element_bits=int(doc.get("element_bits", 16)))


@dataclass(frozen=True)
class Loop:
    """One loop of the nest: dimension name plus cumulative covered extent."""

    dim: str
    extent: int


@dataclass(frozen=True)
class BlockingString:
    """A full loop nest, innermost loop first."""

    loops: tuple[Loop, ...]

    def __str__(self) -> str:
        return render_blocking(self)

    def dims(self) -> tuple[str, ...]:
        return tuple(lp.dim for lp in self.loops)

    def covered(self, dim: str) -> int:
        ext = 1
        for lp in self.loops:
            if lp.dim == dim:
                ext = lp.extent
        return ext

    def trip_counts(self) -> tuple[int, ...]:
        trips = []
        prev = {d: 1 for d in ALL_DIMS}
        for lp in self.loops:
            trips.append(lp.extent // prev[lp.dim])
            prev[lp.dim] = lp.extent
        return tuple(trips)


_TOKEN = re.compile(r"([A-Za-z]+)\(\s*(-?\d+)\s*\)")


def parse_blocking(text: str) -> BlockingString:
    """Parse `Dim(extent)` tokens, innermost first, into a :class:`BlockingString`.

    Raises :class:`BlockingSyntaxError` with a character position for malformed
    input; semantic checks (divisor chains, coverage) live in
    :func:`validate_blocking`.
    """
    loops: list[Loop] = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m:
            raise BlockingSyntaxError(f"malformed loop token at position {pos}: {text[pos:pos + 12]!r}")
        dim, extent = m.group(1), int(m.group(2))
        if dim not in ALL_DIMS:
            raise BlockingSyntaxError(f"unknown dimension {dim!r} at position {pos}")
        if extent < 1:
            raise BlockingSyntaxError(f"non-positive extent {extent} for {dim} at position {pos}")
        loops.append(Loop(dim, extent))
        pos = m.end()
    if not loops:
        raise BlockingSyntaxError("empty blocking string")
    return BlockingString(tuple(loops))


def render_blocking(bs: BlockingString) -> str:
    return " ".join(f"{lp.dim}({lp.extent})" for lp in bs.loops)


def validate_blocking(bs: BlockingString, layer: LayerShape) -> list[str]:
    """Return a list of violation messages (empty when the string is valid).

    Rules: per-dimension extents strictly increase and form a divisor chain;
    the final extent equals the layer size; a dimension may be absent only if
    its layer size is 1; the kernel window dims Fw/Fh may appear at most once
    (they are never split).
    """
    problems: list[str] = []
    last: dict[str, int] = {}
    count: dict[str, int] = {}
    for i, lp in enumerate(bs.loops):
        prev = last.get(lp.dim, 1)
        count[lp.dim] = count.get(lp.dim, 0) + 1
        if lp.dim in WINDOW_DIMS and count[lp.dim] > 1:
            problems.append(f"loop {i}: {lp.dim} appears more than once (window dims are unsplit)")
        if lp.extent < prev:
            problems.append(f"loop {i}: {lp.dim}({lp.extent}) does not increase over inner extent {prev}")
        elif lp.extent % prev != 0:
            problems.append(f"loop {i}: {lp.dim}({lp.extent}) is not a multiple of inner extent {prev}")
        if layer.size_of(lp.dim) % lp.extent != 0:
            problems.append(f"loop {i}: {lp.dim}({lp.extent}) does not divide the layer size {layer.size_of(lp.dim)}")
        last[lp.dim] = max(prev, lp.extent)
    for dim in ALL_DIMS:
        need = layer.size_of(dim)
        got = last.get(dim, 1)
        if got != need:
            problems.append(f"dimension {dim} covers {got} of {need}")
    return problems


def unblocked_string(layer: LayerShape) -> BlockingString:
    """The canonical single-level nest: window innermost, then X Y C K (N last)."""
    loops = [Loop("Fw", layer.fw), Loop("Fh", layer.fh),
             Loop("X", layer.x), Loop("Y", layer.y),
             Loop("C", layer.c), Loop("K", layer.k)]
    if layer.n > 1:
        loops.append(Loop("N", layer.n))
    return BlockingString(tuple(loops))


def builtin_benchmarks() -> dict[str, LayerShape]:
    """The built-in benchmark layers (five conv layers plus two FC layers)."""
    shapes = {
        "conv1": (256, 256, 256, 384, 11, 11),
        "conv2": (500, 375, 32, 48, 9, 9),
        "conv3": (32, 32, 108, 200, 4, 4),
        "conv4": (56, 56, 128, 256, 3, 3),
        "conv5": (28, 28, 256, 512, 3, 3),
        "fc1": (1, 1, 200, 100, 1, 1),
        "fc2": (1, 1, 4096, 4096, 1, 1),
    }
    return {name: LayerShape(name, x, y, c, k, fw, fh)
            for name, (x, y, c, k, fw, fh) in shapes.items()}


def diannao_baseline(layer: LayerShape, ib_capacity_bytes: int = 2048) -> BlockingString:
    """The reference schedule for the DianNao-style fixed machine.

    Mirrors that datapath's 16x16 channel/kernel tiling, with one extra X
    block chosen as the largest divisor of the layer width whose input tile
    still fits the input pool; unit and repeated loops are pruned.
    """
    c1 = max(d for d in divisors(layer.c) if d <= 16)
    k1 = max(d for d in divisors(layer.k) if d <= 16)
    x0 = 1
    for d in divisors(layer.x):
        tile = (d + layer.fw - 1) * layer.fh * c1 * layer.n
        if layer.bytes_of(tile) <= ib_capacity_bytes:
            x0 = max(x0, d)
    seq = [("C", c1), ("K", k1), ("Fw", layer.fw), ("Fh", layer.fh),
           ("X", x0), ("K", layer.k), ("C", layer.c),
           ("X", layer.x), ("Y", layer.y), ("N", layer.n)]
    loops: list[Loop] = []
    last: dict[str, int] = {}
    for dim, ext in seq:
        if ext > last.get(dim, 1):
            loops.append(Loop(dim, ext))
            last[dim] = ext
    return BlockingString(tuple(loops))


# ---------------------------------------------------------------------------
# Energy table

# pJ per 16-bit access for on-chip SRAM, by (capacity KB, port width bits).
_SRAM_PJ: dict[int, dict[int, float]] = {
    1:    {64: 1.20, 128: 0.93, 256: 0.69, 512: 0.57},
    2:    {64: 1.54, 128: 1.37, 256: 0.91, 512: 0.68},
    4:    {64: 2.11, 128: 1.68, 256: 1.34, 512: 0.90},
    8:    {64: 3.19, 128: 2.71, 256: 2.21, 512: 1.33},
    16:   {64: 4.36, 128: 3.57, 256: 2.66, 512: 2.19},
    32:   {64: 5.82, 128: 4.80, 256: 3.52, 512: 2.64},
    64:   {64: 8.10, 128: 7.51, 256: 5.79, 512: 4.67},
    128:  {64: 11.66, 128: 11.50, 256: 8.46, 512: 6.15},
    256:  {64: 15.60, 128: 15.51, 256: 13.09, 512: 8.99},
    512:  {64: 23.37, 128: 23.24, 256: 17.93, 512: 15.76},
    1024: {64: 36.32, 128: 32.81, 256: 28.88, 512: 25.22},
}


@dataclass(frozen=True, eq=False)
class EnergyTable:
    """Per-access energy model: SRAM grid, DRAM flat cost, MAC cost.

    ``sram_pj`` maps capacity in KB to a width(bits)->pJ row.  Lookups between
    rows interpolate log-log; capacities above ``dram_boundary_kb`` cost
    ``dram_pj``; sub-1KB capacities extrapolate the 1->2KB slope downward but
    never below ``subkb_floor_pj``.
    """

    sram_pj: Mapping[int, Mapping[int, float]] = field(default_factory=lambda: _SRAM_PJ)
    dram_pj: float = 320.0
    mac_pj: float = 1.0
    write_multiplier: float = 1.0
    subkb_floor_pj: float = 0.2
    dram_boundary_kb: int = 16384

    def __post_init__(self) -> None:
        grid = tuple((int(kb), tuple((int(w), float(v))
                                     for w, v in sorted(row.items())))
                     for kb, row in sorted(self.sram_pj.items()))
        key = (grid, self.dram_pj, self.mac_pj, self.write_multiplier,
               self.subkb_floor_pj, self.dram_boundary_kb)
        object.__setattr__(self, "_key", key)
        object.__setattr__(self, "_hash", hash(key))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, EnergyTable) and self._key == other._key

    def __hash__(self) -> int:
        return self._hash

    def widths(self) -> tuple[int, ...]:
        row = self.sram_pj[min(self.sram_pj)]
        return tuple(sorted(row))

    def sizes_kb(self) -> tuple[int, ...]:
        return tuple(sorted(self.sram_pj))

    @classmethod
    def default(cls) -> "EnergyTable":
        return cls()

    def to_json(self) -> dict:
        return {
            "sram_pj": {str(kb): {str(w): v for w, v in row.items()}
                        for kb, row in self.sram_pj.items()},
            "dram_pj": self.dram_pj,
            "mac_pj": self.mac_pj,
            "write_multiplier": self.write_multiplier,
            "subkb_floor_pj": self.subkb_floor_pj,
            "dram_boundary_kb": self.dram_boundary_kb,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "EnergyTable":
        sram = {int(kb): {int(w): float(v) for w, v in row.items()}
                for kb, row in doc["sram_pj"].items()}
        return cls(sram_pj=sram,
                   dram_pj=float(doc.get("dram_pj", 320.0)),
                   mac_pj=float(doc.get("mac_pj", 1.0)),
                   write_multiplier=float(doc.get("write_multiplier", 1.0)),
                   subkb_floor_pj=float(doc.get("subkb_floor_pj", 0.2)),
                   dram_boundary_kb=int(doc.get("dram_boundary_kb", 16384)))

    @classmethod
    def load(cls, path: str) -> "EnergyTable":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# Memory hierarchy (fixed mode)


@dataclass(frozen=True)
class MemLevel:
    """One physical memory pool.  ``capacity_bytes`` is None for DRAM.

    ``buffers`` restricts which buffer kinds may live here (None = any).
    Pools that share a ``level`` index sit side by side at the same distance
    from the datapath (e.g. separate input/kernel/output scratchpads).
    """

    capacity_bytes: int | None
    word_bits: int = 64
    kind: str = "SRAM"
    buffers: frozenset[str] | None = None
    level: int = 0

    @property
    def is_dram(self) -> bool:
        return self.kind.upper() == "DRAM"

    def allows(self, buffer_kind: str) -> bool:
        return self.buffers is None or buffer_kind in self.buffers


@dataclass(frozen=True)
class MemoryHierarchy:
    """An ordered sequence of pools, innermost first, ending in DRAM."""

    levels: tuple[MemLevel, ...]

    def __post_init__(self) -> None:
        if not self.levels:
            raise ConvblockError("hierarchy needs at least a DRAM level")
        drams = [lv for lv in self.levels if lv.is_dram]
        if len(drams) != 1 or not self.levels[-1].is_dram:
            raise ConvblockError("hierarchy must end with exactly one DRAM level")
        prev_group = -1
        group_max: list[int] = []
        for lv in self.levels[:-1]:
            if lv.capacity_bytes is None or lv.capacity_bytes <= 0:
                raise ConvblockError("on-chip pools need a positive capacity")
            if lv.level < prev_group:
                raise ConvblockError("pool level indices must be non-decreasing")
            if lv.level == prev_group:
                group_max[-1] = max(group_max[-1], lv.capacity_bytes)
            else:
                group_max.append(lv.capacity_bytes)
            prev_group = lv.level
        for a, b in zip(group_max, group_max[1:]):
            if b < a:
                raise ConvblockError("pool capacities must not shrink with level")

    @property
    def pools(self) -> tuple[MemLevel, ...]:
        return self.levels[:-1]

    def on_chip_bytes(self) -> int:
        return sum(lv.capacity_bytes or 0 for lv in self.pools)

    def to_json(self) -> dict:
        out = []
        for lv in self.levels:
            if lv.is_dram:
                out.append({"kind": "DRAM"})
            else:
                doc: dict = {"kb": lv.capacity_bytes / 1024, "width": lv.word_bits,
                             "level": lv.level}
                if lv.buffers is not None:
                    doc["buffers"] = sorted(lv.buffers)
                out.append(doc)
        return {"levels": out}

    @classmethod
    def from_json(cls, doc: Mapping) -> "MemoryHierarchy":
        levels: list[MemLevel] = []
        next_level = 0
        for entry in doc["levels"]:
            if str(entry.get("kind", "SRAM")).upper() == "DRAM":
                levels.append(MemLevel(None, kind="DRAM", level=next_level))
                continue
            if "bytes" in entry:
                cap = int(entry["bytes"])
            else:
                cap = int(round(float(entry["kb"]) * 1024))
            buffers = entry.get("buffers")
            lvl = int(entry.get("level", next_level))
            levels.append(MemLevel(cap, int(entry.get("width", 64)), "SRAM",
                                   frozenset(buffers) if buffers is not None else None, lvl))
            next_level = lvl + 1
        return cls(tuple(levels))

    @classmethod
    def load(cls, path: str) -> "MemoryHierarchy":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    @classmethod
    def diannao(cls) -> "MemoryHierarchy":
        """Split scratchpads: 2KB inputs, 32KB kernels, 2KB outputs, 64-bit ports."""
        return cls((
            MemLevel(2 * 1024, 64, "SRAM", frozenset({"IB"}), 0),
            MemLevel(32 * 1024, 64, "SRAM", frozenset({"KB"}), 0),
            MemLevel(2 * 1024, 64, "SRAM", frozenset({"OB"}), 0),
            MemLevel(None, kind="DRAM", level=1),
        ))


def divisors(n: int) -> list[int]:
    """All divisors of ``n`` in increasing order."""
    small, large = [], []
    d = 1
    while d * d <= n:
        if n % d == 0:
            small.append(d)
            if d != n // d:
                large.append(n // d)
        d += 1
    return small + large[::-1]
