"""Shared helpers: layer/blocking generators used across the suite."""

from __future__ import annotations

import random

from convblock.model import (
    BlockingString,
    LayerShape,
    Loop,
    divisors,
    parse_blocking,
    validate_blocking,
)

DATA_DIMS = ("X", "Y", "C", "K", "N")


def pb(text: str, layer: LayerShape) -> BlockingString:
    """Parse a blocking string and assert it is valid for the layer."""
    bs = parse_blocking(text)
    problems = validate_blocking(bs, layer)
    assert not problems, problems
    return bs


def random_layer(rng: random.Random) -> LayerShape:
    """A small random layer (the oracle-equivalence population)."""
    x = rng.randrange(1, 17)
    y = rng.randrange(1, 17)
    c = rng.randrange(1, 9)
    k = rng.randrange(1, 9)
    fw = rng.choice((1, 3))
    fh = rng.choice((1, 3))
    n = rng.randrange(1, 3)
    return LayerShape(f"rand{x}x{y}x{c}x{k}", x, y, c, k, fw, fh, n)


def random_valid_string(rng: random.Random, layer: LayerShape) -> BlockingString:
    """A random valid blocking for ``layer``.

    Deliberately messy: repeated equal extents (trip-1 loops), explicit unit
    loops, absent unit dimensions, and window loops at arbitrary depths all
    appear, so the consumers' canonicalization paths get exercised.
    """
    queues: list[list[Loop]] = []
    for dim in DATA_DIMS:
        size = layer.size_of(dim)
        if size == 1 and rng.random() < 0.7:
            continue
        occ = rng.choice((1, 1, 2, 2, 3))
        exts = [size]
        for _ in range(occ - 1):
            exts.append(rng.choice(divisors(exts[-1])))
        exts.reverse()
        queues.append([Loop(dim, e) for e in exts])
    for dim in ("Fw", "Fh"):
        size = layer.size_of(dim)
        if size == 1 and rng.random() < 0.7:
            continue
        queues.append([Loop(dim, size)])
    loops: list[Loop] = []
    while queues:
        i = rng.randrange(len(queues))
        loops.append(queues[i].pop(0))
        if not queues[i]:
            queues.pop(i)
    bs = BlockingString(tuple(loops))
    assert not validate_blocking(bs, layer)
    return bs
