"""Seed derivation and ordered parallel map.

Every random block is keyed by (master seed, block key), never by worker, so
results do not depend on the thread count.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np


def child_rng(seed, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def child_seed32(seed, *key) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def ordered_map(fn, items, threads: int = 1) -> list:
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def blocks(total: int, size: int):
    """(block_index, count) pairs covering ``total`` items."""
    out = []
    b = 0
    start = 0
    while start < total:
        n = min(size, total - start)
        out.append((b, n))
        start += n
        b += 1
    return out
