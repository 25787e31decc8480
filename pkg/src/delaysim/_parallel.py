from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def batch_ranges(paths: int, batches: int) -> list[range]:
    """Split ``range(paths)`` into ``batches`` equal contiguous ranges."""
    if paths < 1 or batches < 1:
        raise ValueError("paths and batches must be positive")
    if paths % batches:
        raise ValueError(f"paths={paths} is not divisible by batches={batches}")
    size = paths // batches
    return [range(b * size, (b + 1) * size) for b in range(batches)]


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> list[R]:
    """``list(map(fn, items))``, optionally on a thread pool; order is preserved."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
