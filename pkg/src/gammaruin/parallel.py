"""Deterministic block-parallel map over a fork-context process pool.

Work is split into fixed blocks that do not depend on the worker count, and
results come back in block order, so merged output is identical for any
number of workers.  The task callable is stored in a module global before
the pool forks, which lets it be a closure (no pickling of the task).
"""

from __future__ import annotations

import multiprocessing as mp
import os
from typing import Any, Callable, Sequence

__all__ = ["map_blocks", "default_workers", "split_range"]

_TASK: Callable[[Any], Any] | None = None


def default_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1))


def split_range(start: int, stop: int, block: int) -> list[tuple[int, int]]:
    """``[start, stop)`` cut into consecutive pieces of at most ``block``."""
    if block < 1:
        raise ValueError("block size must be positive")
    return [(lo, min(lo + block, stop)) for lo in range(start, stop, block)]


def _run(item):
    return _TASK(item)


def map_blocks(func: Callable[[Any], Any], items: Sequence[Any], workers: int = 1) -> list[Any]:
    """``[func(x) for x in items]``, optionally across forked workers."""
    global _TASK
    items = list(items)
    if workers <= 1 or len(items) <= 1 or "fork" not in mp.get_all_start_methods():
        return [func(x) for x in items]
    _TASK = func
    try:
        ctx = mp.get_context("fork")
        with ctx.Pool(min(workers, len(items))) as pool:
            return list(pool.imap(_run, items, chunksize=1))
    finally:
        _TASK = None
