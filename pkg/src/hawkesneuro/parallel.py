"""Order-preserving map over independent work items."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "HAWKESNEURO_THREADS"


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def pmap(fn, items, threads: int | None = None) -> list:
    """``[fn(x) for x in items]``, optionally on a thread pool.

    Results come back in input order, so outputs never depend on scheduling
    as long as ``fn`` carries its own seed.
    """
    items = list(items)
    threads = default_threads() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
