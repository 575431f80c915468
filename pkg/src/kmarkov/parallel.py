"""Order-preserving trial map over an optional process pool."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def default_threads() -> int:
    return os.cpu_count() or 1


def pmap(fn: Callable[[T], R], items: Iterable[T], threads: int | None = 1) -> list[R]:
    """``[fn(x) for x in items]``, optionally on `threads` worker processes.

    Results come back in input order, so any reduction over them is
    independent of the degree of parallelism.
    """
    items = list(items)
    threads = default_threads() if threads is None else threads
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * threads))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items, chunksize=chunk))
