# utils/parallel.py
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

import config.settings as settings

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> List[R]:
    """
    Ordered map. Results come back in input order regardless of how many
    threads ran them, so callers stay deterministic.
    """
    items = list(items)
    n = settings.WORKERS if workers is None else workers
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
