from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")


def run_indexed(fn: Callable[[int], T], indices: Iterable[int], workers: int = 1) -> list[T]:
    """Evaluate ``fn`` on each index, returning results in index order.

    Every task derives its randomness from its own index, so the output is the
    same for any ``workers``.
    """
    indices = list(indices)
    if workers <= 1 or len(indices) <= 1:
        return [fn(i) for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, indices))
