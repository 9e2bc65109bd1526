"""Thread-pool helpers capped by the AOT_THREADS environment variable."""

from __future__ import annotations

import os
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

T = TypeVar("T")
R = TypeVar("R")


def thread_cap() -> int:
    """Worker cap from AOT_THREADS, falling back to the CPU count.

    The CLI reads AOT_THREADS through ``Settings`` and passes ``Settings.threads``
    down explicitly. This helper is only the default for library callers that
    pass ``workers=None``.
    """
    raw = os.environ.get("AOT_THREADS", "")
    try:
        value = int(raw)
    except ValueError:
        value = 0
    if value >= 1:
        return value
    return os.cpu_count() or 1


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    """Map ``fn`` over ``items``, returning results in input order.

    Scheduling never changes the output: results are collected by position,
    and callers fold them sequentially.
    """
    items = list(items)
    cap = thread_cap() if workers is None else workers
    cap = max(1, min(cap, len(items)))
    if cap == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=cap) as pool:
        return list(pool.map(fn, items))
