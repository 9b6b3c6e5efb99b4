"""Ordered map over independent work items, capped by ``FRACHOPF_THREADS``."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count() -> int:
    raw = os.environ.get("FRACHOPF_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"FRACHOPF_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError("FRACHOPF_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


def pmap(fn, items) -> list:
    """``[fn(x) for x in items]``, possibly threaded; output order is input order."""
    items = list(items)
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
