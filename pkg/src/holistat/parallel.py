"""Bounded worker pool with order-preserving results."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

WORKERS_ENV = "HOLISTAT_WORKERS"


def resolve_workers(requested=None):
    env = os.environ.get(WORKERS_ENV)
    if env:
        requested = int(env)
    n = 1 if requested is None else int(requested)
    if n < 1:
        raise ValueError(f"worker count must be >= 1, got {n}")
    return n


def pmap(func, items, workers=1, initializer=None, initargs=()):
    """``list(map(func, items))`` over up to ``workers`` processes.

    Output order always matches input order, so merges stay deterministic
    whatever the scheduling.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        if initializer is not None:
            initializer(*initargs)
        return [func(item) for item in items]
    chunk = max(1, len(items) // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers, initializer=initializer, initargs=initargs) as pool:
        return list(pool.map(func, items, chunksize=chunk))
