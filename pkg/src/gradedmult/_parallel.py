"""Ordered parallel map used by the sweeps."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

WORKERS_ENV = "GRADEDMULT_WORKERS"


def worker_count(workers=None):
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    return max(1, int(workers))


def pmap(func, items, workers=None):
    """``[func(x) for x in items]``, evaluated on a thread pool.

    Results keep the input order, so reductions over them do not depend on
    the worker count.
    """
    items = list(items)
    n = worker_count(workers)
    if n == 1 or len(items) < 2:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(func, items))
