"""Bounded process-parallel map with results in input order."""
import os
from concurrent.futures import ProcessPoolExecutor


def parallel_map(fn, items, threads=1):
    """``[fn(x) for x in items]`` using up to ``threads`` worker processes.

    Results are returned in input order regardless of completion order.
    ``fn`` must be picklable (a module-level function or a partial of one).
    """
    items = list(items)
    threads = int(threads or 1)
    if threads < 1:
        raise ValueError("threads must be >= 1")
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    workers = min(threads, len(items), os.cpu_count() or threads)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
