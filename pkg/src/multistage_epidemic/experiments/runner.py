"""Fan replica ranges out over worker processes with a fixed aggregation order."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np


def default_workers() -> int:
    return os.cpu_count() or 1


def chunk_ranges(replicas: int, chunk: int) -> list:
    if replicas < 0:
        raise ValueError("replicas must be >= 0")
    return [(s, min(chunk, replicas - s)) for s in range(0, replicas, chunk)]


def run_chunked(task, replicas: int, chunk: int = 2000, workers: int | None = None) -> dict:
    """Call ``task(first, count)`` over consecutive replica ranges and concatenate.

    ``task`` returns a dict of arrays whose first axis is the replica. Since
    every replica owns its random stream, the result does not depend on the
    chunking or on ``workers``; chunks are concatenated in replica order.
    """
    ranges = chunk_ranges(replicas, chunk)
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if workers == 1 or len(ranges) <= 1:
        parts = [task(s, m) for s, m in ranges]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(ranges))) as pool:
            parts = list(pool.map(task, *zip(*ranges)))
    if not parts:
        return {}
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
