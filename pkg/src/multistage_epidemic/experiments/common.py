"""Helpers shared by the studies: initial conditions, seeds, chunked CTMC batches."""
from __future__ import annotations

import math
from functools import partial

import numpy as np

from .. import rng
from ..ctmc import ModelParams, StopRule, simulate_batch
from ..scaling import ScalingConstants
from .runner import run_chunked

# stream tags keep the random streams of different studies apart
CONVERGENCE, OUTBREAK, COLLAPSE, CONJECTURE, PARTITION = 1, 2, 3, 4, 5
BOOTSTRAP = 99


def ceil_root(n: int, p: int) -> int:
    """Smallest integer c with c**p >= n."""
    c = max(1, int(math.ceil(n ** (1.0 / p))))
    while c > 1 and (c - 1) ** p >= n:
        c -= 1
    while c ** p < n:
        c += 1
    return c


def state_with_stage1(n: int, K: int, infected: int) -> np.ndarray:
    if not 0 <= infected <= n:
        raise ValueError(f"initial stage-1 count {infected} outside [0, {n}]")
    a = np.zeros(K + 2, dtype=np.int64)
    a[0] = n - infected
    a[1] = infected
    return a


def scaled_stage1_count(constants: ScalingConstants, a1: float) -> int:
    """Integer stage-1 count whose rescaled value is closest to ``a1``."""
    return max(1, min(constants.n, int(round(a1 * constants.alpha[1]))))


def master_seed(seed) -> int:
    return rng.as_seed(seed).master_seed if seed is not None else rng.fresh_master_seed()


def _batch_task(params, init, seed, stop_rule, grid, first, count):
    b = simulate_batch(params, init, count, seed, stop_rule, grid, first_replica=first)
    return {"grid_states": b.grid_states, "final": b.final, "counters": b.counters,
            "t0_stage1": b.t0_stage1, "n_events": b.n_events}


def run_batch(params: ModelParams, init, replicas: int, seed: rng.ReplicaSeed, stop_rule: StopRule | None = None,
              grid=None, workers: int | None = None, chunk: int = 2000) -> dict:
    """Chunked :func:`simulate_batch`; results are independent of chunking and workers."""
    task = partial(_batch_task, params, np.asarray(init), seed, stop_rule or StopRule.absorption(), grid)
    return run_chunked(task, replicas, chunk, workers)
