"""Compiled event loop for the multistage chain.

All kernels share :func:`_rates` and :func:`_apply`, so a replica simulated through the batch
kernel draws exactly the same events as the same replica simulated alone.
Per event the stream is consumed as: one exponential holding time, one
uniform for the event class (progression vs infection), one uniform for the
stage within that class.
"""
import math

import numba
import numpy as np

from .. import rng

ABSORPTION = 0
HORIZON = 1
STAGE1_EXTINCTION = 2

PROGRESSION = 0
INFECTION = 1


@numba.njit(inline="always")
def _rates(a, K, n, prog_f, inf_f):
    """(total progression rate, infection rate sum without the a_0/n factor, total rate)."""
    p_sum = 0.0
    i_sum = 0.0
    for k in range(1, K + 1):
        p_sum += prog_f[k - 1] * a[k]
        i_sum += inf_f[k - 1] * a[k]
    return p_sum, i_sum, p_sum + i_sum * a[0] / n


@numba.njit(inline="always")
def _apply(a, K, p_sum, i_sum, total, prog_f, inf_f, counters, st):
    """Select the event class, then the stage, and apply the transition."""
    if rng.uniform(st) * total < p_sum:
        target = rng.uniform(st) * p_sum
        acc = 0.0
        stage = -1
        for k in range(1, K + 1):
            if a[k] > 0:
                stage = k
                acc += prog_f[k - 1] * a[k]
                if target < acc:
                    break
        a[stage] -= 1
        a[stage + 1] += 1
        if stage + 1 <= K:
            counters[stage] += 1
        return PROGRESSION, stage
    target = rng.uniform(st) * i_sum
    acc = 0.0
    stage = -1
    for k in range(1, K + 1):
        if a[k] > 0:
            stage = k
            acc += inf_f[k - 1] * a[k]
            if target < acc:
                break
    a[0] -= 1
    a[stage] += 1
    counters[stage - 1] += 1
    return INFECTION, stage


@numba.njit(inline="always")
def _step(a, K, n, prog_f, inf_f, counters, st):
    """Draw and apply one transition; returns the holding time (inf if absorbed)."""
    p_sum, i_sum, total = _rates(a, K, n, prog_f, inf_f)
    if total <= 0.0:
        return math.inf
    dt = rng.exponential(st) / total
    _apply(a, K, p_sum, i_sum, total, prog_f, inf_f, counters, st)
    return dt


@numba.njit(inline="always")
def _stopped(a, K, stop_code):
    if stop_code == STAGE1_EXTINCTION:
        return a[1] == 0
    for k in range(1, K + 1):
        if a[k] > 0:
            return False
    return True


@numba.njit(cache=True)
def run_events(a, clock, counters, prog_f, inf_f, n, st, stop_code, horizon, times_out, states_out):
    """Advance the chain, writing every event into the output buffers.

    ``clock`` is a float64[2] array holding (current time, first time a_1 == 0).
    Returns (events written, finished). When the buffers fill up before the
    stop rule is met the call returns early with ``finished=False``; calling
    again with fresh buffers resumes the same stream.
    """
    K = a.shape[0] - 2
    cap = times_out.shape[0]
    m = 0
    while True:
        if _stopped(a, K, stop_code):
            return m, True
        if m >= cap:
            return m, False
        p_sum, i_sum, total = _rates(a, K, n, prog_f, inf_f)
        dt = rng.exponential(st) / total
        if stop_code == HORIZON and clock[0] + dt > horizon:
            clock[0] = horizon
            return m, True
        _apply(a, K, p_sum, i_sum, total, prog_f, inf_f, counters, st)
        clock[0] += dt
        times_out[m] = clock[0]
        states_out[m, :] = a
        m += 1
        if a[1] == 0 and math.isinf(clock[1]):
            clock[1] = clock[0]


@numba.njit(cache=True)
def run_grid(a, clock, counters, prog_f, inf_f, n, st, stop_code, horizon, grid, grid_out):
    """Advance the chain, recording the (right-continuous) state at each grid time.

    Returns the number of events. Grid times after absorption receive the
    absorbing state; with a horizon stop, grid times must not exceed it.
    """
    K = a.shape[0] - 2
    g = 0
    n_grid = grid.shape[0]
    events = 0
    while True:
        if _stopped(a, K, stop_code):
            break
        p_sum, i_sum, total = _rates(a, K, n, prog_f, inf_f)
        t_next = clock[0] + rng.exponential(st) / total
        if stop_code == HORIZON and t_next > horizon:
            clock[0] = horizon
            break
        while g < n_grid and grid[g] < t_next:
            grid_out[g, :] = a
            g += 1
        _apply(a, K, p_sum, i_sum, total, prog_f, inf_f, counters, st)
        clock[0] = t_next
        events += 1
        if a[1] == 0 and math.isinf(clock[1]):
            clock[1] = clock[0]
    while g < n_grid:
        grid_out[g, :] = a
        g += 1
    return events


@numba.njit(cache=True)
def run_batch(keys, init, prog_f, inf_f, n, stop_code, horizon, grid,
              grid_out, final_out, counters_out, t0_out, tend_out, events_out):
    """Run one replica per key row; replica ``r`` uses Philox key ``keys[r]``."""
    R = keys.shape[0]
    K = init.shape[0] - 2
    clock = np.empty(2)
    for r in range(R):
        st = np.zeros(rng.STATE_SIZE, dtype=np.uint64)
        st[0] = keys[r, 0]
        st[1] = keys[r, 1]
        st[10] = np.uint64(4)
        a = init.copy()
        counters = init[1 : K + 1].copy()
        clock[0] = 0.0
        clock[1] = 0.0 if a[1] == 0 else math.inf
        events_out[r] = run_grid(a, clock, counters, prog_f, inf_f, n, st, stop_code, horizon,
                                 grid, grid_out[r])
        final_out[r, :] = a
        counters_out[r, :] = counters
        t0_out[r] = clock[1]
        tend_out[r] = clock[0]


@numba.njit(cache=True)
def run_partition(st, n, K, prog_f, inf_f, sizes_out, counters_out):
    """Sequential exploration of the population into epidemic clusters.

    Each round starts one stage-1 infective among the unexplored individuals,
    everyone explored earlier being removed, and runs to absorption. Returns
    the number of blocks written.
    """
    remaining = n
    s = 0
    a = np.zeros(K + 2, dtype=np.int64)
    counters = np.zeros(K, dtype=np.int64)
    while remaining > 0:
        a[:] = 0
        a[0] = remaining - 1
        a[1] = 1
        a[K + 1] = n - remaining
        counters[:] = 0
        counters[0] = 1
        while True:
            if math.isinf(_step(a, K, n, prog_f, inf_f, counters, st)):
                break
        size = remaining - a[0]
        sizes_out[s] = size
        counters_out[s, :] = counters
        remaining -= size
        s += 1
    return s
