from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .. import rng
from . import _kernels
from .model import ModelParams, check_state

StopKind = Literal["absorption", "horizon", "stage1"]
_STOP_CODES = {"absorption": _kernels.ABSORPTION, "horizon": _kernels.HORIZON, "stage1": _kernels.STAGE1_EXTINCTION}


@dataclass(frozen=True)
class StopRule:
    """When a run ends: at absorption, at a fixed horizon, or when stage 1 dies out."""

    kind: StopKind = "absorption"
    horizon: float = math.inf

    def __post_init__(self):
        if self.kind not in _STOP_CODES:
            raise ValueError(f"unknown stop rule {self.kind!r}")
        if self.kind == "horizon":
            if not self.horizon >= 0:
                raise ValueError(f"horizon must be >= 0, got {self.horizon}")
        else:
            object.__setattr__(self, "horizon", math.inf)

    @classmethod
    def absorption(cls) -> "StopRule":
        return cls("absorption")

    @classmethod
    def at(cls, horizon: float) -> "StopRule":
        return cls("horizon", float(horizon))

    @classmethod
    def stage1_extinction(cls) -> "StopRule":
        return cls("stage1")

    @property
    def code(self) -> int:
        return _STOP_CODES[self.kind]

    def as_record(self):
        return self.kind if self.kind != "horizon" else {"horizon": self.horizon}


def _frozen(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One run of the chain as a right-continuous piecewise-constant path.

    ``times[0] == 0`` and ``states[0]`` is the initial state; row ``i`` is the
    state from ``times[i]`` until ``times[i+1]`` (or ``t_end``). In grid mode
    the rows are the exact states at the observation times instead of events.
    ``counters[k-1]`` counts individuals ever in stage ``k`` (initial infecteds
    included).
    """

    params: ModelParams
    times: np.ndarray
    states: np.ndarray
    seed: rng.ReplicaSeed
    counters: np.ndarray
    stop_rule: StopRule
    t_end: float
    t0_stage1: float
    n_events: int
    mode: Literal["events", "grid", "tau-leap"] = "events"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("times", "states", "counters"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def K(self) -> int:
        return self.params.K

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def absorbed(self) -> bool:
        return not self.final_state[1 : self.K + 1].any()

    def state_at(self, t) -> np.ndarray:
        """State at time(s) ``t`` (right-continuous); rows for array input."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("query times must be >= 0")
        if np.any(t > self.t_end) and not self.absorbed:
            raise ValueError(f"query time beyond the simulated range [0, {self.t_end}]")
        idx = np.searchsorted(self.times, t, side="right") - 1
        return self.states[idx]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time"] + [f"a_{k}" for k in range(self.K + 2)])
        for t, row in zip(self.times, self.states):
            w.writerow([repr(float(t))] + [int(v) for v in row])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "seed": self.seed.as_record(),
            "n": self.n,
            "K": self.K,
            "delta": list(self.params.delta),
            "epsilon": list(self.params.epsilon),
            "stop_rule": self.stop_rule.as_record(),
            "final_state": [int(v) for v in self.final_state],
            "N": [int(v) for v in self.counters],
            "T0_stage1": None if math.isinf(self.t0_stage1) else float(self.t0_stage1),
            "n_events": int(self.n_events),
            "mode": self.mode,
            "counter_convention": "initial infecteds counted in their starting stage",
        }


def event_bound(params: ModelParams, init: np.ndarray) -> int:
    """Upper bound on the number of transitions before absorption.

    Each susceptible is infected at most once and each individual progresses
    at most once per remaining stage.
    """
    K = params.K
    stages_left = K + 1 - np.arange(1, K + 1)
    return int(init[0] * (K + 1) + (init[1 : K + 1] * stages_left).sum())


def _kernel_args(params: ModelParams):
    return (np.ascontiguousarray(params.progression_factors, dtype=float),
            np.ascontiguousarray(params.infection_factors, dtype=float))


def simulate_path(params: ModelParams, init, stop_rule: StopRule | None = None, seed=None,
                  grid=None) -> Trajectory:
    """Exact (event-by-event) simulation of one replica.

    With ``grid`` given, only the states at those observation times are kept
    (thinned mode); otherwise every event is stored.
    """
    stop_rule = stop_rule or StopRule.absorption()
    seed = rng.as_seed(seed)
    a = check_state(init, params).copy()
    K = params.K
    prog_f, inf_f = _kernel_args(params)
    st = seed.state()
    counters = a[1 : K + 1].copy()
    clock = np.array([0.0, 0.0 if a[1] == 0 else math.inf])
    horizon = stop_rule.horizon

    if grid is not None:
        grid = np.ascontiguousarray(grid, dtype=float)
        if grid.ndim != 1 or np.any(np.diff(grid) < 0) or (grid.size and grid[0] < 0):
            raise ValueError("grid must be a nondecreasing vector of times >= 0")
        if stop_rule.kind == "stage1":
            raise ValueError("grid mode needs a stop rule that defines the state at every grid time")
        if stop_rule.kind == "horizon" and grid.size and grid[-1] > horizon:
            raise ValueError("grid extends beyond the horizon")
        out = np.empty((grid.size, K + 2), dtype=np.int64)
        events = _kernels.run_grid(a, clock, counters, prog_f, inf_f, float(params.n), st,
                                   stop_rule.code, horizon, grid, out)
        t_end = horizon if stop_rule.kind == "horizon" else clock[0]
        return Trajectory(params, grid, out, seed, counters, stop_rule, float(t_end),
                          float(clock[1]), int(events), mode="grid")

    times = [np.zeros(1)]
    states = [a[None, :].copy()]
    cap = max(16, min(event_bound(params, a), 1 << 12))
    while True:
        t_buf = np.empty(cap)
        s_buf = np.empty((cap, K + 2), dtype=np.int64)
        m, finished = _kernels.run_events(a, clock, counters, prog_f, inf_f, float(params.n), st,
                                          stop_rule.code, horizon, t_buf, s_buf)
        times.append(t_buf[:m])
        states.append(s_buf[:m])
        if finished:
            break
        cap = min(cap * 2, 1 << 22)
    times = np.concatenate(times)
    states = np.concatenate(states)
    t_end = horizon if stop_rule.kind == "horizon" else float(times[-1])
    return Trajectory(params, times, states, seed, counters, stop_rule, float(t_end),
                      float(clock[1]), int(times.size - 1))


@dataclass(frozen=True, eq=False)
class BatchResult:
    """Per-replica summaries of a batch of independent runs.

    ``grid_states[r, g]`` is replica ``r``'s state at ``grid[g]``.
    """

    params: ModelParams
    init: np.ndarray
    seed: rng.ReplicaSeed
    first_replica: int
    grid: np.ndarray
    grid_states: np.ndarray
    final: np.ndarray
    counters: np.ndarray
    t0_stage1: np.ndarray
    t_end: np.ndarray
    n_events: np.ndarray

    @property
    def replicas(self) -> int:
        return self.final.shape[0]


def simulate_batch(params: ModelParams, init, replicas: int, seed, stop_rule: StopRule | None = None,
                   grid=None, first_replica: int = 0) -> BatchResult:
    """Run replicas ``first_replica .. first_replica+replicas-1`` of ``seed``'s stream.

    Replica ``r`` here is bit-identical to ``simulate_path(..., seed=seed.child(r), grid=grid)``.
    """
    stop_rule = stop_rule or StopRule.absorption()
    if stop_rule.kind == "stage1" and grid is not None and len(grid):
        raise ValueError("grid mode needs a stop rule that defines the state at every grid time")
    seed = rng.as_seed(seed)
    a = check_state(init, params)
    K = params.K
    grid = np.ascontiguousarray(np.zeros(0) if grid is None else grid, dtype=float)
    if stop_rule.kind == "horizon" and grid.size and grid[-1] > stop_rule.horizon:
        raise ValueError("grid extends beyond the horizon")
    keys = rng.replica_keys(seed, first_replica, replicas)
    grid_out = np.empty((replicas, grid.size, K + 2), dtype=np.int64)
    final = np.empty((replicas, K + 2), dtype=np.int64)
    counters = np.empty((replicas, K), dtype=np.int64)
    t0 = np.empty(replicas)
    tend = np.empty(replicas)
    events = np.empty(replicas, dtype=np.int64)
    prog_f, inf_f = _kernel_args(params)
    _kernels.run_batch(keys, a, prog_f, inf_f, float(params.n), stop_rule.code, stop_rule.horizon,
                       grid, grid_out, final, counters, t0, tend, events)
    if stop_rule.kind == "horizon":
        tend[:] = stop_rule.horizon
    return BatchResult(params, a, seed, first_replica, grid, grid_out, final, counters, t0, tend, events)


def simulate_tau_leap(params: ModelParams, init, step: float, horizon: float, seed=None) -> Trajectory:
    """Approximate fixed-step tau-leaping on a grid of spacing ``step``.

    Exploratory only: Poisson counts per channel, capped so no coordinate goes
    negative. Not an exact-law method.
    """
    if step <= 0 or horizon < 0:
        raise ValueError("step must be > 0 and horizon >= 0")
    seed = rng.as_seed(seed)
    gen = seed.generator()
    a = check_state(init, params).copy()
    K = params.K
    n_steps = int(math.ceil(horizon / step))
    times = np.minimum(np.arange(n_steps + 1) * step, horizon)
    states = np.empty((n_steps + 1, K + 2), dtype=np.int64)
    states[0] = a
    counters = a[1 : K + 1].copy()
    pf, inf = params.progression_factors, params.infection_factors
    for i in range(1, n_steps + 1):
        h = times[i] - times[i - 1]
        infected = a[1 : K + 1].astype(float)
        n_prog = gen.poisson(pf * infected * h)
        n_inf = gen.poisson(inf * infected * a[0] / params.n * h)
        n_prog = np.minimum(n_prog, a[1 : K + 1])
        if n_inf.sum() > a[0]:
            n_inf = np.floor(n_inf * (a[0] / n_inf.sum())).astype(np.int64)
        a[0] -= n_inf.sum()
        a[1 : K + 1] += n_inf - n_prog
        a[2 : K + 2] += n_prog
        counters += n_inf
        counters[1:] += n_prog[:-1]
        states[i] = a
    t0 = times[np.argmax(states[:, 1] == 0)] if np.any(states[:, 1] == 0) else math.inf
    return Trajectory(params, times, states, seed, counters, StopRule.at(horizon), float(horizon),
                      float(t0), -1, mode="tau-leap")
