"""Path functionals: hitting times, last exit from (0, inf), shift + projection."""
from __future__ import annotations

import math
from typing import Literal

import numpy as np

from .model import ModelParams
from .simulate import StopRule, Trajectory

Direction = Literal["down", "up"]


def _times_values(path, coordinate: int):
    if isinstance(path, Trajectory):
        times, values = path.times, path.states
    elif hasattr(path, "times") and hasattr(path, "values"):
        times, values = path.times, path.values
        values = values() if callable(values) else values
    else:
        times, values = path
    times = np.asarray(times, dtype=float)
    values = np.asarray(values)
    if values.ndim == 1:
        if coordinate not in (0, -1):
            raise IndexError(f"coordinate {coordinate} invalid for a one-dimensional path")
        col = values
    else:
        if not -values.shape[1] <= coordinate < values.shape[1]:
            raise IndexError(f"coordinate {coordinate} out of range for {values.shape[1]} coordinates")
        col = values[:, coordinate]
    if times.size == 0:
        raise ValueError("path is empty")
    return times, col


def hitting_time(path, coordinate: int, threshold: float = 0.0, direction: Direction = "down") -> float:
    """First time the coordinate is <= (``down``) or >= (``up``) ``threshold``.

    ``path`` is a :class:`Trajectory`, an object with ``times``/``values``
    (e.g. a diffusion path), or a ``(times, values)`` pair; values are treated
    as right-continuous between stored times, so on grid paths the result is
    grid-resolved. Returns ``math.inf`` if the level is never reached.
    """
    times, col = _times_values(path, coordinate)
    if direction == "down":
        hit = col <= threshold
    elif direction == "up":
        hit = col >= threshold
    else:
        raise ValueError(f"direction must be 'down' or 'up', got {direction!r}")
    if not hit.any():
        return math.inf
    return float(times[np.argmax(hit)])


def last_positive_time(path, coordinate: int) -> float:
    """``sup{t : f(t) > 0}`` for the piecewise-constant coordinate.

    Returns ``math.inf`` if the coordinate is still positive at the last
    stored time, and 0 if it is never positive.
    """
    times, col = _times_values(path, coordinate)
    pos = np.flatnonzero(col > 0)
    if pos.size == 0:
        return 0.0
    j = pos[-1]
    if j == times.size - 1:
        return math.inf
    return float(times[j + 1])


def shift_and_project(path: Trajectory, t: float, require_stage1_extinct: bool = True) -> Trajectory:
    """Trajectory after time ``t`` with stage 1 dropped, as a (K-1)-stage chain.

    Coordinates ``(a_0, a_2, ..., a_{K+1})`` become ``(a_0, a_1, ..., a_K)`` of
    the new model and time restarts at 0. Stage 1 is absorbing once empty, so
    the result is a genuine (K-1)-stage epidemic when ``a_1(t) == 0``; by
    default any other ``t`` is rejected.
    """
    K = path.K
    if K < 2:
        raise ValueError("shift_and_project needs K >= 2")
    if t < 0:
        raise ValueError("t must be >= 0")
    if t > path.t_end and not path.absorbed:
        raise ValueError(f"t={t} beyond the simulated range [0, {path.t_end}]")
    if path.mode != "events":
        raise ValueError("shift_and_project needs an event-mode trajectory")
    j = int(np.searchsorted(path.times, t, side="right") - 1)
    states = path.states[j:]
    if require_stage1_extinct and states[0, 1] != 0:
        raise ValueError(f"a_1({t}) = {states[0, 1]} != 0; the projection is not a (K-1)-stage epidemic")
    times = path.times[j:] - t
    times = np.concatenate([[0.0], times[1:]])
    proj = np.delete(states, 1, axis=1)
    p = path.params
    params = ModelParams(p.n, K - 1, p.delta[1:], p.epsilon[1:])
    increments = np.diff(proj[:, 1:K], axis=0)
    counters = proj[0, 1:K] + np.clip(increments, 0, None).sum(axis=0)
    if path.stop_rule.kind == "horizon":
        stop = StopRule.at(path.t_end - t)
    else:
        stop = path.stop_rule
    first_empty = np.flatnonzero(proj[:, 1] == 0)
    t0 = float(times[first_empty[0]]) if first_empty.size else math.inf
    return Trajectory(params, times, proj, path.seed, counters, stop, max(path.t_end - t, 0.0), t0,
                      int(times.size - 1), extra={"shifted_by": float(t), "parent_K": K})
