from __future__ import annotations

import math

import numpy as np
from scipy import stats

from .. import rng
from ..ctmc import StopRule, shift_and_project, simulate_path
from ..limit.ode import integrate_ode
from ..scaling import model_for_gamma, scaling_constants
from .common import BOOTSTRAP, COLLAPSE, master_seed, scaled_stage1_count, state_with_stage1
from .report import StudyReport, Table
from .stats import bootstrap_means, estimate, mean_se


def post_extinction_deviation(path, constants, gamma, window: float, ode_dt: float = 1e-3) -> tuple[float, float]:
    """Relative sup distance between the rescaled path after stage 1 dies out and the ODE.

    The chain is shifted to the first time stage 1 is empty and projected on
    ``(a_0, a_2, ..., a_{K+1})``; the ODE with zero forcing starts from the
    rescaled projected state. The distance is ``max |A - x| / max |x|`` over
    coordinates and rescaled times in ``[0, window]``, taking both one-sided
    values of the path at each jump. Returns ``(deviation, T0 rescaled)``.
    """
    K = constants.K
    t0 = path.t0_stage1
    proj = shift_and_project(path, t0)
    scale = np.delete(constants.alpha, 1)
    A = proj.states / scale
    A[:, 0] = (constants.n - proj.states[:, 0]) / scale[0]
    t = proj.times / constants.tau
    sol = integrate_ode(A[0], gamma, window, ode_dt)
    norm = float(np.abs(sol.values).max())
    inside = int(np.searchsorted(t, window, side="right"))
    jump_t = t[1:inside]
    X = sol.at(np.append(jump_t, window))
    after = np.abs(A[1:inside] - X[:-1]) if inside > 1 else np.zeros((0, K + 1))
    before = np.abs(A[: inside - 1] - X[:-1]) if inside > 1 else np.zeros((0, K + 1))
    end = np.abs(A[inside - 1] - X[-1])
    start = np.abs(A[0] - sol.values[0])
    worst = max(float(end.max()), float(start.max()),
                float(after.max()) if after.size else 0.0, float(before.max()) if before.size else 0.0)
    if norm == 0.0:
        return 0.0, t0 / constants.tau
    return worst / norm, t0 / constants.tau


def collapse_check(K: int, gamma, n_grid, replicas: int, seed=None, window: float = 5.0, a1: float = 1.0,
                   ode_dt: float = 1e-3, t0_horizon: float = math.inf, alpha: float = 0.01,
                   n_boot: int = 500) -> StudyReport:
    """Deterministic behaviour after the first stage dies out, across n.

    Each replica runs to absorption from ``round(a1 * alpha_1)`` stage-1
    infecteds (intermediate scaling). Replicas whose rescaled stage-1
    extinction time exceeds ``t0_horizon`` are excluded and counted.
    Consecutive n are compared with a one-sided Mann-Whitney test (larger n
    has smaller deviations).
    """
    if K < 2:
        raise ValueError("collapse check needs K >= 2")
    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 1 or any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n_grid must be a nonempty increasing sequence")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (K,)).tolist()
    master = master_seed(seed)
    boot_gen = rng.ReplicaSeed(master, (COLLAPSE, BOOTSTRAP)).generator()
    deviations = {}
    per_n = []
    rows = []
    for i, n in enumerate(n_grid):
        c = scaling_constants("intermediate", n, K)
        params = model_for_gamma(gamma, c)
        init = state_with_stage1(n, K, scaled_stage1_count(c, a1))
        base = rng.ReplicaSeed(master, (COLLAPSE, i))
        devs = []
        excluded = 0
        for r in range(replicas):
            path = simulate_path(params, init, StopRule.absorption(), base.child(r))
            if path.t0_stage1 / c.tau > t0_horizon:
                excluded += 1
                rows.append([n, r, path.t0_stage1 / c.tau, "excluded"])
                continue
            d, t0 = post_extinction_deviation(path, c, gamma, window, ode_dt)
            devs.append(d)
            rows.append([n, r, t0, d])
        devs = np.array(devs)
        deviations[n] = devs
        m, se = mean_se(devs)
        med_boot = [np.median(devs[boot_gen.integers(0, devs.size, devs.size)]) for _ in range(n_boot)] if devs.size else [np.nan]
        per_n.append({"n": n, "kept": int(devs.size), "excluded": excluded,
                      "mean_deviation": estimate(m, devs.size, se=se),
                      "median_deviation": estimate(float(np.median(devs)) if devs.size else math.nan, devs.size,
                                                   ci=np.percentile(med_boot, [2.5, 97.5]).tolist())})
    tests = []
    for small, large in zip(n_grid, n_grid[1:]):
        res = stats.mannwhitneyu(deviations[large], deviations[small], alternative="less")
        tests.append({"n_small": small, "n_large": large, "statistic": float(res.statistic),
                      "p_value": float(res.pvalue), "significant": bool(res.pvalue < alpha),
                      "replicas": [int(deviations[small].size), int(deviations[large].size)]})
    statistics = {"per_n": per_n, "rank_tests": tests, "alpha": alpha,
                  "decay_in_n": bool(tests) and all(t["significant"] for t in tests)}
    params = {"K": K, "gamma": gamma, "n_grid": n_grid, "replicas": replicas, "window": window, "a1": a1,
              "ode_dt": ode_dt, "t0_horizon": t0_horizon, "regime": "intermediate",
              "deviation": "max over coordinates and [0, window] of |A - x| divided by max |x|"}
    tables = {"deviations": Table(["n", "replica", "T0_rescaled", "deviation"], rows)}
    return StudyReport("collapse", params, statistics, replicas, {"master_seed": master}, tables)
