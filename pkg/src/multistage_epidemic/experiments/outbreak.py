from __future__ import annotations

import numpy as np

from .. import rng
from ..ctmc import StopRule
from ..scaling import model_for_gamma, scaling_constants
from .common import BOOTSTRAP, OUTBREAK, ceil_root, master_seed, run_batch, state_with_stage1
from .report import StudyReport, Table
from .stats import estimate, mean_se, power_law_fit


def outbreak_scaling_fit(K: int, gamma, n_grid, replicas: int, seed=None, n_boot: int = 1000,
                         workers: int | None = None) -> StudyReport:
    """Growth exponent of the mean final outbreak from ``ceil(n**(1/(K+2)))`` stage-1 infecteds.

    Every replica runs to absorption. The slope of log mean terminal removed
    count against log n is compared with ``(K+1)/(K+2)``; the rescaled
    terminal sizes ``a_{K+1}(inf) / alpha_{K+1}`` are reported per n.
    """
    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 3:
        raise ValueError("outbreak fit needs at least 3 values of n")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (K,)).tolist()
    master = master_seed(seed)
    terminals = []
    per_n = []
    rows = []
    for i, n in enumerate(n_grid):
        c = scaling_constants("intermediate", n, K)
        params = model_for_gamma(gamma, c)
        init = state_with_stage1(n, K, ceil_root(n, K + 2))
        out = run_batch(params, init, replicas, rng.ReplicaSeed(master, (OUTBREAK, i)), StopRule.absorption(),
                        workers=workers)
        final = out["final"][:, K + 1]
        if np.any(final < init[1]):
            raise AssertionError("a terminal outbreak is smaller than the initial infected count")
        terminals.append(final)
        scaled = final / c.alpha[K + 1]
        m, se = mean_se(final)
        sm, sse = mean_se(scaled)
        per_n.append({"n": n, "initial_stage1": int(init[1]), "mean_terminal": estimate(m, replicas, se=se),
                      "mean_rescaled_terminal": estimate(sm, replicas, se=sse),
                      "rescaled_quantiles": dict(zip(("q10", "q25", "q50", "q75", "q90"),
                                                     np.quantile(scaled, [.1, .25, .5, .75, .9]).tolist()))})
        rows.extend([n, r, int(v), float(s)] for r, (v, s) in enumerate(zip(final, scaled)))
    fit = power_law_fit(n_grid, terminals, n_boot, rng.ReplicaSeed(master, (OUTBREAK, BOOTSTRAP)).generator())
    target = (K + 1) / (K + 2)
    statistics = {
        "exponent": estimate(fit.slope, replicas, se=fit.boot_se, ci=fit.ci95, target=target,
                             ci_covers_target=fit.covers(target)),
        "fit": fit.as_record(),
        "per_n": per_n,
    }
    params = {"K": K, "gamma": gamma, "n_grid": n_grid, "replicas": replicas, "n_boot": n_boot,
              "initial_condition": "a_1(0) = ceil(n^(1/(K+2)))", "regime": "intermediate"}
    tables = {
        "per_n": Table(["n", "initial_stage1", "mean_terminal", "se", "mean_rescaled", "se_rescaled"],
                       [[p["n"], p["initial_stage1"], p["mean_terminal"]["value"], p["mean_terminal"]["se"],
                         p["mean_rescaled_terminal"]["value"], p["mean_rescaled_terminal"]["se"]] for p in per_n]),
        "terminals": Table(["n", "replica", "terminal_removed", "rescaled"], rows),
    }
    return StudyReport("outbreak-scaling", params, statistics, replicas, {"master_seed": master}, tables)
