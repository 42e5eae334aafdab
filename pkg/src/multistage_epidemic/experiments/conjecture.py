from __future__ import annotations

import numpy as np

from .. import rng
from ..ctmc import ModelParams, StopRule
from .common import BOOTSTRAP, CONJECTURE, PARTITION, master_seed, run_batch, state_with_stage1
from .partition import random_partition
from .report import StudyReport, Table
from .stats import estimate, mean_se, power_law_fit

HEAVY_TAIL_CI_WIDTH = 0.2


def conjectured_exponent(K: int) -> float:
    """``lambda_K = (2^K - 1) / ((K+1) 2^K - 1)``."""
    return (2 ** K - 1) / ((K + 1) * 2 ** K - 1)


def partition_heuristic_exponent(K: int) -> float:
    """Exponent of E N_{n,K} suggested by the random-partition argument: K / (K+2)."""
    return K / (K + 2)


def _subwindows(ns):
    m = len(ns)
    if m < 5:
        return {}
    return {"lower": list(range((m + 1) // 2)), "upper": list(range(m // 2, m))}


def _fit_record(fit, replicas, predictions):
    rec = estimate(fit.slope, replicas, se=fit.boot_se, ci=fit.ci95,
                   heavy_tail_flag=fit.ci_width > HEAVY_TAIL_CI_WIDTH)
    rec["predictions"] = {name: {"value": v, "ci_covers": fit.covers(v)} for name, v in predictions.items()}
    return rec


def conjecture_exponents(K: int, n_grid, replicas: int, seed=None, partition_replicas: int = 0,
                         n_boot: int = 1000, workers: int | None = None) -> StudyReport:
    """Growth of E N_{n,k} (individuals ever in stage k) from one stage-1 infected.

    Critical model, runs to absorption. Slopes of log E N_{n,k} against log n
    are reported with bootstrap CIs next to both candidate exponents, over the
    full n grid and over its lower and upper halves. With
    ``partition_replicas > 0`` the random-partition quantities E|block of a
    uniform individual| and E|largest block|^2 / n are estimated for each n.
    The report does not decide between the candidates.
    """
    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 2:
        raise ValueError("exponent fits need at least two values of n")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    master = master_seed(seed)
    lam = conjectured_exponent(K)
    N = []
    per_n = []
    for i, n in enumerate(n_grid):
        params = ModelParams(n, K)
        out = run_batch(params, state_with_stage1(n, K, 1), replicas, rng.ReplicaSeed(master, (CONJECTURE, i)),
                        StopRule.absorption(), workers=workers)
        N.append(out["counters"])
        row = {"n": n}
        for k in range(1, K + 1):
            m, se = mean_se(out["counters"][:, k - 1])
            row[f"E_N_{k}"] = estimate(m, replicas, se=se)
        per_n.append(row)

    gen = rng.ReplicaSeed(master, (CONJECTURE, BOOTSTRAP)).generator()
    exponents = {}
    for k in range(1, K + 1):
        preds = {"conjecture_k_lambda_K": k * lam}
        if k == K:
            preds["partition_heuristic_K_over_K_plus_2"] = partition_heuristic_exponent(K)
        fit = power_law_fit(n_grid, [c[:, k - 1] for c in N], n_boot, gen)
        rec = {"full": _fit_record(fit, replicas, preds), "fit": fit.as_record()}
        for name, idx in _subwindows(n_grid).items():
            sub = power_law_fit([n_grid[j] for j in idx], [N[j][:, k - 1] for j in idx], n_boot, gen)
            rec[name] = _fit_record(sub, replicas, preds)
        exponents[f"k={k}"] = rec

    statistics = {"lambda_K": lam, "exponents": exponents, "per_n": per_n,
                  "counter_convention": "the initial infected counts toward N_{n,1}"}
    part_rows = []
    if partition_replicas > 0:
        biased, largest = [], []
        pseed = rng.ReplicaSeed(master, (CONJECTURE, PARTITION))
        for i, n in enumerate(n_grid):
            params = ModelParams(n, K)
            b, l = [], []
            for r in range(partition_replicas):
                res = random_partition(params, rng.ReplicaSeed(master, pseed.stream + (i,), r))
                b.append(res.size_biased_mean())
                l.append(res.largest_squared_over_n())
                part_rows.append([n, r, res.blocks, int(res.sizes.max()), b[-1], l[-1], int(res.sizes[0])])
            biased.append(np.array(b))
            largest.append(np.array(l))
            mb, sb = mean_se(b)
            ml, sl = mean_se(l)
            per_n[i]["E_size_biased_block"] = estimate(mb, partition_replicas, se=sb)
            per_n[i]["E_largest_sq_over_n"] = estimate(ml, partition_replicas, se=sl)
            per_n[i]["largest_share_of_size_biased"] = ml / mb
        heuristic = partition_heuristic_exponent(K)
        statistics["partition"] = {
            "size_biased_block": _fit_record(power_law_fit(n_grid, biased, n_boot, gen), partition_replicas,
                                             {"conjecture_K_lambda_K": K * lam, "partition_heuristic": heuristic}),
            "largest_sq_over_n": _fit_record(power_law_fit(n_grid, largest, n_boot, gen), partition_replicas,
                                             {"partition_heuristic": heuristic}),
        }

    params = {"K": K, "n_grid": n_grid, "replicas": replicas, "partition_replicas": partition_replicas,
              "n_boot": n_boot, "initial_condition": "a_1(0) = 1", "delta": 0.0, "epsilon": 0.0}
    tables = {"counters": Table(["n", "replica"] + [f"N_{k}" for k in range(1, K + 1)],
                                [[n, r] + [int(v) for v in c[r]] for n, c in zip(n_grid, N) for r in range(c.shape[0])])}
    mean_rows = []
    for row in per_n:
        for k in range(1, K + 1):
            e = row[f"E_N_{k}"]
            mean_rows.append([row["n"], k, e["value"], e["se"]])
    tables["means"] = Table(["n", "k", "mean_N", "se"], mean_rows)
    if part_rows:
        tables["partitions"] = Table(["n", "replica", "blocks", "largest", "size_biased_mean", "largest_sq_over_n",
                                      "first_block"], part_rows)
    return StudyReport("conjecture", params, statistics, replicas, {"master_seed": master}, tables)
