import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from multistage_epidemic import rng
from multistage_epidemic.ctmc import ModelParams, StopRule, initial_state, simulate_batch, simulate_path
from multistage_epidemic.experiments import (StudyReport, Table, collapse_check, conjecture_exponents,
                                             convergence_study, outbreak_scaling_fit, power_law_fit,
                                             random_partition)
from multistage_epidemic.experiments.collapse import post_extinction_deviation
from multistage_epidemic.experiments.common import ceil_root
from multistage_epidemic.experiments.conjecture import conjectured_exponent, partition_heuristic_exponent
from multistage_epidemic.experiments.convergence import InsufficientReplicasWarning
from multistage_epidemic.experiments.runner import chunk_ranges, run_chunked
from multistage_epidemic.experiments.stats import bootstrap_means
from multistage_epidemic.scaling import scaling_constants


# ---- statistics helpers ----------------------------------------------------

def test_ceil_root_is_exact():
    assert ceil_root(2**12, 3) == 16 and ceil_root(2**12 + 1, 3) == 17
    assert ceil_root(10**6, 3) == 100 and ceil_root(999_999, 3) == 100
    assert ceil_root(1, 4) == 1


def test_power_law_fit_recovers_exponent():
    gen = np.random.default_rng(0)
    ns = [2**k for k in range(8, 14)]
    samples = [n**0.6 * gen.exponential(1.0, 4000) for n in ns]
    fit = power_law_fit(ns, samples, 500, np.random.default_rng(1))
    assert fit.covers(0.6) and fit.ci_width < 0.05
    with pytest.raises(ValueError):
        power_law_fit([10], [np.ones(3)])
    with pytest.raises(ValueError):
        power_law_fit([10, 20], [np.ones(3), np.array([])])


def test_bootstrap_paths_agree_in_distribution():
    gen = np.random.default_rng(3)
    small = gen.integers(0, 20, 3000)          # few unique values: multinomial path
    big = small + gen.uniform(0, 1e-6, 3000)   # all unique: index path
    a = bootstrap_means(small, 4000, np.random.default_rng(4))
    b = bootstrap_means(big, 4000, np.random.default_rng(5))
    assert abs(a.std() - b.std()) < 0.1 * a.std()
    assert abs(a.mean() - small.mean()) < 3 * a.std() / math.sqrt(4000) + 1e-3


def test_chunks_cover_range():
    assert chunk_ranges(5, 2) == [(0, 2), (2, 2), (4, 1)]
    assert chunk_ranges(0, 3) == []


def _square(first, count):
    return {"x": np.arange(first, first + count) ** 2}


def test_parallel_runner_is_order_independent():
    serial = run_chunked(_square, 10, chunk=3, workers=1)
    parallel = run_chunked(_square, 10, chunk=3, workers=2)
    np.testing.assert_array_equal(serial["x"], parallel["x"])
    np.testing.assert_array_equal(serial["x"], np.arange(10) ** 2)


def test_report_serialisation(tmp_path):
    rep = StudyReport("demo", {"K": 1}, {"x": {"value": math.inf, "replicas": 3, "se": 0.1}}, 3,
                      {"master_seed": 1}, {"t": Table(["a", "b"], [[1, 0.1], [2, 1 / 3]])})
    files = rep.write(tmp_path, "csv")
    assert sorted(p.split("/")[-1] for p in files) == ["report.json", "t.csv"]
    rec = json.loads((tmp_path / "report.json").read_text())
    assert rec["statistics"]["x"]["value"] == "inf"
    assert (tmp_path / "t.csv").read_text().splitlines() == ["a,b", "1,0.1", "2,0.3333333333333333"]


# ---- partition -------------------------------------------------------------

def test_partition_of_one():
    res = random_partition(ModelParams(1, 2), seed=1, labels=True)
    assert res.sizes.tolist() == [1]
    assert res.counters.tolist() == [[1, 1]]  # the lone individual passes through stage 2
    assert [b.tolist() for b in res.labels] == [[0]]


@given(n=st.integers(1, 400), K=st.integers(1, 3), seed=st.integers(0, 2**32))
def test_partition_covers_population(n, K, seed):
    res = random_partition(ModelParams(n, K), seed=seed, labels=True)
    assert res.sizes.sum() == n and np.all(res.sizes >= 1)
    assert np.all(res.counters[:, 0] >= 1)
    np.testing.assert_array_equal(res.counters[:, K - 1], res.sizes)
    flat = np.concatenate(res.labels)
    assert np.array_equal(np.sort(flat), np.arange(n))
    assert [len(b) for b in res.labels] == res.sizes.tolist()


def test_size_biased_pick():
    n = 300
    params = ModelParams(n, 1)
    picked, formula = [], []
    for r in range(3000):
        res = random_partition(params, rng.ReplicaSeed(2, (5,), r), labels=True)
        v = rng.ReplicaSeed(2, (6,), r).generator().integers(n)
        picked.append(next(len(b) for b in res.labels if v in b))
        formula.append(res.size_biased_mean())
    picked, formula = np.array(picked), np.array(formula)
    se = math.sqrt(picked.var(ddof=1) / picked.size + formula.var(ddof=1) / formula.size)
    assert abs(picked.mean() - formula.mean()) < 4 * se


# ---- study contracts -------------------------------------------------------

def test_exponent_formulas():
    assert conjectured_exponent(1) == pytest.approx(1 / 3)
    assert 2 * conjectured_exponent(2) == pytest.approx(6 / 11)
    assert partition_heuristic_exponent(2) == pytest.approx(1 / 2)


def test_study_argument_errors():
    with pytest.raises(ValueError):
        outbreak_scaling_fit(1, 0.0, [100, 200], 10)
    with pytest.raises(ValueError):
        outbreak_scaling_fit(1, 0.0, [100, 200, 400], 0)
    with pytest.raises(ValueError):
        conjecture_exponents(1, [1000], 10)
    with pytest.raises(ValueError):
        collapse_check(1, 0.0, [1000], 10)


def test_convergence_warns_on_few_replicas():
    with pytest.warns(InsufficientReplicasWarning):
        rep = convergence_study(1, 0.0, [1000, 2000], 50, seed=3, dt=1e-2, workers=1)
    assert rep.statistics["insufficient_replicas"]


def test_chain_against_itself_is_ks_null():
    p = ModelParams(1000, 1)
    init = initial_state(p, 10)
    grid = [10.0]
    passes = 0
    for i in range(40):
        a = simulate_batch(p, init, 500, rng.ReplicaSeed(9, (i, 0)), StopRule.at(10.0), grid)
        b = simulate_batch(p, init, 500, rng.ReplicaSeed(9, (i, 1)), StopRule.at(10.0), grid)
        passes += sps.ks_2samp(a.grid_states[:, 0, 1], b.grid_states[:, 0, 1]).pvalue > 0.01
    assert passes >= 38


def test_outbreak_terminals_and_reproducibility():
    kw = dict(K=1, gamma=0.0, n_grid=[256, 512, 1024], replicas=300, seed=11, n_boot=100, workers=1)
    a, b = outbreak_scaling_fit(**kw), outbreak_scaling_fit(**kw)
    assert a.to_json() == b.to_json()
    assert a.tables["terminals"].to_csv() == b.tables["terminals"].to_csv()
    rows = np.array(a.tables["terminals"].rows, dtype=float)
    init = {n: ceil_root(n, 3) for n in (256, 512, 1024)}
    assert all(r[2] >= init[int(r[0])] for r in rows)
    assert "ci95" in a.statistics["exponent"] and a.statistics["exponent"]["replicas"] == 300


def test_conjecture_report_contents():
    rep = conjecture_exponents(2, [64, 128, 256, 512, 1024], 200, seed=4, partition_replicas=5, n_boot=100,
                               workers=1)
    k2 = rep.statistics["exponents"]["k=2"]
    assert set(k2["full"]["predictions"]) == {"conjecture_k_lambda_K", "partition_heuristic_K_over_K_plus_2"}
    assert {"lower", "upper"} <= set(k2)
    assert "heavy_tail_flag" in k2["full"]
    assert "partition" in rep.statistics


def test_zero_infecteds_after_extinction_give_zero_deviation():
    n = 1000
    c = scaling_constants("intermediate", n, 2)
    path = simulate_path(ModelParams(n, 2), (n, 0, 0, 0), seed=1)
    dev, t0 = post_extinction_deviation(path, c, (0.0, 0.0), window=2.0, ode_dt=1e-2)
    assert dev == 0.0 and t0 == 0.0


def test_collapse_report_shape():
    rep = collapse_check(2, (0.0, 0.0), [1000, 4000], 30, seed=2, window=2.0, ode_dt=1e-2)
    assert len(rep.statistics["per_n"]) == 2 and len(rep.statistics["rank_tests"]) == 1
    rows = rep.tables["deviations"].rows
    assert all(r[3] >= 0 for r in rows)
