import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from multistage_epidemic import rng
from multistage_epidemic.ctmc import hitting_time
from multistage_epidemic.limit.sde import (OutbreakNotConverged, SdeSpec, drift, integrate_sde, simulate_ensemble,
                                           terminal_outbreak)

from oracles import feller_zero_probability


def test_drift_examples():
    np.testing.assert_allclose(drift([2, 3, 1], SdeSpec(1, (0.0,))), [3, -6, 3])
    np.testing.assert_array_equal(drift(np.zeros(5), SdeSpec(3, (0.5, -1, 2))), np.zeros(5))
    spec = SdeSpec(3, (0.5, -1, 2))
    a = np.array([1.0, 2.0, 3.0, 4.0, 0.5])
    b = drift(a, spec)
    np.testing.assert_allclose(b, [4, (0.5 - 1) * 2, 2 + (-1 - 1) * 3, 3 + (2 - 1) * 4, 4])


@given(a0=st.floats(0, 50), rest=st.lists(st.floats(0, 10), min_size=3, max_size=3))
def test_small_drift_ignores_susceptibles(a0, rest):
    spec = SdeSpec(2, (0.3, -0.7), "small")
    a = np.array([a0] + rest)
    b0 = drift(np.array([0.0] + rest), spec)
    np.testing.assert_array_equal(drift(a, spec)[1:3], b0[1:3])


def test_spec_validation():
    with pytest.raises(ValueError):
        SdeSpec(2, (0, 0), "feller")
    with pytest.raises(ValueError):
        SdeSpec(1, (0,), "other")
    with pytest.raises(ValueError):
        SdeSpec(1, (math.inf,))
    with pytest.raises(ValueError):
        drift([1, 2], SdeSpec(1))


def test_zero_init_gives_zero_path():
    path = integrate_sde(SdeSpec(3, (1, 1, 1)), np.zeros(5), 2.0, seed=1)
    assert not path.values.any()


def test_bad_horizon_and_noise():
    with pytest.raises(ValueError):
        integrate_sde(SdeSpec(1), [0, 1, 0], 1e-4, dt=1e-3)
    with pytest.raises(ValueError):
        integrate_sde(SdeSpec(1), [0, 1, 0], 1.0, dt=0.0)
    with pytest.raises(ValueError):
        integrate_sde(SdeSpec(1), [0, 1, 0], 1.0, dt=0.1, noise=np.zeros(3))
    with pytest.raises(ValueError):
        integrate_sde(SdeSpec(1), [0, -1, 0], 1.0)


def test_csv_header():
    path = integrate_sde(SdeSpec(2, (0, 0)), [0, 1, 0, 0], 0.01, dt=0.005, seed=3)
    lines = path.to_csv().splitlines()
    assert lines[0] == "time,A_0,A_1,A_2,A_3" and len(lines) == 4


@given(K=st.integers(1, 4), seed=st.integers(0, 2**40), g=st.lists(st.floats(-2, 2), min_size=4, max_size=4),
       a1=st.floats(0, 5), a0=st.floats(0, 3))
def test_path_invariants(K, seed, g, a1, a0):
    spec = SdeSpec(K, tuple(g[:K]))
    init = np.zeros(K + 2)
    init[1] = a1
    init[0] = init[K + 1] = a0
    v = integrate_sde(spec, init, 3.0, dt=1e-2, seed=seed).values
    assert np.all(v >= 0)
    np.testing.assert_allclose(v[:, 0], v[:, K + 1], rtol=1e-12, atol=0)
    dead = np.flatnonzero(v[:, 1] == 0)
    if dead.size:
        assert not v[dead[0]:, 1].any()


@given(K=st.integers(1, 3), seed=st.integers(0, 2**40), g=st.floats(-2, 2), a1=st.floats(0.01, 5))
def test_domination_by_feller(K, seed, g, a1):
    gamma = (g,) + (0.0,) * (K - 1)
    init = np.zeros(K + 2)
    init[1] = a1
    seed = rng.ReplicaSeed(seed)
    full = integrate_sde(SdeSpec(K, gamma), init, 3.0, dt=1e-2, seed=seed)
    fel = integrate_sde(SdeSpec.feller(g), [0, a1, 0], 3.0, dt=1e-2, seed=seed)
    assert np.all(full.values[:, 1] <= fel.values[:, 1] + 1e-12)


def test_ensemble_matches_single_paths():
    spec = SdeSpec(2, (0.4, -0.1))
    seed = rng.ReplicaSeed(12, (3,))
    times = [0.0, 0.5, 1.25]
    ens = simulate_ensemble(spec, [0, 1, 0, 0], 5, seed, times, dt=0.01, first_replica=2)
    for r in range(5):
        p = integrate_sde(spec, [0, 1, 0, 0], 1.25, dt=0.01, seed=seed.child(2 + r))
        np.testing.assert_array_equal(ens.values[r], p.values[[0, 50, 125]])
        assert ens.t0_stage1[r] == hitting_time(p, 1)


def test_ensemble_rejects_off_grid_times():
    with pytest.raises(ValueError):
        simulate_ensemble(SdeSpec(1), [0, 1, 0], 3, 1, [0.0105], dt=0.01)


def test_feller_mean_and_atom():
    ens = simulate_ensemble(SdeSpec.feller(0.5), [0, 1.5, 0], 20_000, rng.ReplicaSeed(2, (8,)), [1.0], dt=1e-3)
    z = ens.values[:, 0, 1]
    assert abs(z.mean() - 1.5 * math.exp(0.5)) < 3 * z.std(ddof=1) / math.sqrt(z.size)
    p0 = feller_zero_probability(1.5, 0.5, 1.0)
    assert abs((z == 0).mean() - p0) < 4 * math.sqrt(p0 * (1 - p0) / z.size)


def test_weak_order_sanity():
    spec = SdeSpec(1, (0.0,))
    seed = rng.ReplicaSeed(77, (1,))
    means = []
    for dt in (2e-3, 1e-3):
        z = simulate_ensemble(spec, [0, 1, 0], 10_000, seed, [2.0], dt=dt).values[:, 0, 1]
        means.append((z.mean(), z.var(ddof=1) / z.size))
    (m1, v1), (m2, v2) = means
    assert abs(m1 - m2) < 2 * math.sqrt(v1 + v2)


def test_terminal_outbreak_single_stage_frozen():
    spec = SdeSpec(1, (0.2,))
    seed = rng.ReplicaSeed(5)
    res = terminal_outbreak(spec, [0, 1, 0], seed, dt=1e-3)
    path = integrate_sde(spec, [0, 1, 0], res.t0_stage1 + 1.0, dt=1e-3, seed=seed)
    i = int(round(res.t0_stage1 / 1e-3))
    assert path.values[i, 1] == 0 and path.values[i - 1, 1] > 0
    assert res.value == path.values[i, 2]
    assert np.all(path.values[i:, 2] == res.value)


def test_terminal_outbreak_nothing_to_do():
    res = terminal_outbreak(SdeSpec(3, (0, 0, 0)), [0.7, 0, 0, 0, 0.7], seed=1)
    assert res.value == 0.7 and res.t0_stage1 == 0.0
    rec = res.as_record()
    assert set(rec) == {"seed", "dt", "T0_A1_grid", "A_tail", "A_Kplus1_inf"}


def test_terminal_outbreak_deterministic_phase():
    # x_0' = x_2, x_2' = -x_0 x_2 from (0, 0.5, 0): x_0(inf) = sqrt(2 * 0.5)
    res = terminal_outbreak(SdeSpec(2, (0, 0)), [0, 0, 0.5, 0], seed=1)
    assert res.value == pytest.approx(1.0, abs=1e-6)


def test_terminal_outbreak_errors():
    with pytest.raises(ValueError):
        terminal_outbreak(SdeSpec(2, (0, 0), "small"), [0, 1, 0, 0])
    with pytest.raises(OutbreakNotConverged):
        terminal_outbreak(SdeSpec(1, (3.0,)), [0, 5, 0], seed=1, max_time=0.5)


def _terminal_ks(n_values, replicas=4000, seed=606):
    from multistage_epidemic.ctmc import ModelParams
    from multistage_epidemic.experiments.stats import ks_distance

    base = rng.ReplicaSeed(seed, (1,))
    limit = np.array([terminal_outbreak(SdeSpec(2, (0.0, 0.0)), [0, 1, 0, 0], base.child(r)).value
                      for r in range(replicas)])
    out = {}
    for i, n in enumerate(n_values):
        a1 = round(n**0.25)
        b = simulate_batch_absorbed(ModelParams(n, 2), a1, replicas, rng.ReplicaSeed(seed, (2, i)))
        out[n] = ks_distance(b / n**0.75, limit)[0]
    return out


def simulate_batch_absorbed(params, a1, replicas, seed):
    from multistage_epidemic.ctmc import initial_state, simulate_batch

    return simulate_batch(params, initial_state(params, a1), replicas, seed).final[:, -1]


@pytest.fixture(scope="module")
def terminal_ks():
    return _terminal_ks([10**4, 10**5, 10**6])


@pytest.mark.slow
def test_terminal_outbreak_approached_by_chain(terminal_ks):
    assert terminal_ks[10**6] < terminal_ks[10**4], terminal_ks


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="finite-size bias: KS to the limit is still about 0.09 at n=1e5")
def test_terminal_outbreak_close_at_1e5(terminal_ks):
    assert terminal_ks[10**5] < 0.05, terminal_ks
