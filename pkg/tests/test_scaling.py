import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from multistage_epidemic.ctmc import ModelParams, StopRule, initial_state, simulate_path
from multistage_epidemic.scaling import (RegimeBoundaryWarning, ScalingConstants, model_for_gamma,
                                         perturbations_for_gamma, rescale, rescale_state, scaling_constants,
                                         unrescale_state)


def test_intermediate_single_stage():
    c = scaling_constants("intermediate", 10**6, 1, alpha1=5.0)
    assert c.tau == pytest.approx(100) and c.alpha[1] == pytest.approx(100)
    assert c.alpha[2] == pytest.approx(1e4) and c.alpha[0] == pytest.approx(1e4)


def test_large_single_stage():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeBoundaryWarning)
        c = scaling_constants("large", 10**4, 1, alpha1=1e3)
    assert c.tau == pytest.approx(10**0.5)
    assert c.alpha[0] == pytest.approx(1e4 / 10**0.5)
    assert c.alpha[2] == pytest.approx(10**0.5 * 1e3)


def test_intermediate_two_stage_scales():
    n = 10**8
    c = scaling_constants("intermediate", n, 2)
    np.testing.assert_allclose(c.alpha[1:], [n**0.25, n**0.5, n**0.75], rtol=1e-12)


def test_small_regime():
    c = scaling_constants("small", 10**9, 1, alpha1=30.0)
    assert c.tau == 30.0 and c.alpha[2] == 900.0


@pytest.mark.parametrize("regime,alpha1", [("small", 0.5), ("large", 2e6), ("small", 1e6), ("large", 5.0)])
def test_inadmissible_alpha1(regime, alpha1):
    with pytest.raises(ValueError):
        scaling_constants(regime, 10**6, 1, alpha1)


def test_boundary_warning():
    with pytest.warns(RegimeBoundaryWarning):
        scaling_constants("small", 10**6, 1, alpha1=2.0)


def test_inconsistent_constants_rejected():
    with pytest.raises(ValueError):
        ScalingConstants("intermediate", 100, 1, 2.0, np.array([4.0, 2.0, 5.0]))


@given(n=st.integers(10, 10**12), K=st.integers(1, 6), u=st.floats(0.05, 0.95))
def test_scale_relations(n, K, u):
    crit = n ** (1 / (K + 2))
    regime = "small" if u < 0.5 else "large"
    lo, hi = (1.0, crit) if regime == "small" else (crit, float(n))
    alpha1 = lo * (hi / lo) ** u
    if not lo < alpha1 < hi:
        return
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeBoundaryWarning)
        for c in (scaling_constants(regime, n, K, alpha1), scaling_constants("intermediate", n, K)):
            assert math.isclose(c.alpha[0], c.alpha[K + 1], rel_tol=1e-12)
            for k in range(1, K + 1):
                assert math.isclose(c.alpha[k + 1], c.tau * c.alpha[k], rel_tol=1e-12)


def test_perturbation_examples():
    c = scaling_constants("intermediate", 10**6, 1)
    assert perturbations_for_gamma(0.0, c) == ((0.0,), (0.0,))
    assert perturbations_for_gamma([2.0], c)[1][0] == pytest.approx(0.02)
    with pytest.raises(ValueError):
        perturbations_for_gamma([-200.0], c)
    p = model_for_gamma([3.0], c)
    assert c.tau * (p.epsilon[0] - p.delta[0]) == pytest.approx(3.0)


def test_rescale_examples():
    c = scaling_constants("intermediate", 1000, 2)
    np.testing.assert_array_equal(rescale_state([1000, 0, 0, 0], c), np.zeros(4))
    gaps = []
    for n in (10**3, 10**5, 10**7, 10**9):
        c1 = scaling_constants("intermediate", n, 1)
        a1 = math.ceil(n ** (1 / 3))
        gaps.append(abs(rescale_state([n - a1, a1, 0], c1)[1] - 1.0))
        assert gaps[-1] <= 1.0 / c1.alpha[1] + 1e-12
    assert gaps[-1] < 2e-3


def test_rescaled_path_identity_and_round_trip():
    c = scaling_constants("intermediate", 5000, 2)
    p = model_for_gamma((0.3, -0.2), c)
    path = simulate_path(p, initial_state(p, 9), StopRule.at(4 * c.tau), seed=6)
    view = rescale(path, c)
    A = view.values()
    lhs = c.alpha[0] * A[:, 0]
    rhs = (c.alpha[1:] * A[:, 1:]).sum(axis=1)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12)
    np.testing.assert_array_equal(unrescale_state(A, c), path.states)
    np.testing.assert_allclose(view(view.times[3]), A[3])


def test_rescale_is_linear():
    c = scaling_constants("intermediate", 4000, 2)
    gen = np.random.default_rng(0)
    a = gen.integers(0, 500, (50, 4))
    b = gen.integers(0, 500, (50, 4))
    # the affine stage-0 coordinate is linear in the count of non-susceptibles n - a_0
    lin = lambda s: rescale_state(s, c) - rescale_state(np.zeros(4), c)
    np.testing.assert_allclose(lin(a + b), lin(a) + lin(b), rtol=1e-12, atol=1e-12)


def test_rescale_rejects_mismatch():
    c = scaling_constants("intermediate", 1000, 1)
    path = simulate_path(ModelParams(100, 1), (99, 1, 0), seed=1)
    with pytest.raises(ValueError):
        rescale(path, c)
