"""Regime-specific time and space scales, and rescaled views of trajectories.

In every regime the scales obey ``alpha[0] == alpha[K+1]`` and
``alpha[k+1] == tau * alpha[k]`` (k = 1..K); they differ in how ``alpha[1]``
and ``tau`` relate to ``n``:

* intermediate: ``alpha[1] = tau = n**(1/(K+2))``
* small: ``tau = alpha[1]`` with ``1 << alpha[1] << n**(1/(K+2))``
* large: ``n**(1/(K+2)) << alpha[1] << n`` and ``tau = (n/alpha[1])**(1/(K+1))``
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .ctmc.model import ModelParams
from .ctmc.simulate import Trajectory

Regime = Literal["small", "intermediate", "large"]
_BOUNDARY_FACTOR = 4.0


class RegimeBoundaryWarning(UserWarning):
    """alpha1 is admissible but within a factor 4 of a regime boundary."""


@dataclass(frozen=True, eq=False)
class ScalingConstants:
    regime: Regime
    n: int
    K: int
    tau: float
    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        if alpha.shape != (self.K + 2,):
            raise ValueError(f"alpha must have K+2={self.K + 2} entries")
        if not (self.tau > 0 and np.all(alpha > 0)):
            raise ValueError("tau and all alpha must be positive")
        rel = lambda x, y: abs(x - y) <= 1e-12 * max(abs(x), abs(y))
        ok = rel(alpha[0], alpha[self.K + 1]) and all(
            rel(alpha[k + 1], self.tau * alpha[k]) for k in range(1, self.K + 1))
        if not ok:
            raise ValueError("scales violate alpha_0 = alpha_{K+1}, alpha_{k+1} = tau alpha_k")

    def as_record(self) -> dict:
        return {"regime": self.regime, "n": self.n, "K": self.K, "tau": self.tau,
                "alpha": [float(x) for x in self.alpha]}


def scaling_constants(regime: Regime, n: int, K: int, alpha1: float | None = None) -> ScalingConstants:
    """Scales for ``regime``; ``alpha1`` is ignored in the intermediate regime."""
    if n < 1 or K < 1:
        raise ValueError("n and K must be positive")
    crit = float(n) ** (1.0 / (K + 2))
    if regime == "intermediate":
        alpha1 = crit
    else:
        if alpha1 is None:
            raise ValueError(f"alpha1 is required for the {regime} regime")
        alpha1 = float(alpha1)
        if not 1.0 < alpha1 < n:
            raise ValueError(f"alpha1 must lie in (1, n) = (1, {n}), got {alpha1}")
        lo, hi = (1.0, crit) if regime == "small" else (crit, float(n))
        if regime not in ("small", "large"):
            raise ValueError(f"unknown regime {regime!r}")
        if not lo < alpha1 < hi:
            raise ValueError(f"alpha1={alpha1} outside the {regime} range ({lo:g}, {hi:g}) at n={n}")
        if alpha1 < _BOUNDARY_FACTOR * lo or alpha1 > hi / _BOUNDARY_FACTOR:
            warnings.warn(f"alpha1={alpha1:g} within a factor {_BOUNDARY_FACTOR:g} of the {regime} "
                          f"regime boundary ({lo:g}, {hi:g}) at n={n}", RegimeBoundaryWarning, stacklevel=2)

    alpha = np.empty(K + 2)
    alpha[1] = alpha1
    if regime == "large":
        tau = (n / alpha1) ** (1.0 / (K + 1))
    else:
        tau = alpha1
    for k in range(2, K + 2):
        alpha[k] = tau * alpha[k - 1]
    alpha[0] = alpha[K + 1]
    return ScalingConstants(regime, int(n), int(K), float(tau), alpha)


def perturbations_for_gamma(gamma, constants: ScalingConstants) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Rate perturbations realising ``tau * (epsilon - delta) = gamma`` exactly.

    The split is fixed to ``delta = 0``, ``epsilon = gamma / tau``.
    """
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (constants.K,))
    eps = gamma / constants.tau
    if np.any(np.abs(eps) >= 1.0):
        raise ValueError(f"|gamma_k|/tau must be < 1 (tau={constants.tau:g}, gamma={gamma.tolist()})")
    return (0.0,) * constants.K, tuple(float(e) for e in eps)


def model_for_gamma(gamma, constants: ScalingConstants) -> ModelParams:
    delta, eps = perturbations_for_gamma(gamma, constants)
    return ModelParams(constants.n, constants.K, delta, eps)


def rescale_state(a, constants: ScalingConstants) -> np.ndarray:
    """Rescaled coordinates of integer state(s) ``a`` (last axis = K+2)."""
    a = np.asarray(a, dtype=float)
    out = a / constants.alpha
    out[..., 0] = (constants.n - a[..., 0]) / constants.alpha[0]
    return out


def unrescale_state(A, constants: ScalingConstants) -> np.ndarray:
    """Inverse of :func:`rescale_state`, rounded back to integers."""
    A = np.asarray(A, dtype=float)
    a = A * constants.alpha
    a[..., 0] = constants.n - A[..., 0] * constants.alpha[0]
    return np.rint(a).astype(np.int64)


class RescaledPath:
    """Lazy view ``A_n(t)`` of a trajectory in regime coordinates.

    ``A_{n,0}(t) = (n - a_0(tau t)) / alpha_0`` and
    ``A_{n,k}(t) = a_k(tau t) / alpha_k``. Calling the object evaluates at
    rescaled times.
    """

    def __init__(self, path: Trajectory, constants: ScalingConstants):
        if path.n != constants.n or path.K != constants.K:
            raise ValueError("trajectory and constants disagree on n or K")
        self.path = path
        self.constants = constants

    def __call__(self, t) -> np.ndarray:
        return rescale_state(self.path.state_at(np.asarray(t, dtype=float) * self.constants.tau),
                             self.constants)

    @property
    def times(self) -> np.ndarray:
        return self.path.times / self.constants.tau

    @property
    def t_end(self) -> float:
        return self.path.t_end / self.constants.tau

    def values(self) -> np.ndarray:
        """Rescaled state at every stored time (event or grid)."""
        return rescale_state(self.path.states, self.constants)


def rescale(path: Trajectory, constants: ScalingConstants) -> RescaledPath:
    return RescaledPath(path, constants)
