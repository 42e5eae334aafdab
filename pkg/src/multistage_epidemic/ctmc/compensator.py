"""Compensators and predictable quadratic variations of the rescaled coordinates.

For the rescaled process ``A_n`` and each coordinate ``k``,
``M_k(t) = A_{n,k}(t) - A_{n,k}(0) - V_k(t)`` is a martingale with
predictable quadratic variation ``<M_k>(t)``. Both ``V_k`` and ``<M_k>`` are
time integrals of functions of the current state; between events these are
constant, so the integrals are computed exactly.

Conventions: ``delta_0 = delta_{K+1} = epsilon_{K+1} = -1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .simulate import Trajectory

if TYPE_CHECKING:
    from ..scaling import ScalingConstants


@dataclass(frozen=True, eq=False)
class CompensatorPaths:
    """Values at the query ``times`` (rescaled units); arrays are (len(times), K+2)."""

    times: np.ndarray
    A: np.ndarray
    V: np.ndarray
    QV: np.ndarray
    A_initial: np.ndarray

    @property
    def M(self) -> np.ndarray:
        return self.A - self.A_initial - self.V


def _extended(params, K):
    delta = np.full(K + 2, -1.0)
    eps = np.full(K + 2, -1.0)
    delta[1 : K + 1] = params.delta
    eps[1 : K + 1] = params.epsilon
    return delta, eps


def drift_and_qv_rates(A: np.ndarray, params, constants: ScalingConstants):
    """Integrands of ``V_k`` and ``<M_k>`` at rescaled state(s) ``A`` (last axis K+2)."""
    K = constants.K
    n = constants.n
    tau = constants.tau
    alpha = constants.alpha
    delta, eps = _extended(params, K)
    A = np.asarray(A, dtype=float)
    v = np.zeros_like(A)
    susceptible_frac = 1.0 - alpha[0] * A[..., 0] / n
    v[..., 0] = (tau / alpha[0]) * np.sum(
        (1.0 + eps[1 : K + 1]) * alpha[1 : K + 1] * susceptible_frac[..., None] * A[..., 1 : K + 1], axis=-1)
    for k in range(1, K + 2):
        v[..., k] = ((1.0 + delta[k - 1]) * A[..., k - 1]
                     + tau * (eps[k] - delta[k]) * A[..., k]
                     - (tau * alpha[0] / n) * (1.0 + eps[k]) * A[..., 0] * A[..., k])
    # k = 1 carries no inflow from stage 0: (1 + delta_0) = 0 handles it
    qv = v / alpha + 2.0 * (tau / alpha) * (1.0 + delta) * A
    return v, qv


def compensator_paths(path: Trajectory, constants: ScalingConstants, times=None) -> CompensatorPaths:
    """``A_n``, ``V_k``, ``<M_k>`` (and ``M_k`` via ``.M``) at rescaled query times.

    ``times`` defaults to every event time of ``path`` (rescaled) plus its end.
    """
    from ..scaling import rescale_state

    if path.n != constants.n or path.K != constants.K:
        raise ValueError("trajectory and constants disagree on n or K")
    if path.mode != "events":
        raise ValueError("compensators need the full event list")
    ev_t = path.times / constants.tau
    A_ev = rescale_state(path.states, constants)
    v_rate, qv_rate = drift_and_qv_rates(A_ev, path.params, constants)
    dt = np.diff(ev_t)
    V_cum = np.vstack([np.zeros((1, constants.K + 2)), np.cumsum(v_rate[:-1] * dt[:, None], axis=0)])
    Q_cum = np.vstack([np.zeros((1, constants.K + 2)), np.cumsum(qv_rate[:-1] * dt[:, None], axis=0)])
    t_end = path.t_end / constants.tau
    if times is None:
        times = np.append(ev_t, t_end) if t_end > ev_t[-1] else ev_t
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or (np.any(times > t_end * (1 + 1e-12)) and not path.absorbed):
        raise ValueError(f"query times must lie in [0, {t_end}]")
    idx = np.searchsorted(ev_t, times, side="right") - 1
    gap = (times - ev_t[idx])[:, None]
    V = V_cum[idx] + v_rate[idx] * gap
    QV = Q_cum[idx] + qv_rate[idx] * gap
    return CompensatorPaths(times, A_ev[idx], V, QV, A_ev[0])


def martingale_at(path: Trajectory, constants: ScalingConstants, t: float) -> tuple[np.ndarray, np.ndarray]:
    """``(M_k(t), <M_k>(t))`` for every coordinate, at one rescaled time."""
    cp = compensator_paths(path, constants, [t])
    return cp.M[0], cp.QV[0]
