from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """Population size, stage count and per-stage rate perturbations.

    Stage ``k`` individuals progress at rate ``1 + delta[k-1]`` and make
    successful infections (into their own stage) at rate
    ``(1 + epsilon[k-1]) * a_0 / n``.  ``delta = epsilon = 0`` is the strictly
    critical model.
    """

    n: int
    K: int
    delta: tuple[float, ...] = ()
    epsilon: tuple[float, ...] = ()

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "K", int(self.K))
        for name in ("delta", "epsilon"):
            vals = getattr(self, name)
            vals = (0.0,) * self.K if len(vals) == 0 else tuple(float(v) for v in vals)
            if len(vals) != self.K:
                raise ValueError(f"{name} must have K={self.K} entries, got {len(vals)}")
            if not all(np.isfinite(v) and v > -1.0 for v in vals):
                raise ValueError(f"every {name}[k] must be finite and > -1, got {vals}")
            object.__setattr__(self, name, vals)

    @classmethod
    def critical(cls, n: int, K: int) -> "ModelParams":
        return cls(n, K)

    @property
    def progression_factors(self) -> np.ndarray:
        return 1.0 + np.asarray(self.delta)

    @property
    def infection_factors(self) -> np.ndarray:
        return 1.0 + np.asarray(self.epsilon)

    def max_rate_factor(self) -> float:
        return float(max(self.progression_factors.max(), self.infection_factors.max()))

    def as_record(self) -> dict:
        return {"n": self.n, "K": self.K, "delta": list(self.delta), "epsilon": list(self.epsilon)}


def check_state(state, params: ModelParams) -> np.ndarray:
    """Validate a population vector ``(a_0, a_1, ..., a_K, a_{K+1})`` and return it as int64."""
    a = np.asarray(state)
    if a.ndim != 1 or a.shape[0] != params.K + 2:
        raise ValueError(f"state must have K+2={params.K + 2} entries, got shape {a.shape}")
    if not np.all(np.equal(np.mod(a, 1), 0)):
        raise ValueError("state entries must be integers")
    a = a.astype(np.int64)
    if np.any(a < 0):
        raise ValueError(f"state entries must be nonnegative, got {a.tolist()}")
    if int(a.sum()) != params.n:
        raise ValueError(f"state must sum to n={params.n}, got {int(a.sum())}")
    return a


def initial_state(params: ModelParams, infected) -> np.ndarray:
    """Everybody susceptible except ``infected[k-1]`` individuals in stage ``k``.

    ``infected`` may be a scalar (all in stage 1) or a length-K sequence.
    """
    inf = np.zeros(params.K, dtype=np.int64)
    if np.ndim(infected) == 0:
        inf[0] = int(infected)
    else:
        inf[:] = np.asarray(infected, dtype=np.int64)
    a = np.zeros(params.K + 2, dtype=np.int64)
    a[1 : params.K + 1] = inf
    a[0] = params.n - inf.sum()
    return check_state(a, params)


def transition_rates(state, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-stage progression and infection rates in state ``a``.

    Returns ``(progression, infection)``, each of length K:
    ``progression[k-1] = (1 + delta_k) a_k`` and
    ``infection[k-1] = (1 + epsilon_k) a_k a_0 / n``.
    """
    a = check_state(state, params)
    infected = a[1 : params.K + 1].astype(float)
    progression = params.progression_factors * infected
    infection = params.infection_factors * infected * (a[0] / params.n)
    return progression, infection
