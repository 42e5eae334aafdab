"""Euler-Maruyama for the limiting diffusions, and the terminal outbreak of the limit.

Only stage 1 is noisy: ``dA_1 = b_1(A) dt + sqrt(2 A_1) dB``; every other
coordinate follows its drift. After each step stage 1 is truncated at 0, which
makes 0 absorbing for it; the other coordinates are clamped at 0.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Literal

import numba
import numpy as np

from .. import rng
from .ode import integrate_ode

Variant = Literal["intermediate", "small", "feller"]
_VARIANT_CODES = {"intermediate": 0, "small": 1, "feller": 2}


@dataclass(frozen=True)
class SdeSpec:
    """Which limit to integrate.

    ``intermediate`` has the depletion terms ``-A_0 A_k``; ``small`` drops
    them; ``feller`` is the one-stage ``small`` system, whose stage-1
    coordinate is the Feller diffusion ``dZ = gamma Z dt + sqrt(2Z) dB``.
    """

    K: int
    gamma: tuple = ()
    variant: Variant = "intermediate"

    def __post_init__(self):
        if self.variant not in _VARIANT_CODES:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.variant == "feller" and self.K != 1:
            raise ValueError("the feller variant is one-dimensional (K = 1)")
        g = tuple(float(v) for v in np.broadcast_to(np.asarray(self.gamma or 0.0, dtype=float), (self.K,)))
        if not all(math.isfinite(v) for v in g):
            raise ValueError("gamma must be finite")
        object.__setattr__(self, "gamma", g)

    @classmethod
    def feller(cls, gamma: float) -> "SdeSpec":
        return cls(1, (gamma,), "feller")

    @property
    def code(self) -> int:
        return _VARIANT_CODES[self.variant]

    def as_record(self) -> dict:
        return {"K": self.K, "gamma": list(self.gamma), "variant": self.variant}


@numba.njit(inline="always")
def _drift_into(a, gamma, variant, b):
    K = a.shape[0] - 2
    depletion = a[0] if variant == 0 else 0.0
    b[0] = a[K]
    b[K + 1] = a[K]
    b[1] = (gamma[0] - depletion) * a[1]
    for k in range(2, K + 1):
        b[k] = a[k - 1] + (gamma[k - 1] - depletion) * a[k]


@numba.njit(inline="always")
def _em_step(a, gamma, variant, dt, xi, b):
    _drift_into(a, gamma, variant, b)
    K = a.shape[0] - 2
    a1 = a[1]
    new1 = a1 + b[1] * dt + math.sqrt(2.0 * a1 * dt) * xi
    for k in range(K + 2):
        if k != 1:
            v = a[k] + b[k] * dt
            a[k] = v if v > 0.0 else 0.0
    a[1] = new1 if new1 > 0.0 else 0.0


@numba.njit(cache=True)
def _em_path(init, gamma, variant, dt, noise, out):
    a = init.copy()
    b = np.empty_like(a)
    out[0, :] = a
    for i in range(noise.shape[0]):
        _em_step(a, gamma, variant, dt, noise[i], b)
        out[i + 1, :] = a


@numba.njit(cache=True)
def _em_ensemble(keys, init, gamma, variant, dt, n_steps, record_steps, out, t0_out):
    """Replica ``r`` draws its normals from Philox key ``keys[r]``; states are kept at ``record_steps``.

    Normals come in Box-Muller pairs, consumed in order, matching :func:`rng.fill_normal`.
    """
    R = keys.shape[0]
    n_rec = record_steps.shape[0]
    b = np.empty_like(init)
    finite = True
    for r in range(R):
        st = np.zeros(rng.STATE_SIZE, dtype=np.uint64)
        st[0] = keys[r, 0]
        st[1] = keys[r, 1]
        st[10] = np.uint64(4)
        a = init.copy()
        j = 0
        while j < n_rec and record_steps[j] == 0:
            out[r, j, :] = a
            j += 1
        t0_out[r] = 0.0 if a[1] == 0.0 else np.inf
        spare = 0.0
        for i in range(1, n_steps + 1):
            if i % 2:
                xi, spare = rng.normal_pair(st)
            else:
                xi = spare
            _em_step(a, gamma, variant, dt, xi, b)
            if a[1] == 0.0 and t0_out[r] == np.inf:
                t0_out[r] = i * dt
            while j < n_rec and record_steps[j] == i:
                out[r, j, :] = a
                j += 1
        for k in range(a.shape[0]):
            if not np.isfinite(a[k]):
                finite = False
    return finite


@numba.njit(cache=True)
def _em_until_extinct(a, gamma, variant, dt, max_steps, st):
    b = np.empty_like(a)
    steps = 0
    spare = 0.0
    while a[1] > 0.0 and steps < max_steps:
        if steps % 2 == 0:
            xi, spare = rng.normal_pair(st)
        else:
            xi = spare
        _em_step(a, gamma, variant, dt, xi, b)
        steps += 1
    return steps


def drift(a, spec: SdeSpec) -> np.ndarray:
    """Drift of the limiting SDE at ``a`` (length K+2)."""
    a = np.asarray(a, dtype=float)
    if a.shape != (spec.K + 2,):
        raise ValueError(f"state must have K+2={spec.K + 2} entries")
    b = np.empty_like(a)
    _drift_into(a, np.asarray(spec.gamma), spec.code, b)
    return b


class NumericalEscape(FloatingPointError):
    """The scheme produced a non-finite value."""


@dataclass(frozen=True, eq=False)
class DiffusionPath:
    grid: np.ndarray
    values: np.ndarray
    seed: rng.ReplicaSeed | None
    dt: float
    spec: SdeSpec

    @property
    def times(self) -> np.ndarray:
        return self.grid

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time"] + [f"A_{k}" for k in range(self.values.shape[1])])
        for t, row in zip(self.grid, self.values):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        return buf.getvalue()


def _check_init(init, spec):
    a = np.array(init, dtype=float)
    if a.shape != (spec.K + 2,):
        raise ValueError(f"initial state must have K+2={spec.K + 2} entries")
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise ValueError("initial state must be finite and nonnegative")
    return a


def _n_steps(T, dt):
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if not T >= dt:
        raise ValueError(f"horizon T={T} must be >= dt={dt}")
    return int(round(T / dt)) if abs(T / dt - round(T / dt)) < 1e-9 else int(math.ceil(T / dt))


def integrate_sde(spec: SdeSpec, init, T: float, dt: float = 1e-3, seed=None, noise=None) -> DiffusionPath:
    """One Euler-Maruyama path on the grid ``0, dt, ..., n dt`` (n dt >= T).

    ``noise`` (standard normals, one per step) overrides the seed's stream;
    passing the same seed or the same ``noise`` to two specs couples them.
    """
    a = _check_init(init, spec)
    steps = _n_steps(T, dt)
    if noise is None:
        seed = rng.as_seed(seed)
        noise = np.empty(steps)
        rng.fill_normal(seed.state(), noise)
    else:
        noise = np.ascontiguousarray(noise, dtype=float)
        if noise.shape != (steps,):
            raise ValueError(f"noise must hold one normal per step ({steps})")
        seed = None if seed is None else rng.as_seed(seed)
    out = np.empty((steps + 1, spec.K + 2))
    _em_path(a, np.asarray(spec.gamma), spec.code, float(dt), noise, out)
    if not np.all(np.isfinite(out)):
        raise NumericalEscape("Euler-Maruyama produced a non-finite value")
    return DiffusionPath(np.arange(steps + 1) * dt, out, seed, float(dt), spec)


@dataclass(frozen=True, eq=False)
class DiffusionEnsemble:
    """States of ``replicas`` independent paths at ``times``; ``t0_stage1`` is grid-resolved."""

    spec: SdeSpec
    seed: rng.ReplicaSeed
    dt: float
    times: np.ndarray
    values: np.ndarray
    t0_stage1: np.ndarray


def simulate_ensemble(spec: SdeSpec, init, replicas: int, seed, times, dt: float = 1e-3,
                      first_replica: int = 0) -> DiffusionEnsemble:
    """Replica ``r`` equals ``integrate_sde(spec, init, T, dt, seed.child(r))`` at ``times``."""
    a = _check_init(init, spec)
    seed = rng.as_seed(seed)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.size == 0 or np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be a nonempty nondecreasing vector of nonnegative values")
    record = np.rint(times / dt).astype(np.int64)
    if np.any(np.abs(record * dt - times) > 1e-9 * np.maximum(1.0, times)):
        raise ValueError("observation times must lie on the dt grid")
    steps = int(record[-1])
    keys = rng.replica_keys(seed, first_replica, replicas)
    out = np.empty((replicas, times.size, spec.K + 2))
    t0 = np.empty(replicas)
    if not _em_ensemble(keys, a, np.asarray(spec.gamma), spec.code, float(dt), steps, record, out, t0):
        raise NumericalEscape("Euler-Maruyama produced a non-finite value")
    return DiffusionEnsemble(spec, seed, float(dt), times, out, t0)


class OutbreakNotConverged(RuntimeError):
    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class OutbreakResult:
    value: float
    t0_stage1: float
    tail: float
    seed: rng.ReplicaSeed
    dt: float
    extra: dict = field(default_factory=dict)

    def as_record(self) -> dict:
        return {"seed": self.seed.as_record(), "dt": self.dt, "T0_A1_grid": self.t0_stage1,
                "A_tail": self.tail, "A_Kplus1_inf": self.value}


def terminal_outbreak(spec: SdeSpec, init, seed=None, dt: float = 1e-3, max_time: float = 1e3,
                      tail_eps: float = 1e-8, ode_dt: float = 1e-3, ode_chunk: float = 20.0,
                      ode_max_time: float = 1e4) -> OutbreakResult:
    """Limit of the rescaled outbreak size ``A_{K+1}(inf)`` for one noise realisation.

    The SDE runs until stage 1 hits 0 on the grid; after that the dynamics are
    deterministic, so the remaining stages are integrated as the ODE with zero
    forcing until the infected mass falls below ``tail_eps``, and that
    remainder is added to the removed coordinate.
    """
    if spec.variant != "intermediate":
        raise ValueError("terminal outbreak is defined for the intermediate variant")
    a = _check_init(init, spec)
    seed = rng.as_seed(seed)
    K = spec.K
    gamma = np.asarray(spec.gamma)
    max_steps = int(math.ceil(max_time / dt))
    steps = _em_until_extinct(a, gamma, spec.code, float(dt), max_steps, seed.state())
    if not np.all(np.isfinite(a)):
        raise NumericalEscape("Euler-Maruyama produced a non-finite value")
    t0 = steps * dt
    if a[1] > 0:
        raise OutbreakNotConverged(f"stage 1 still alive at t={t0:g}", float(a[K + 1]))
    if K == 1:
        return OutbreakResult(float(a[2]), t0, 0.0, seed, float(dt))
    x = np.delete(a, 1)
    elapsed = 0.0
    while True:
        mass = float(x[1:K].sum())
        if mass < tail_eps:
            break
        if elapsed >= ode_max_time:
            raise OutbreakNotConverged(f"infected mass {mass:.3e} above {tail_eps:g} after ODE time {elapsed:g}",
                                       float(x[K] + mass))
        x = integrate_ode(x, gamma, ode_chunk, ode_dt).values[-1]
        elapsed += ode_chunk
    return OutbreakResult(float(x[K] + mass), t0, mass, seed, float(dt), {"ode_time": elapsed})
