"""Deterministic post-extinction dynamics: the forced ODE and its y = 0 closed form.

State vectors here drop stage 1: ``x = (x_0, x_2, ..., x_{K+1})`` (length K+1),
with ``x_1 = y`` the forcing. Column ``j`` of a solution holds ``x_0`` for
``j = 0`` and ``x_{j+1}`` otherwise.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.integrate import cumulative_simpson


@numba.njit(cache=True)
def _rhs(y, x, gamma, out):
    K = x.shape[0] - 1
    last = y if K == 1 else x[K - 1]
    out[0] = last
    out[K] = last
    for k in range(2, K + 1):
        prev = y if k == 2 else x[k - 2]
        out[k - 1] = prev + (gamma[k - 1] - x[0]) * x[k - 1]


@numba.njit(cache=True)
def _rk4(x0, gamma, dt, y_half, out):
    """Classical RK4; ``y_half[2i]`` is y at step i, ``y_half[2i+1]`` at its midpoint."""
    m = x0.shape[0]
    k1 = np.empty(m)
    k2 = np.empty(m)
    k3 = np.empty(m)
    k4 = np.empty(m)
    tmp = np.empty(m)
    out[0, :] = x0
    for i in range(out.shape[0] - 1):
        x = out[i]
        _rhs(y_half[2 * i], x, gamma, k1)
        for j in range(m):
            tmp[j] = x[j] + 0.5 * dt * k1[j]
        _rhs(y_half[2 * i + 1], tmp, gamma, k2)
        for j in range(m):
            tmp[j] = x[j] + 0.5 * dt * k2[j]
        _rhs(y_half[2 * i + 1], tmp, gamma, k3)
        for j in range(m):
            tmp[j] = x[j] + dt * k3[j]
        _rhs(y_half[2 * i + 2], tmp, gamma, k4)
        for j in range(m):
            v = x[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            out[i + 1, j] = v if v > 0.0 else 0.0


def ode_rhs(y: float, x, gamma) -> np.ndarray:
    """Right-hand side ``F(y, x)``; ``gamma`` holds gamma_1..gamma_K (gamma_1 unused)."""
    x = np.asarray(x, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (x.size - 1,):
        raise ValueError(f"gamma must have K={x.size - 1} entries for a state of length {x.size}")
    out = np.empty_like(x)
    _rhs(float(y), x, gamma, out)
    return out


@dataclass(frozen=True, eq=False)
class OdeSolution:
    grid: np.ndarray
    values: np.ndarray
    forcing: np.ndarray
    gamma: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.values.shape[1] - 1

    def column(self, stage: int) -> np.ndarray:
        """Values of ``x_stage`` (stage 0 or 2..K+1; stage 1 returns the forcing)."""
        if stage == 1:
            return self.forcing
        if stage == 0:
            return self.values[:, 0]
        if not 2 <= stage <= self.K + 1:
            raise IndexError(f"stage {stage} out of range for K={self.K}")
        return self.values[:, stage - 1]

    def at(self, t) -> np.ndarray:
        """Piecewise-linear interpolation of the solution at time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        return np.stack([np.interp(t, self.grid, self.values[:, j]) for j in range(self.K + 1)], axis=-1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "x_0"] + [f"x_{k}" for k in range(2, self.K + 2)])
        for t, row in zip(self.grid, self.values):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        return buf.getvalue()


def uniform_grid(T: float, dt: float) -> np.ndarray:
    if not T > 0:
        raise ValueError(f"horizon T must be > 0, got {T}")
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    steps = max(1, int(math.ceil(T / dt - 1e-9)))
    return np.linspace(0.0, T, steps + 1)


def _forcing_half_steps(y, grid):
    half = np.empty(2 * grid.size - 1)
    half[0::2] = grid
    half[1::2] = 0.5 * (grid[:-1] + grid[1:])
    if y is None:
        vals = np.zeros_like(half)
    elif callable(y):
        vals = np.array([float(y(t)) for t in half])
    elif np.ndim(y) == 0:
        vals = np.full_like(half, float(y))
    else:
        if isinstance(y, tuple) and len(y) == 2:
            ts, ys = (np.asarray(v, dtype=float) for v in y)
        elif hasattr(y, "grid") and hasattr(y, "values"):
            ts, ys = np.asarray(y.grid, dtype=float), np.asarray(y.values, dtype=float)
            ys = ys[:, 1] if ys.ndim == 2 else ys
        else:
            ys = np.asarray(y, dtype=float)
            if ys.shape != grid.shape:
                raise ValueError(f"forcing array must match the grid ({grid.size} points)")
            ts = grid
        if ts[0] > 0 or ts[-1] < grid[-1] * (1 - 1e-12):
            raise ValueError("forcing path does not cover [0, T]")
        vals = np.interp(half, ts, ys)
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise ValueError("forcing y must be finite and nonnegative")
    return vals


def integrate_ode(init, gamma, T: float, dt: float = 1e-3, y=None) -> OdeSolution:
    """Fixed-step RK4 for ``x' = F(y, x)`` on ``[0, T]``.

    ``y`` may be None (identically 0), a constant, a callable of time, an array
    on the solution grid, a ``(times, values)`` pair or a diffusion path (its
    stage-1 column); it is interpolated linearly onto the RK4 sub-steps.
    """
    x0 = np.asarray(init, dtype=float)
    K = x0.size - 1
    if K < 1:
        raise ValueError("state must have K+1 >= 2 entries")
    if np.any(x0 < 0) or not np.all(np.isfinite(x0)):
        raise ValueError("initial state must be finite and nonnegative")
    gamma = np.ascontiguousarray(np.broadcast_to(np.asarray(gamma, dtype=float), (K,)))
    grid = uniform_grid(T, dt)
    y_half = _forcing_half_steps(y, grid)
    out = np.empty((grid.size, K + 1))
    _rk4(x0, gamma, grid[1] - grid[0], y_half, out)
    return OdeSolution(grid, out, y_half[0::2].copy(), gamma, {"dt": float(grid[1] - grid[0]), "method": "rk4"})


class ClosedFormNotConverged(RuntimeError):
    def __init__(self, message, residual, partial):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual
        self.partial = partial


def _cumint(f, t):
    if t.size < 3:
        return np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t))])
    return cumulative_simpson(f, x=t, initial=0.0)


def _phi_sums(init, gamma, t):
    """``S_k(t) = sum_i x_{k-i}(0) phi_{k,i}(t)`` for k = 2..K (these do not involve x_0)."""
    K = init.size - 1
    phi = {2: [np.ones_like(t)]}
    sums = {2: init[1] * phi[2][0]}
    for k in range(3, K + 1):
        eta = gamma[k - 2] - gamma[k - 1]
        w = np.exp(eta * t)
        phi[k] = [np.ones_like(t)] + [_cumint(p * w, t) for p in phi[k - 1]]
        # x_{k-i}(0) lives in column k-i-1
        sums[k] = sum(init[k - i - 1] * phi[k][i] for i in range(k - 1))
    return sums


def _closed_form_pass(init, gamma, t, sums, x0_path):
    K = init.size - 1
    I0 = _cumint(x0_path, t)
    xs = {k: sums[k] * np.exp(-(I0 - gamma[k - 1] * t)) for k in range(2, K + 1)}
    new_x0 = init[0] + _cumint(xs[K], t)
    return xs, new_x0


def closed_form_y0(init, gamma, grid, tol: float = 1e-10, max_iter: int = 200, window: float = 0.1) -> OdeSolution:
    """Solution with ``y = 0`` from the explicit product formula.

    ``x_k(t) = S_k(t) exp(-int_0^t (x_0 - gamma_k))``, where ``S_k`` is built from
    the iterated integrals ``phi_{k,i}``. Since ``x_0' = x_K``, ``x_0`` is found by
    fixed-point iteration; the iteration marches over windows of length
    ``window`` (each converged to ``tol``) and then polishes on the full grid.
    """
    init = np.asarray(init, dtype=float)
    K = init.size - 1
    if K < 1 or np.any(init < 0):
        raise ValueError("init must be a nonnegative vector of length K+1 >= 2")
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (K,))
    t = np.asarray(grid, dtype=float)
    if t.ndim != 1 or t.size < 2 or t[0] != 0 or np.any(np.diff(t) <= 0):
        raise ValueError("grid must be strictly increasing and start at 0")
    values = np.empty((t.size, K + 1))
    values[:, 0] = init[0]
    if K == 1:
        values[:, 1] = init[1]
        return OdeSolution(t, values, np.zeros_like(t), np.array(gamma), {"iterations": 0, "method": "closed-form"})

    sums = _phi_sums(init, gamma, t)
    x0 = np.full_like(t, init[0])
    iterations = 0

    def converge(end, x0, iterations):
        for _ in range(max_iter):
            _, new = _closed_form_pass(init, gamma, t[:end], {k: s[:end] for k, s in sums.items()}, x0[:end])
            new = np.concatenate([new, np.full(t.size - end, new[-1])])
            resid = float(np.max(np.abs(new - x0)))
            x0 = new
            iterations += 1
            if resid < tol:
                return x0, iterations
        raise ClosedFormNotConverged(f"fixed point not reached on [0, {t[end - 1]:g}]", resid, x0)

    edges = np.arange(window, t[-1], window)
    for e in edges:
        end = int(np.searchsorted(t, e, side="right"))
        if end >= 3:
            x0, iterations = converge(end, x0, iterations)
    x0, iterations = converge(t.size, x0, iterations)
    xs, _ = _closed_form_pass(init, gamma, t, sums, x0)
    values[:, 0] = x0
    for k in range(2, K + 1):
        values[:, k - 1] = xs[k]
    values[:, K] = init[K] + (x0 - init[0])
    return OdeSolution(t, values, np.zeros_like(t), np.array(gamma), {"iterations": iterations, "method": "closed-form"})


@dataclass
class Check:
    passed: bool
    margin: float
    detail: str = ""


@dataclass
class PropertyReport:
    checks: dict
    x0_limit_interval: tuple | None = None

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def as_record(self) -> dict:
        rec = {name: {"passed": c.passed, "margin": c.margin, "detail": c.detail} for name, c in self.checks.items()}
        return {"checks": rec, "x0_limit_interval": self.x0_limit_interval, "all_passed": self.all_passed}

    def to_text(self) -> str:
        return json.dumps(self.as_record(), indent=2)


def verify_properties(sol: OdeSolution, monotone_tol: float = 1e-9, decay_threshold: float = 1e-6) -> PropertyReport:
    """Numerical diagnostics of the qualitative behaviour of an ODE solution.

    Checks: x_0 never decreases by more than ``monotone_tol`` per step; x_k > 0 on
    (0, T] when the chain is fed (y(0) > 0 or x_2(0) > 0); the bracket on
    x_0(inf) lies above every gamma_k (k = 2..K); x_k(T) below
    ``decay_threshold`` with a finite integral. For K = 1 only the first applies.
    """
    K = sol.K
    x = sol.values
    checks = {}
    step = np.diff(x[:, 0])
    worst = float(step.min()) if step.size else 0.0
    checks["x0_nondecreasing"] = Check(worst >= -monotone_tol, worst + monotone_tol,
                                       "min per-step increment of x_0 plus tolerance")
    if K == 1:
        return PropertyReport(checks)

    fed = sol.forcing[0] > 0 or x[0, 1] > 0
    inner = x[1:, 1:K]
    low = float(inner.min())
    if fed:
        checks["positivity"] = Check(low > 0, low, "min of x_2..x_K over (0, T]")
    else:
        checks["positivity"] = Check(True, low, "not applicable: y(0) = 0 and x_2(0) = 0")

    lower = float(x[-1, 0])
    upper = lower + float(x[-1, 1:K].sum())
    gmax = float(np.max(sol.gamma[1:K]))
    checks["x0_limit_exceeds_gamma"] = Check(lower > gmax, lower - gmax,
                                             "lower bracket of x_0(inf) minus max gamma_k, k=2..K")
    final = float(x[-1, 1:K].max())
    dt = np.diff(sol.grid)[:, None]
    integrals = (0.5 * (x[1:, 1:K] + x[:-1, 1:K]) * dt).sum(axis=0)
    finite = bool(np.all(np.isfinite(integrals)))
    checks["decay"] = Check(final < decay_threshold and finite, decay_threshold - final,
                            f"max_k x_k(T) vs threshold; integrals {[float(v) for v in integrals]}")
    return PropertyReport(checks, (lower, upper))


class TimeChange:
    """Right-continuous inverse ``c`` of ``s -> int_0^s z`` for a piecewise-linear ``z``."""

    def __init__(self, times, z):
        self.times = np.asarray(times, dtype=float)
        self.z = np.asarray(z, dtype=float)
        if self.times.shape != self.z.shape or self.times.ndim != 1 or self.times.size < 2:
            raise ValueError("times and z must be matching vectors of length >= 2")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(self.z < 0):
            raise ValueError("z must be nonnegative")
        self.slopes = np.diff(self.z) / np.diff(self.times)
        self.cum = np.concatenate([[0.0], np.cumsum(0.5 * (self.z[1:] + self.z[:-1]) * np.diff(self.times))])

    @property
    def total(self) -> float:
        return float(self.cum[-1])

    def cumulative(self, s):
        """Exact integral of the interpolated ``z`` from ``times[0]`` to ``s``."""
        s = np.asarray(s, dtype=float)
        i = np.clip(np.searchsorted(self.times, s, side="right") - 1, 0, self.times.size - 2)
        h = s - self.times[i]
        return self.cum[i] + self.z[i] * h + 0.5 * self.slopes[i] * h * h

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, np.inf)
        ok = (t >= 0) & (t < self.total)
        tt = t[ok]
        i = np.minimum(np.searchsorted(self.cum, tt, side="right") - 1, self.times.size - 2)
        rem = tt - self.cum[i]
        zi = self.z[i]
        disc = np.sqrt(np.maximum(zi * zi + 2.0 * self.slopes[i] * rem, 0.0))
        denom = zi + disc
        h = np.where(denom > 0, 2.0 * rem / np.where(denom > 0, denom, 1.0), 0.0)
        out[ok] = self.times[i] + h
        if np.any(t < 0):
            raise ValueError("time-change argument must be >= 0")
        return out if out.ndim else float(out)


def time_change_inverse(z_path) -> TimeChange:
    """``c`` with ``int_0^{c(t)} z = t`` for ``t`` below the total integral, +inf beyond.

    ``z_path`` is a ``(times, values)`` pair or an object with ``grid``/``times``
    and ``values`` (one-dimensional).
    """
    if isinstance(z_path, tuple):
        times, z = z_path
    else:
        times = getattr(z_path, "grid", None)
        times = z_path.times if times is None else times
        z = z_path.values
    return TimeChange(times, z)
