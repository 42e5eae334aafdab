"""Small statistical helpers shared by the studies."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

_MULTINOMIAL_MAX_SUPPORT = 5000


def estimate(value, replicas: int, se=None, ci=None, **extra) -> dict:
    """A reported statistic: value, replica count and an uncertainty (SE and/or CI)."""
    rec = {"value": value, "replicas": int(replicas)}
    if se is not None:
        rec["se"] = se
    if ci is not None:
        rec["ci95"] = list(ci)
    rec.update(extra)
    return rec


def mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()) if x.size else float("nan"), float("nan")
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))


def ks_distance(x, y) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and its p-value."""
    res = stats.ks_2samp(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return float(res.statistic), float(res.pvalue)


def bootstrap_means(sample, n_boot: int, gen: np.random.Generator) -> np.ndarray:
    """Means of ``n_boot`` resamples (with replacement) of ``sample``.

    Samples with few distinct values are resampled through multinomial counts
    over the support, which has the same law as index resampling.
    """
    sample = np.asarray(sample, dtype=float)
    R = sample.size
    support, counts = np.unique(sample, return_counts=True)
    if support.size <= _MULTINOMIAL_MAX_SUPPORT:
        draws = gen.multinomial(R, counts / R, size=n_boot)
        return draws @ support / R
    out = np.empty(n_boot)
    chunk = max(1, 2_000_000 // R)
    for i in range(0, n_boot, chunk):
        m = min(chunk, n_boot - i)
        out[i : i + m] = sample[gen.integers(0, R, size=(m, R))].mean(axis=1)
    return out


@dataclass(frozen=True)
class PowerFit:
    """Least-squares fit of ``log mean`` against ``log n`` with a replica bootstrap."""

    ns: tuple
    means: tuple
    slope: float
    intercept: float
    ci95: tuple
    boot_se: float
    replicas: tuple

    def covers(self, target: float) -> bool:
        return self.ci95[0] <= target <= self.ci95[1]

    @property
    def ci_width(self) -> float:
        return self.ci95[1] - self.ci95[0]

    def as_record(self) -> dict:
        return {"ns": list(self.ns), "means": list(self.means), "slope": self.slope, "intercept": self.intercept,
                "ci95": list(self.ci95), "boot_se": self.boot_se, "replicas": list(self.replicas)}


def power_law_fit(ns, samples, n_boot: int = 1000, gen: np.random.Generator | None = None) -> PowerFit:
    """Fit ``mean(samples[i]) ~ C n_i^slope``; the CI resamples replicas within each n."""
    ns = np.asarray(ns, dtype=float)
    if ns.size < 2 or len(samples) != ns.size:
        raise ValueError("a power-law fit needs at least two n values, each with a sample")
    if any(len(s) == 0 for s in samples):
        raise ValueError("every n needs at least one replica")
    means = np.array([np.mean(s) for s in samples], dtype=float)
    if np.any(means <= 0):
        raise ValueError("means must be positive for a log-log fit")
    logn = np.log(ns)
    slope, intercept = np.polyfit(logn, np.log(means), 1)
    gen = gen or np.random.default_rng(0)
    boot = np.stack([bootstrap_means(s, n_boot, gen) for s in samples], axis=1)
    boot_slopes = np.polyfit(logn, np.log(np.maximum(boot, 1e-300)).T, 1)[0]
    lo, hi = np.percentile(boot_slopes, [2.5, 97.5])
    return PowerFit(tuple(int(n) if float(n).is_integer() else float(n) for n in ns),
                    tuple(float(m) for m in means), float(slope), float(intercept),
                    (float(lo), float(hi)), float(boot_slopes.std(ddof=1)), tuple(len(s) for s in samples))
