"""Empirical distributions, KS distances, Wilson intervals."""

from __future__ import annotations

from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    """A sorted sample with bookkeeping about how it was produced."""

    samples: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.sort(np.asarray(self.samples, dtype=float).ravel())
        if s.size < 1:
            raise ValueError("an empirical distribution needs at least one sample")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    @property
    def n(self) -> int:
        return self.samples.size

    def mean(self) -> float:
        return float(np.mean(self.samples))


@dataclass(frozen=True, eq=False)
class CoverageCurve:
    """Coverage values on an ascending grid of linear SIR thresholds.

    For analytic curves ``ci_half_widths`` is all zeros and ``n`` is 0.
    Empirical curves also carry the Wilson bounds in ``ci_lo``/``ci_hi``.
    """

    thresholds: np.ndarray
    values: np.ndarray
    ci_half_widths: np.ndarray
    n: int
    kind: str
    ci_lo: np.ndarray | None = None
    ci_hi: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("analytic", "empirical"):
            raise ValueError(f"unknown curve kind {self.kind!r}")
        t = np.asarray(self.thresholds, dtype=float)
        v = np.asarray(self.values, dtype=float)
        h = np.asarray(self.ci_half_widths, dtype=float)
        if not (t.shape == v.shape == h.shape) or t.ndim != 1:
            raise ValueError("thresholds, values and half-widths must be equal-length vectors")
        if np.any(np.diff(t) <= 0):
            raise ValueError("thresholds must be strictly ascending")
        if np.any((v < 0) | (v > 1)):
            raise ValueError("coverage values must lie in [0, 1]")
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "ci_half_widths", h)


def ecdf_at(dist: EmpiricalDistribution, x):
    """Fraction of samples <= x (right-continuous)."""
    out = np.searchsorted(dist.samples, x, side="right") / dist.n
    return out if np.ndim(out) else float(out)


def ks_distance(dist: EmpiricalDistribution, cdf, cdf_left=None) -> float:
    """One-sample Kolmogorov-Smirnov statistic against a vectorised ``cdf``.

    Both one-sided gaps are taken at every sample point, so the supremum is
    exact rather than evaluated on a grid. The lower gap compares F_n(x-)
    with F(x), which is right for continuous ``cdf``; for a ``cdf`` with
    jumps at the samples pass its left limit as ``cdf_left``.
    """
    n = dist.n
    f = np.asarray(cdf(dist.samples), dtype=float)
    f_left = f if cdf_left is None else np.asarray(cdf_left(dist.samples), dtype=float)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - f)
    d_minus = np.max(f_left - (i - 1) / n)
    return float(max(d_plus, d_minus, 0.0))


def ks_two_sample_distance(a, b) -> float:
    """Two-sample KS statistic sup |F_a - F_b|."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def wilson_interval(successes, n, confidence: float = 0.95):
    """Wilson score interval for a binomial proportion.

    Works elementwise on arrays. The bounds are pinned to exactly 0 and 1
    when ``successes`` is 0 or ``n``.
    """
    s = np.asarray(successes, dtype=float)
    n_arr = np.asarray(n, dtype=float)
    if np.any(n_arr < 1) or np.any(s < 0) or np.any(s > n_arr):
        raise ValueError("need 0 <= successes <= n and n >= 1")
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
    z2 = z * z
    denom = n_arr + z2
    center = (s + z2 / 2.0) / denom
    half = z / denom * np.sqrt(s * (n_arr - s) / n_arr + z2 / 4.0)
    lo = np.where(s == 0, 0.0, np.clip(center - half, 0.0, 1.0))
    hi = np.where(s == n_arr, 1.0, np.clip(center + half, 0.0, 1.0))
    if lo.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


def inverse_transform_ratio_sample(p: float, u):
    """Quantile function of the distance ratio: sqrt(1 + u / (p (1 - u)))."""
    if not 0.0 < p <= 1.0:
        raise ValueError(f"thinning probability must lie in (0, 1], got {p}")
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise ValueError("u must lie strictly inside (0, 1)")
    out = np.sqrt(1.0 + u / (p * (1.0 - u)))
    return out if out.ndim else float(out)


def sample_ratio(p: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` distance ratios by inverse transform."""
    u = rng.random(n)
    # Generator.random is on [0, 1); resample the measure-zero endpoint
    while np.any(u == 0.0):
        zero = u == 0.0
        u[zero] = rng.random(int(zero.sum()))
    return inverse_transform_ratio_sample(p, u)
