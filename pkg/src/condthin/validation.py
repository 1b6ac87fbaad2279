"""Acceptance checks comparing simulation against the closed forms.

Each check returns a :class:`CriterionResult`. :class:`Runner` and
:func:`run_all` execute them; the ``validate`` CLI command and the test-suite both use it.
Monte Carlo tolerances are multiplied by ``Scale.tolerance_factor``;
purely analytic checks are never widened.
"""

from __future__ import annotations

import itertools
import os
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from condthin import analytic
from condthin.montecarlo import (
    ScenarioConfig,
    estimate_coverage,
    estimate_ratio_distribution,
    generative_samples,
    generative_trials_for,
    coverage_curve_from_sir,
)
from condthin.rng import StreamRole, derive_seed, stream
from condthin.stats import ks_distance, ks_two_sample_distance, sample_ratio

DEFAULT_SEED = 1
GRID_DB = np.linspace(-10.0, 20.0, 31)


@dataclass(frozen=True)
class Scale:
    trials: int = 100_000
    ue_samples: int = 100_000
    repro_trials: int = 20_000
    tolerance_factor: float = 1.0
    workers: int = 1
    seed: int = DEFAULT_SEED

    @classmethod
    def quick(cls, **kw) -> "Scale":
        base = dict(trials=10_000, ue_samples=10_000, repro_trials=2_000, tolerance_factor=3.0)
        base.update(kw)
        return cls(**base)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return (
            f"[{mark}] criterion {self.number:2d} {self.name}: "
            f"measured={self.measured:.6g} tolerance={self.tolerance:.6g} "
            f"({self.seconds:.1f}s) {self.detail}"
        )


@dataclass
class _Cache:
    generative: dict = field(default_factory=dict)


def _seed(scale: Scale, *labels) -> int:
    return derive_seed(scale.seed, *labels)


def ratio_ks(scale: Scale) -> CriterionResult:
    tol = 0.01 * scale.tolerance_factor
    worst, parts = 0.0, []
    for k, p in enumerate((0.3, 0.5, 1.0)):
        cfg = ScenarioConfig(p=p, trials=scale.trials, seed=_seed(scale, 1, k))
        dist = estimate_ratio_distribution(cfg, workers=scale.workers)
        d = ks_distance(dist, lambda r, p=p: analytic.ratio_cdf(r, p))
        worst = max(worst, d)
        parts.append(f"p={p}:KS={d:.4f},redraws={dist.metadata['redraw_count']}")
    return CriterionResult(1, "ratio CDF vs Monte Carlo (KS)", worst <= tol, worst, tol, " ".join(parts))


def ratio_cdf_at_full_retention(scale: Scale) -> CriterionResult:
    r = np.linspace(1.0, 100.0, 1000)
    err = float(np.max(np.abs(analytic.ratio_cdf(r, 1.0) - (1.0 - 1.0 / r**2))))
    return CriterionResult(2, "ratio CDF at p=1 equals 1-1/r^2", err <= 1e-12, err, 1e-12)


def mean_ratio_checks(scale: Scale) -> CriterionResult:
    exact_one = analytic.mean_ratio(1.0) == 2.0
    worst_quad = 0.0
    for p in np.round(np.arange(0.1, 1.0, 0.1), 10):
        tail, _ = integrate.quad(lambda r: analytic.ratio_ccdf(r, p), 1.0, np.inf, epsabs=1e-13, epsrel=1e-13, limit=500)
        worst_quad = max(worst_quad, abs(analytic.mean_ratio(p) - (1.0 + tail)))
    cfg = ScenarioConfig(p=1.0, trials=scale.trials, seed=_seed(scale, 3))
    emp = estimate_ratio_distribution(cfg, workers=scale.workers).mean()
    band = 0.05 * scale.tolerance_factor
    ok = exact_one and worst_quad <= 1e-8 and abs(emp - 2.0) <= band
    return CriterionResult(
        3, "mean ratio (limit, quadrature, Monte Carlo)", ok, abs(emp - 2.0), band,
        f"mean_ratio(1)==2:{exact_one} quad_err={worst_quad:.2e} empirical_mean={emp:.4f}",
    )


def coverage_quadrature(scale: Scale) -> CriterionResult:
    t = np.logspace(-2, 2, 50)
    worst = 0.0
    for p in (0.25, 0.5, 1.0):
        q = analytic.coverage_probability(4.0, t, p)
        c = analytic.coverage_probability_alpha4(t, p)
        worst = max(worst, float(np.max(np.abs(q / c - 1.0))))
    return CriterionResult(4, "coverage quadrature vs alpha=4 closed form", worst <= 1e-9, worst, 1e-9)


def coverage_monte_carlo(scale: Scale) -> CriterionResult:
    t = np.array([0.1, 1.0, 10.0])
    worst, parts, ok = 0.0, [], True
    for k, p in enumerate((0.5, 1.0)):
        cfg = ScenarioConfig(p=p, trials=scale.trials, seed=_seed(scale, 5, k))
        curve = estimate_coverage(cfg, t, workers=scale.workers)
        exact = analytic.coverage_probability_alpha4(t, p)
        ratio = np.abs(curve.values - exact) / curve.ci_half_widths
        worst = max(worst, float(ratio.max()))
        ok &= bool(np.all(ratio <= 3.0 * scale.tolerance_factor))
        parts += [f"p={p},T={x:g}:{v:.4f}vs{e:.4f}" for x, v, e in zip(t, curve.values, exact)]
    return CriterionResult(
        5, "typical-UE coverage vs closed form (half-widths)", ok, worst,
        3.0 * scale.tolerance_factor, " ".join(parts),
    )


def scale_invariance(scale: Scale) -> CriterionResult:
    curves = {}
    for k, lam in enumerate((0.5, 1.0, 10.0)):
        cfg = ScenarioConfig(lam=lam, p=0.7, trials=scale.trials, seed=_seed(scale, 6, k))
        curves[lam] = estimate_coverage(cfg, [1.0], workers=scale.workers)
    ok, worst = True, 0.0
    for a, b in itertools.combinations(curves, 2):
        ca, cb = curves[a], curves[b]
        gap = abs(ca.values[0] - cb.values[0])
        allowed = scale.tolerance_factor * (ca.ci_half_widths[0] + cb.ci_half_widths[0])
        worst = max(worst, gap / allowed)
        ok &= gap <= allowed
    detail = " ".join(f"lambda={lam}:{c.values[0]:.4f}+-{c.ci_half_widths[0]:.4f}" for lam, c in curves.items())
    return CriterionResult(6, "coverage independent of density", ok, worst, 1.0, detail)


def _generative_curves(scale: Scale, cache: _Cache):
    if not cache.generative:
        thresholds = 10.0 ** (GRID_DB / 10.0)
        for k, p in enumerate((0.3, 0.7, 1.0)):
            base = ScenarioConfig(p=p, trials=1, seed=_seed(scale, 7, k))
            trials = generative_trials_for(base, 1.1 * scale.ue_samples)
            cfg = ScenarioConfig(p=p, trials=trials, seed=base.seed)
            res = generative_samples(cfg, workers=scale.workers)
            cache.generative[p] = coverage_curve_from_sir(res["sir"], thresholds)
    return cache.generative


def generative_vs_analytic(scale: Scale, cache: _Cache) -> CriterionResult:
    tol = 0.02 * scale.tolerance_factor
    curves = _generative_curves(scale, cache)
    worst, parts, enough = 0.0, [], True
    for p, c in curves.items():
        gap = float(np.max(np.abs(c.values - analytic.coverage_probability(4.0, c.thresholds, p))))
        worst = max(worst, gap)
        enough &= c.n >= scale.ue_samples
        parts.append(f"p={p}:gap={gap:.4f},n={c.n}")
    return CriterionResult(7, "generative model vs analytic coverage", worst <= tol and enough, worst, tol, " ".join(parts))


def monotone_in_p(scale: Scale, cache: _Cache) -> CriterionResult:
    curves = _generative_curves(scale, cache)
    ps = sorted(curves)
    t = curves[ps[0]].thresholds
    an = np.array([analytic.coverage_probability(4.0, t, p) for p in ps])
    gen = np.array([curves[p].values for p in ps])
    analytic_ok = bool(np.all(np.diff(an, axis=0) < 0))
    gen_ok = bool(np.all(np.diff(gen, axis=0) < 0))
    i0 = int(np.argmin(np.abs(GRID_DB)))
    separated = all(
        curves[hi].ci_hi[i0] < curves[lo].ci_lo[i0] for lo, hi in zip(ps[:-1], ps[1:])
    )
    margin = min(curves[lo].ci_lo[i0] - curves[hi].ci_hi[i0] for lo, hi in zip(ps[:-1], ps[1:]))
    return CriterionResult(
        8, "coverage decreasing in p", analytic_ok and gen_ok and separated, margin, 0.0,
        f"analytic={analytic_ok} generative={gen_ok} CI-separated@0dB={separated}",
    )


def two_route_ratio(scale: Scale) -> CriterionResult:
    tol = 0.015 * scale.tolerance_factor
    p = 0.5
    cfg = ScenarioConfig(p=p, trials=scale.trials, seed=_seed(scale, 9))
    geometric = estimate_ratio_distribution(cfg, workers=scale.workers).samples
    oracle = sample_ratio(p, scale.trials, stream(_seed(scale, 9, 1), 0, StreamRole.PATTERN))
    d = ks_two_sample_distance(geometric, oracle)
    return CriterionResult(9, "inverse-transform vs geometric ratio samples", d <= tol, d, tol)


def reproducibility(scale: Scale) -> CriterionResult:
    from condthin.cli import ExperimentSpec, cmd_ratio_cdf

    blobs = []
    with tempfile.TemporaryDirectory() as tmp:
        for workers in (1, 8):
            path = os.path.join(tmp, f"ratio_{workers}.csv")
            spec = ExperimentSpec(
                command="ratio-cdf",
                scenario=ScenarioConfig(trials=scale.repro_trials, seed=_seed(scale, 10)),
                p_list=(0.3, 0.5, 1.0),
                output_path=path,
                workers=workers,
            )
            cmd_ratio_cdf(spec)
            with open(path, "rb") as fh:
                blobs.append(fh.read())
    same = blobs[0] == blobs[1]
    return CriterionResult(
        10, "byte-identical output for 1 and 8 workers", same, float(not same), 0.0,
        f"{len(blobs[0])} bytes",
    )


_PLAN = {
    1: ratio_ks,
    2: ratio_cdf_at_full_retention,
    3: mean_ratio_checks,
    4: coverage_quadrature,
    5: coverage_monte_carlo,
    6: scale_invariance,
    7: generative_vs_analytic,
    8: monotone_in_p,
    9: two_route_ratio,
    10: reproducibility,
}
_NEEDS_CACHE = {7, 8}
CRITERIA = tuple(sorted(_PLAN))


class Runner:
    """Runs criteria one at a time, sharing the generative-model curves."""

    def __init__(self, scale: Scale | None = None):
        self.scale = scale or Scale()
        self._cache = _Cache()

    def run(self, number: int) -> CriterionResult:
        fn = _PLAN[number]
        args = (self.scale, self._cache) if number in _NEEDS_CACHE else (self.scale,)
        start = time.perf_counter()
        res = fn(*args)
        res.seconds = time.perf_counter() - start
        return res


def run_all(scale: Scale | None = None, only=None) -> list[CriterionResult]:
    """Run every criterion (or the numbers in ``only``) in order."""
    runner = Runner(scale)
    return [runner.run(k) for k in (CRITERIA if only is None else sorted(only))]
