"""Monte Carlo experiments for the typical-UE and generative models.

Typical-UE model: a PPP is drawn on a disk centred at the origin, the UE at
the origin attaches to its nearest point, every other point is kept with
probability p, and the SIR is formed with unit-mean exponential fading.

Generative model: a PPP is drawn and thinned; each retained BS that lies in
the inner evaluation disk gets ``users_per_cell`` UEs placed uniformly in its
Voronoi cell of the *unthinned* pattern. UEs are served by that BS and see
interference from every other retained BS.

Each trial is a pure function of ``(config, trial_index)``: all randomness
comes from :func:`condthin.rng.stream`, so results do not depend on how
trials are split across worker processes.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from condthin import geometry
from condthin.geometry import Window, retention_mask, sample_ppp
from condthin.rng import StreamRole, stream
from condthin.stats import CoverageCurve, EmpiricalDistribution, wilson_interval

TAIL_FRACTION = 1e-3
MIN_EXPECTED_POINTS = 500
WARN_EXPECTED_POINTS = 50
MAX_DEFAULT_POINTS = 2_000_000
MAX_REGENERATIONS = 100
# per-UE rejection budget; proposals are uniform on the whole window
UE_MAX_ATTEMPTS = geometry.DEFAULT_MAX_ATTEMPTS


class ConfigError(ValueError):
    """Invalid or unusable scenario configuration."""


class TruncationWarning(UserWarning):
    """The window is too small for the interference truncation policy."""


class ModelInvariantError(AssertionError):
    """A structural property of the simulated model was violated."""


def _reference_r1(lam: float) -> float:
    # sqrt(E[R1^2]) for the nearest point of a PPP of intensity lam
    return 1.0 / math.sqrt(math.pi * lam)


def truncation_ratio(lam: float, alpha: float, radius: float) -> float:
    """Mean interference from beyond ``radius`` relative to that between r1 and ``radius``.

    r1 is the root-mean-square serving distance. The factor 2*pi*lam*p/(alpha-2)
    is common to both terms and cancels.
    """
    x = (radius / _reference_r1(lam)) ** (2.0 - alpha)
    if x >= 1.0:
        return math.inf
    return x / (1.0 - x)


def default_window_radius(lam: float, alpha: float) -> float:
    """Smallest radius meeting both the tail bound and the point-count floor."""
    r_tail = _reference_r1(lam) * ((1.0 + TAIL_FRACTION) / TAIL_FRACTION) ** (1.0 / (alpha - 2.0))
    r_tail *= 1.0 + 1e-9
    r_count = math.sqrt(MIN_EXPECTED_POINTS / (math.pi * lam))
    radius = max(r_tail, r_count)
    if lam * math.pi * radius**2 > MAX_DEFAULT_POINTS:
        raise ConfigError(
            f"alpha={alpha} needs about {lam * math.pi * radius**2:.3g} points per trial "
            "to meet the truncation policy; pass window_radius explicitly"
        )
    return radius


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything that determines an experiment.

    ``window_radius=None`` selects :func:`default_window_radius`.
    """

    lam: float = 1.0
    p: float = 1.0
    alpha: float = 4.0
    window_radius: float | None = None
    guard_fraction: float = 0.2
    users_per_cell: int = 1
    seed: int = 0
    trials: int = 10_000

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"p must lie in [0, 1], got {self.p}")
        if not self.alpha > 2.0:
            raise ConfigError(f"alpha must exceed 2, got {self.alpha}")
        if self.window_radius is not None and not self.window_radius > 0:
            raise ConfigError(f"window_radius must be positive, got {self.window_radius}")
        if not 0.0 < self.guard_fraction < 1.0:
            raise ConfigError(f"guard_fraction must lie in (0, 1), got {self.guard_fraction}")
        if int(self.users_per_cell) != self.users_per_cell or self.users_per_cell < 1:
            raise ConfigError("users_per_cell must be a positive integer")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError("trials must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        radius = self.radius
        expected = self.expected_points
        if expected < WARN_EXPECTED_POINTS:
            warnings.warn(
                f"only {expected:.1f} expected points in the window", TruncationWarning, stacklevel=3
            )
        if self.window_radius is not None:
            ratio = truncation_ratio(self.lam, self.alpha, radius)
            if ratio > TAIL_FRACTION or expected < MIN_EXPECTED_POINTS:
                warnings.warn(
                    f"window radius {radius:g} violates the truncation policy "
                    f"(tail ratio {ratio:.3g}, {expected:.0f} expected points)",
                    TruncationWarning,
                    stacklevel=3,
                )

    @property
    def radius(self) -> float:
        if self.window_radius is not None:
            return float(self.window_radius)
        return default_window_radius(self.lam, self.alpha)

    @property
    def expected_points(self) -> float:
        return self.lam * math.pi * self.radius**2

    @property
    def window(self) -> Window:
        return Window.disk(self.radius)

    def resolved(self) -> dict:
        d = asdict(self)
        d["window_radius"] = self.radius
        return d


@dataclass(frozen=True)
class FadingLink:
    """One BS-to-UE link with Rayleigh (exponential power) fading."""

    h: float
    distance: float
    tx_power: float = 1.0

    def __post_init__(self):
        if self.h < 0:
            raise ValueError("fading power must be non-negative")
        if not self.distance > 0:
            raise ValueError("link distance must be positive")

    def received_power(self, alpha: float) -> float:
        return received_power(self.h, self.distance, alpha, self.tx_power)


def received_power(h, distance, alpha: float, tx_power: float = 1.0):
    """P * h * d^(-alpha)."""
    return tx_power * np.asarray(h) * np.asarray(distance, dtype=float) ** (-alpha)


@dataclass(frozen=True)
class TrialOutcome:
    """Serving distance, nearest-interferer distance (None if no interferer) and SIR."""

    r1: float
    r2: float | None
    sir: float
    regenerations: int = 0

    def covered(self, threshold: float) -> bool:
        return self.sir > threshold


def _nonempty_pattern(cfg: ScenarioConfig, window: Window, trial_index: int, attempt: int):
    for a in range(attempt, attempt + MAX_REGENERATIONS + 1):
        pattern = sample_ppp(cfg.lam, window, stream(cfg.seed, trial_index, StreamRole.PATTERN, a))
        if len(pattern):
            return pattern, a
    raise ConfigError(
        f"trial {trial_index}: window empty after {MAX_REGENERATIONS} regenerations"
    )


def _typical_trial(cfg: ScenarioConfig, window: Window, trial_index: int, attempt: int = 0):
    """Returns (r1, r2 or nan, sir, attempt actually used)."""
    pattern, attempt = _nonempty_pattern(cfg, window, trial_index, attempt)
    pts = pattern.points
    d2 = geometry._squared_distances(pts, 0.0, 0.0)
    serving = int(np.argmin(d2))
    # same draws as geometry.conditional_thin, kept as a mask to avoid copying
    mask = retention_mask(len(pts), cfg.p, stream(cfg.seed, trial_index, StreamRole.THINNING, attempt), serving)
    mask[serving] = False
    h = stream(cfg.seed, trial_index, StreamRole.FADING, attempt).exponential(size=len(pts))
    half = cfg.alpha / 2.0
    signal = h[serving] * d2[serving] ** -half
    r1 = math.sqrt(d2[serving])
    if not mask.any():
        return r1, math.nan, math.inf, attempt
    di = d2[mask]
    interference = float(np.dot(h[mask], di**-half))
    sir = signal / interference if interference > 0 else math.inf
    return r1, math.sqrt(di.min()), sir, attempt


def run_typical_ue_trial(cfg: ScenarioConfig, trial_index: int) -> TrialOutcome:
    """One conditional-thinning trial for the UE at the origin."""
    r1, r2, sir, attempt = _typical_trial(cfg, cfg.window, trial_index)
    return TrialOutcome(r1, None if math.isnan(r2) else r2, sir, attempt)


def _typical_chunk(cfg: ScenarioConfig, start: int, stop: int, need_interferer: bool):
    window = cfg.window
    n = stop - start
    r1 = np.empty(n)
    r2 = np.empty(n)
    sir = np.empty(n)
    regenerations = 0
    redraws = 0
    for k, t in enumerate(range(start, stop)):
        a_next = 0
        trial_redraws = 0
        while True:
            r1[k], r2[k], sir[k], a = _typical_trial(cfg, window, t, a_next)
            regenerations += a - a_next
            if not (need_interferer and math.isnan(r2[k])):
                break
            trial_redraws += 1
            if trial_redraws > MAX_REGENERATIONS:
                raise ConfigError(f"trial {t}: no surviving interferer in {trial_redraws} draws")
            a_next = a + 1
        redraws += trial_redraws
    return r1, r2, sir, regenerations, redraws


def _chunks(n: int, workers: int):
    pieces = max(1, min(n, workers * 4))
    edges = np.linspace(0, n, pieces + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _run_parallel(func, cfg, n: int, workers: int, *extra):
    """Apply ``func(cfg, start, stop, *extra)`` over trial ranges; results in trial order."""
    spans = _chunks(n, workers)
    if workers <= 1:
        return [func(cfg, a, b, *extra) for a, b in spans]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(func, cfg, a, b, *extra) for a, b in spans]
        return [f.result() for f in futures]


def typical_samples(cfg: ScenarioConfig, *, need_interferer: bool = False, workers: int = 1) -> dict:
    """Run ``cfg.trials`` typical-UE trials; returns arrays and counters."""
    parts = _run_parallel(_typical_chunk, cfg, cfg.trials, workers, need_interferer)
    return {
        "r1": np.concatenate([p[0] for p in parts]),
        "r2": np.concatenate([p[1] for p in parts]),
        "sir": np.concatenate([p[2] for p in parts]),
        "regenerations": sum(p[3] for p in parts),
        "redraws": sum(p[4] for p in parts),
    }


def estimate_ratio_distribution(cfg: ScenarioConfig, workers: int = 1) -> EmpiricalDistribution:
    """Empirical distribution of R = r2 / r1 over ``cfg.trials`` trials.

    Trials without a surviving interferer are redrawn from fresh streams;
    the count is recorded as ``metadata["redraw_count"]``.
    """
    if cfg.p <= 0:
        raise ConfigError("the distance ratio is undefined for p = 0")
    res = typical_samples(cfg, need_interferer=True, workers=workers)
    return EmpiricalDistribution(
        res["r2"] / res["r1"],
        {
            "redraw_count": res["redraws"],
            "regenerations": res["regenerations"],
            "source": "conditional-thinning",
        },
    )


def _check_thresholds(thresholds) -> np.ndarray:
    t = np.asarray(thresholds, dtype=float).ravel()
    if t.size == 0:
        raise ConfigError("threshold list is empty")
    if np.any(t <= 0):
        raise ConfigError("thresholds must be positive")
    if np.any(np.diff(t) <= 0):
        raise ConfigError("thresholds must be strictly ascending")
    return t


def coverage_curve_from_sir(sir, thresholds, confidence: float = 0.95) -> CoverageCurve:
    """Fraction of SIR samples strictly above each threshold, with Wilson bounds."""
    t = _check_thresholds(thresholds)
    s = np.sort(np.asarray(sir, dtype=float))
    n = s.size
    if n == 0:
        raise ConfigError("no SIR samples")
    successes = n - np.searchsorted(s, t, side="right")
    lo, hi = wilson_interval(successes, n, confidence)
    return CoverageCurve(
        thresholds=t,
        values=successes / n,
        ci_half_widths=(hi - lo) / 2.0,
        n=n,
        kind="empirical",
        ci_lo=lo,
        ci_hi=hi,
    )


def estimate_coverage(cfg: ScenarioConfig, thresholds, workers: int = 1) -> CoverageCurve:
    """Empirical P[SIR > T] of the typical UE; one SIR draw per trial serves every T."""
    _check_thresholds(thresholds)
    res = typical_samples(cfg, workers=workers)
    return coverage_curve_from_sir(res["sir"], thresholds)


def _generative_trial(cfg: ScenarioConfig, window: Window, trial_index: int):
    """Returns (r1, r2, sir) arrays, one entry per evaluated UE."""
    pattern, attempt = _nonempty_pattern(cfg, window, trial_index, 0)
    n = len(pattern)
    keep = retention_mask(n, cfg.p, stream(cfg.seed, trial_index, StreamRole.THINNING, attempt))
    inner = (1.0 - cfg.guard_fraction) * window.size
    d2c = geometry._squared_distances(pattern.points, window.center.x, window.center.y)
    evaluated = np.flatnonzero(keep & (d2c <= inner * inner))
    if evaluated.size == 0:
        empty = np.empty(0)
        return empty, empty, empty
    ue, owner = geometry.sample_uniform_in_cells(
        pattern,
        evaluated,
        cfg.users_per_cell,
        stream(cfg.seed, trial_index, StreamRole.UE_PLACEMENT, attempt),
        max_attempts=UE_MAX_ATTEMPTS,
    )
    kept = np.flatnonzero(keep)
    bs = pattern.subset(kept)
    nearest_bs = kept[geometry.cell_owners(bs, ue)]
    bad = np.flatnonzero(nearest_bs != owner)
    if bad.size:
        raise ModelInvariantError(
            f"trial {trial_index}: {bad.size} UE(s) nearer to another retained BS than to "
            f"their own (first UE {int(bad[0])}, cell {int(owner[bad[0]])})"
        )
    pos = np.searchsorted(kept, owner)
    rows = np.arange(len(ue))
    d2 = geometry._squared_distances(bs.points[None, :, :], ue[:, 0:1], ue[:, 1:2])
    h = stream(cfg.seed, trial_index, StreamRole.FADING, attempt).exponential(size=d2.shape)
    power = h * d2 ** (-cfg.alpha / 2.0)
    signal = power[rows, pos].copy()
    r1 = np.sqrt(d2[rows, pos])
    power[rows, pos] = 0.0
    interference = power.sum(axis=1)
    with np.errstate(divide="ignore"):
        sir = np.where(interference > 0, signal / interference, np.inf)
    if len(kept) > 1:
        d2[rows, pos] = np.inf
        r2 = np.sqrt(d2.min(axis=1))
    else:
        r2 = np.full(len(ue), np.nan)
    return r1, r2, sir


def run_generative_trial(cfg: ScenarioConfig, trial_index: int) -> list[TrialOutcome]:
    """All evaluated UEs of one generative-model realization."""
    r1, r2, sir = _generative_trial(cfg, cfg.window, trial_index)
    return [
        TrialOutcome(float(a), None if math.isnan(b) else float(b), float(c))
        for a, b, c in zip(r1, r2, sir)
    ]


def _generative_chunk(cfg: ScenarioConfig, start: int, stop: int):
    window = cfg.window
    out = [_generative_trial(cfg, window, t) for t in range(start, stop)]
    return tuple(np.concatenate([o[i] for o in out]) for i in range(3))


def generative_samples(cfg: ScenarioConfig, workers: int = 1) -> dict:
    parts = _run_parallel(_generative_chunk, cfg, cfg.trials, workers)
    return {k: np.concatenate([p[i] for p in parts]) for i, k in enumerate(("r1", "r2", "sir"))}


def estimate_generative_coverage(cfg: ScenarioConfig, thresholds, workers: int = 1) -> CoverageCurve:
    """Coverage averaged over every evaluated UE of ``cfg.trials`` realizations.

    Every retained evaluated cell holds the same number of UEs, so cells are
    weighted equally. The Wilson bounds treat UEs as independent, which
    understates the spread somewhat: UEs of one realization share a pattern.
    """
    _check_thresholds(thresholds)
    res = generative_samples(cfg, workers)
    return coverage_curve_from_sir(res["sir"], thresholds)


def generative_trials_for(cfg: ScenarioConfig, ue_samples: int) -> int:
    """Trials needed for about ``ue_samples`` evaluated UEs (expected count)."""
    per_trial = cfg.expected_points * cfg.p * (1.0 - cfg.guard_fraction) ** 2 * cfg.users_per_cell
    if per_trial <= 0:
        raise ConfigError("the generative model evaluates no UEs at p = 0")
    return max(1, math.ceil(ue_samples / per_trial))
