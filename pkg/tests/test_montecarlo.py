import math
import warnings

import numpy as np
import pytest

from condthin import geometry, montecarlo
from condthin.analytic import coverage_probability_alpha4, ratio_cdf
from condthin.geometry import conditional_thin, nearest_two, sample_ppp
from condthin.montecarlo import (
    ConfigError,
    FadingLink,
    ModelInvariantError,
    ScenarioConfig,
    TrialOutcome,
    TruncationWarning,
    default_window_radius,
    estimate_coverage,
    estimate_generative_coverage,
    estimate_ratio_distribution,
    generative_samples,
    generative_trials_for,
    received_power,
    run_generative_trial,
    run_typical_ue_trial,
    truncation_ratio,
    typical_samples,
)
from condthin.rng import StreamRole, stream
from condthin.stats import EmpiricalDistribution, ks_distance

SMALL = dict(window_radius=15.0)  # ~700 points at lam=1; slightly over the tail bound

pytestmark = pytest.mark.filterwarnings("ignore::condthin.montecarlo.TruncationWarning")


def small(**kw):
    return ScenarioConfig(**{**SMALL, **kw})


# --- configuration and window policy ----------------------------------------


@pytest.mark.parametrize(
    "kw",
    [dict(lam=0), dict(lam=-1), dict(p=-0.1), dict(p=1.5), dict(alpha=2.0), dict(window_radius=0.0),
     dict(guard_fraction=0.0), dict(guard_fraction=1.0), dict(users_per_cell=0), dict(trials=0),
     dict(seed=-1), dict(seed=2**64)],
)
def test_config_rejects_invalid(kw):
    with pytest.raises(ConfigError):
        ScenarioConfig(**kw)


def test_default_window_meets_policy():
    for lam in (0.1, 1.0, 10.0):
        for alpha in (3.0, 4.0, 5.0):
            r = default_window_radius(lam, alpha)
            assert truncation_ratio(lam, alpha, r) <= montecarlo.TAIL_FRACTION
            assert lam * math.pi * r * r >= montecarlo.MIN_EXPECTED_POINTS * (1 - 1e-12)


def test_default_window_alpha4_count():
    # tail ratio 1/(lam*pi*R^2 - 1) <= 1e-3
    assert ScenarioConfig().expected_points == pytest.approx(1001.0, rel=1e-6)


def test_default_window_scales_with_density():
    assert ScenarioConfig(lam=4.0).radius == pytest.approx(ScenarioConfig(lam=1.0).radius / 2, rel=1e-12)


def test_alpha_near_two_needs_explicit_radius():
    with pytest.raises(ConfigError):
        ScenarioConfig(alpha=2.2)


def test_small_window_warns():
    with pytest.warns(TruncationWarning):
        ScenarioConfig(window_radius=5.0)
    with pytest.warns(TruncationWarning):
        ScenarioConfig(window_radius=3.0)  # under 50 expected points


def test_default_window_does_not_warn():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ScenarioConfig(lam=3.0, alpha=3.5)


def test_resolved_reports_radius():
    d = ScenarioConfig().resolved()
    assert d["window_radius"] == pytest.approx(ScenarioConfig().radius)
    assert d["lam"] == 1.0


# --- links and outcomes -----------------------------------------------------


def test_received_power():
    assert received_power(2.0, 2.0, 4.0) == pytest.approx(2 / 16)
    assert FadingLink(1.0, 3.0, 2.0).received_power(2.0) == pytest.approx(2 / 9)
    with pytest.raises(ValueError):
        FadingLink(-1.0, 1.0)
    with pytest.raises(ValueError):
        FadingLink(1.0, 0.0)


def test_outcome_coverage_is_strict():
    o = TrialOutcome(1.0, 2.0, 1.0)
    assert not o.covered(1.0)
    assert o.covered(0.999)


# --- typical UE -------------------------------------------------------------


@pytest.mark.parametrize("p", [0.3, 1.0])
def test_typical_trial_matches_oracle(p):
    """Rebuild each trial from the same streams with the geometry primitives."""
    cfg = small(p=p, seed=11)
    for t in range(20):
        out = run_typical_ue_trial(cfg, t)
        pattern = sample_ppp(cfg.lam, cfg.window, stream(cfg.seed, t, StreamRole.PATTERN))
        i1, d1, _, _ = nearest_two(pattern, (0.0, 0.0))
        thinned = conditional_thin(pattern, i1, p, stream(cfg.seed, t, StreamRole.THINNING))
        h = stream(cfg.seed, t, StreamRole.FADING).exponential(size=len(pattern))
        kept = np.flatnonzero((pattern.points[:, None, :] == thinned.points[None]).all(-1).any(1))
        others = kept[kept != i1]
        d = np.hypot(*pattern.points[others].T)
        sir = h[i1] * d1**-4 / np.sum(h[others] * d**-4)
        assert out.r1 == pytest.approx(d1, rel=1e-12)
        assert out.r2 == pytest.approx(d.min(), rel=1e-12)
        assert out.sir == pytest.approx(sir, rel=1e-10)
        if p == 1.0:
            assert len(thinned) == len(pattern)


def test_p_zero_has_no_interference():
    out = run_typical_ue_trial(small(p=0.0), 0)
    assert out.r2 is None and out.sir == math.inf
    curve = estimate_coverage(small(p=0.0, trials=50), [0.1, 1.0, 100.0])
    assert np.all(curve.values == 1.0)


def test_p_zero_ratio_rejected():
    with pytest.raises(ConfigError):
        estimate_ratio_distribution(small(p=0.0, trials=10))


def test_ratio_samples_at_least_one_and_redraws_recorded():
    with pytest.warns(TruncationWarning):
        cfg = ScenarioConfig(p=0.01, window_radius=6.0, trials=300, seed=3)
    dist = estimate_ratio_distribution(cfg)
    assert np.all(dist.samples >= 1.0)
    assert dist.n == 300
    # ~113 points at p=0.01: about a third of draws keep no interferer
    assert dist.metadata["redraw_count"] > 0
    assert dist.metadata["source"] == "conditional-thinning"


def test_serving_distance_law():
    # lam*pi*r1^2 is unit exponential
    res = typical_samples(small(trials=4000, seed=5))
    x = math.pi * res["r1"] ** 2
    assert abs(x.mean() - 1.0) < 4 / math.sqrt(4000)


def test_ratio_distribution_moderate_size():
    n = 4000
    dist = estimate_ratio_distribution(ScenarioConfig(p=0.5, trials=n, seed=7))
    assert ks_distance(dist, lambda r: ratio_cdf(r, 0.5)) < 1.95 / math.sqrt(n)


def test_coverage_moderate_size():
    n = 4000
    t = np.array([0.1, 1.0, 10.0])
    curve = estimate_coverage(ScenarioConfig(p=1.0, trials=n, seed=8), t)
    assert np.all(np.abs(curve.values - coverage_probability_alpha4(t, 1.0)) <= 4 * curve.ci_half_widths)
    assert curve.n == n and curve.kind == "empirical"


def test_coverage_rejects_bad_thresholds():
    cfg = small(trials=5)
    for bad in ([], [0.0, 1.0], [2.0, 1.0]):
        with pytest.raises(ConfigError):
            estimate_coverage(cfg, bad)


def test_results_independent_of_worker_count():
    cfg = small(p=0.5, trials=40, seed=9)
    a = typical_samples(cfg, workers=1)
    b = typical_samples(cfg, workers=3)
    for k in ("r1", "r2", "sir"):
        assert np.array_equal(a[k], b[k], equal_nan=True)


def test_seed_changes_results():
    a = typical_samples(small(trials=5, seed=1))["r1"]
    b = typical_samples(small(trials=5, seed=2))["r1"]
    assert not np.array_equal(a, b)


# --- generative model -------------------------------------------------------


def test_generative_ues_served_by_nearest_retained_bs():
    cfg = small(p=0.5, seed=12, users_per_cell=2)
    outs = run_generative_trial(cfg, 0)
    assert len(outs) > 0 and len(outs) % 2 == 0
    for o in outs:
        assert o.r2 is not None and o.r2 >= o.r1
        assert o.sir > 0


def test_generative_ue_count_per_trial():
    cfg = small(p=0.7, seed=13, users_per_cell=3)
    pattern = sample_ppp(cfg.lam, cfg.window, stream(cfg.seed, 0, StreamRole.PATTERN))
    keep = geometry.retention_mask(len(pattern), cfg.p, stream(cfg.seed, 0, StreamRole.THINNING))
    inner = (1 - cfg.guard_fraction) * cfg.radius
    evaluated = keep & (np.hypot(*pattern.points.T) <= inner)
    assert len(run_generative_trial(cfg, 0)) == 3 * evaluated.sum()


def test_generative_workers_identical():
    cfg = small(p=0.5, trials=6, seed=14)
    a, b = generative_samples(cfg, 1), generative_samples(cfg, 2)
    for k in a:
        assert np.array_equal(a[k], b[k], equal_nan=True)


def test_generative_p_one_matches_typical_coverage():
    # with every BS kept, a uniform UE in a cell is a uniform point of the plane
    t = np.array([1.0])
    base = ScenarioConfig(p=1.0, trials=1, seed=15)
    cfg = ScenarioConfig(p=1.0, trials=generative_trials_for(base, 6000), seed=15)
    curve = estimate_generative_coverage(cfg, t)
    assert curve.n >= 5000
    assert abs(curve.values[0] - coverage_probability_alpha4(1.0, 1.0)) <= 4 * curve.ci_half_widths[0]


def test_generative_serving_violation_detected(monkeypatch):
    real = geometry.sample_uniform_in_cells

    def misplaced(pattern, cells, per_cell, rng, max_attempts):
        ue, owner = real(pattern, cells, per_cell, rng, max_attempts=max_attempts)
        # claim the first UE belongs to a different evaluated cell
        owner = owner.copy()
        owner[0] = cells[1] if owner[0] == cells[0] else cells[0]
        return ue, owner

    monkeypatch.setattr(geometry, "sample_uniform_in_cells", misplaced)
    with pytest.raises(ModelInvariantError):
        run_generative_trial(small(p=0.5, seed=16), 0)


def test_generative_trials_for():
    cfg = ScenarioConfig(p=0.5, trials=1)
    n = generative_trials_for(cfg, 10_000)
    per = cfg.expected_points * 0.5 * 0.64
    assert (n - 1) * per < 10_000 <= n * per
    with pytest.raises(ConfigError):
        generative_trials_for(ScenarioConfig(p=0.0), 10)
