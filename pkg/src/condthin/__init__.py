"""Conditional thinning of Poisson cellular networks: closed forms and Monte Carlo."""

__version__ = "0.1.0"

from condthin.analytic import (
    coverage_integral_rho,
    coverage_probability,
    coverage_probability_alpha4,
    joint_pdf_r1_r2,
    mean_ratio,
    ratio_ccdf,
    ratio_cdf,
)
from condthin.geometry import (
    InsufficientPointsError,
    Point2,
    PointPattern,
    SamplingError,
    Window,
    cell_owner,
    conditional_thin,
    nearest_two,
    sample_ppp,
    sample_uniform_in_cell,
    thin,
)
from condthin.montecarlo import (
    ConfigError,
    FadingLink,
    ScenarioConfig,
    TrialOutcome,
    estimate_coverage,
    estimate_generative_coverage,
    estimate_ratio_distribution,
    run_generative_trial,
    run_typical_ue_trial,
)
from condthin.stats import (
    CoverageCurve,
    EmpiricalDistribution,
    ecdf_at,
    inverse_transform_ratio_sample,
    ks_distance,
    ks_two_sample_distance,
    wilson_interval,
)
