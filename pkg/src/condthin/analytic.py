"""Closed-form results for the conditionally thinned PPP model.

Notation: ``p`` is the retention probability applied to every point except
the serving one, ``alpha`` the path-loss exponent and ``threshold`` the
linear SIR threshold T. The distance ratio R is the nearest-interferer
distance over the serving distance.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate

QUAD_TOL = 1e-10
# above this p the mean-ratio expression is evaluated by its series
SERIES_SWITCH = 1.0 - 1e-6


def _check_thinning(p):
    if not (0.0 < p <= 1.0):
        raise ValueError(f"thinning probability must lie in (0, 1], got {p}")


def _check_channel(alpha, threshold):
    if not alpha > 2.0:
        raise ValueError(f"path-loss exponent must exceed 2, got {alpha}")
    if np.any(np.asarray(threshold) <= 0):
        raise ValueError("SIR threshold must be positive")


def ratio_ccdf(r, p: float):
    """P[R > r] = 1 / (1 + p (r^2 - 1)) for r >= 1."""
    _check_thinning(p)
    r = np.asarray(r, dtype=float)
    if np.any(r < 1.0):
        raise ValueError("the distance ratio is at least 1")
    out = 1.0 / (1.0 + p * (r * r - 1.0))
    return out if out.ndim else float(out)


def ratio_cdf(r, p: float):
    """CDF of the distance ratio R, ``1 - 1/(1 + p (r^2 - 1))``.

    Evaluated as ``x / (1 + x)`` with ``x = p (r^2 - 1)`` so small values
    near r = 1 keep full relative precision.
    """
    _check_thinning(p)
    r = np.asarray(r, dtype=float)
    if np.any(r < 1.0):
        raise ValueError("the distance ratio is at least 1")
    x = p * (r * r - 1.0)
    with np.errstate(invalid="ignore"):
        out = np.where(np.isinf(x), 1.0, x / (1.0 + x))
    return out if out.ndim else float(out)


def joint_pdf_r1_r2(r1, r2, lam: float, p: float):
    """Joint density of the serving and nearest-interferer distances.

    Nonzero only on ``r2 >= r1 >= 0``.
    """
    _check_thinning(p)
    if not lam > 0:
        raise ValueError(f"intensity must be positive, got {lam}")
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    if np.any(r1 < 0) or np.any(r2 < 0):
        raise ValueError("distances must be non-negative")
    dens = (
        p * (2.0 * math.pi * lam) ** 2 * r1 * r2
        * np.exp(-lam * math.pi * r1 * r1 * (1.0 - p))
        * np.exp(-p * lam * math.pi * r2 * r2)
    )
    out = np.where(r2 >= r1, dens, 0.0)
    return out if out.ndim else float(out)


def mean_ratio(p: float) -> float:
    """E[R] as a function of the retention probability.

    Uses the identity pi/2 - arctan(sqrt(p/q)) = arctan(sqrt(q/p)) with
    q = 1 - p, so that E[R] = 1 + arctan(y) / (p y) for y = sqrt(q/p). Near
    p = 1 the ratio arctan(y)/y is replaced by its Taylor series, giving the
    limit value 2 exactly at p = 1.
    """
    _check_thinning(p)
    q = 1.0 - p
    if p > SERIES_SWITCH:
        y2 = q / p
        return 1.0 + (1.0 - y2 / 3.0 + y2 * y2 / 5.0) / p
    y = math.sqrt(q / p)
    return 1.0 + math.atan(y) / (p * y)


def _rho_scalar(alpha: float, threshold: float) -> float:
    lower = threshold ** (-2.0 / alpha)
    half = alpha / 2.0

    # u = lower + t / (1 - t) maps [0, 1) onto [lower, inf). The mapped
    # integrand is (1 - t)^(half - 2) * g(t) with g bounded, so the algebraic
    # factor goes to QUADPACK's weighted rule instead of the integrand.
    def g(t):
        s = 1.0 - t
        return 1.0 / (s**half + (lower * s + t) ** half)

    val, _ = integrate.quad(
        g, 0.0, 1.0, weight="alg", wvar=(0.0, half - 2.0),
        epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=500,
    )
    return threshold ** (2.0 / alpha) * val


def coverage_integral_rho(alpha: float, threshold):
    """T^(2/a) * integral_{T^(-2/a)}^inf du / (1 + u^(a/2)).

    Vectorised over ``threshold``; each entry is one adaptive quadrature.
    """
    _check_channel(alpha, threshold)
    t = np.asarray(threshold, dtype=float)
    out = np.array([_rho_scalar(float(alpha), float(x)) for x in t.ravel()]).reshape(t.shape)
    return out if out.ndim else float(out)


def rho_alpha4(threshold):
    """Closed form of the coverage integral for alpha = 4."""
    t = np.asarray(threshold, dtype=float)
    if np.any(t <= 0):
        raise ValueError("SIR threshold must be positive")
    s = np.sqrt(t)
    out = s * (np.pi / 2.0 - np.arctan(1.0 / s))
    return out if out.ndim else float(out)


def _check_coverage_p(p):
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"probability must lie in [0, 1], got {p}")


def coverage_probability(alpha: float, threshold, p: float):
    """P[SIR > T] for a typical UE under conditional thinning (no noise)."""
    _check_coverage_p(p)
    rho = coverage_integral_rho(alpha, threshold)
    return 1.0 / (1.0 + p * rho)


def coverage_probability_alpha4(threshold, p: float):
    """Closed-form coverage at alpha = 4; the oracle for the quadrature path."""
    _check_coverage_p(p)
    return 1.0 / (1.0 + p * rho_alpha4(threshold))
