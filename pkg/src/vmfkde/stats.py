"""Trimmed Monte Carlo summaries, log-log rate fits and the Lilliefors test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps


@dataclass(frozen=True)
class TrimmedSummary:
    mean: float
    rmse: float
    median: float
    trim_fraction: float
    n_kept: int


def trim(values, fraction: float = 0.05, symmetric: bool = False) -> np.ndarray:
    """Drop the floor(fraction * M) most extreme values.

    By default "extreme" means largest |value - median|; ``symmetric=True``
    instead removes half of them from each tail.
    """
    v = np.asarray(values, dtype=float).ravel()
    v = v[~np.isnan(v)]  # infinities stay and rank as most extreme
    if not 0.0 <= fraction < 1.0:
        raise ValueError("trim fraction must be in [0, 1)")
    k = int(math.floor(fraction * v.size + 1e-9))
    if k == 0:
        return v
    if symmetric:
        lo = k // 2
        return np.sort(v)[lo:v.size - (k - lo)]
    order = np.argsort(np.abs(v - np.median(v)), kind="stable")
    return v[np.sort(order[:v.size - k])]


def trimmed_summary(values, trim_fraction: float = 0.05, symmetric: bool = False) -> TrimmedSummary:
    kept = trim(values, trim_fraction, symmetric)
    if kept.size == 0:
        return TrimmedSummary(math.nan, math.nan, math.nan, trim_fraction, 0)
    return TrimmedSummary(float(kept.mean()), float(np.sqrt(np.mean(kept ** 2))),
                          float(np.median(kept)), trim_fraction, int(kept.size))


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    slope_se: float
    p_value_onesided: float
    n_points: int
    degenerate: bool = False


def loglog_fit(n, rmse, n_min: float = 0, beta_star: float | None = None) -> RateFit:
    """OLS of log2(rmse) on log2(n) over n >= n_min.

    The p-value tests H0: slope = beta_star against slope < beta_star. With two
    points the standard error is undefined and the fit is flagged degenerate.
    """
    n = np.asarray(n, dtype=float)
    y = np.asarray(rmse, dtype=float)
    keep = (n >= n_min) & np.isfinite(y) & (y > 0)
    x, y = np.log2(n[keep]), np.log2(y[keep])
    m = x.size
    if m < 2 or np.ptp(x) == 0:
        raise ValueError("need at least two distinct sample sizes for a rate fit")
    res = sps.linregress(x, y)
    r2 = float(min(max(res.rvalue ** 2, 0.0), 1.0))
    if m == 2:
        return RateFit(float(res.slope), float(res.intercept), 1.0, math.nan, math.nan, m, True)
    se = float(res.stderr)
    p = math.nan
    if beta_star is not None and se > 0:
        p = float(sps.t.cdf((res.slope - beta_star) / se, m - 2))
    elif beta_star is not None:
        p = 0.0 if res.slope < beta_star else 1.0
    return RateFit(float(res.slope), float(res.intercept), r2, se, p, m)


def _ks_normal(x: np.ndarray) -> np.ndarray:
    """KS distance to the fitted normal, row-wise for a 2-D array."""
    x = np.sort(np.atleast_2d(x), axis=1)
    m = x.shape[1]
    mu = x.mean(axis=1, keepdims=True)
    sd = x.std(axis=1, ddof=1, keepdims=True)
    F = sps.norm.cdf((x - mu) / sd)
    i = np.arange(1, m + 1)
    return np.maximum((i / m - F).max(axis=1), (F - (i - 1) / m).max(axis=1))


def lilliefors(values, n_boot: int = 2000, rng: np.random.Generator | None = None,
               chunk: int = 500) -> tuple[float, float]:
    """Lilliefors normality test with a parametric-bootstrap p-value.

    The KS statistic is invariant to location and scale, so resamples are drawn
    from N(0, 1) and standardized with their own estimates.
    """
    x = np.asarray(values, dtype=float).ravel()
    x = x[np.isfinite(x)]
    if x.size < 4:
        raise ValueError("Lilliefors test needs at least 4 finite values")
    if np.ptp(x) == 0:
        return 1.0, 0.0
    rng = np.random.default_rng(0) if rng is None else rng
    stat = float(_ks_normal(x)[0])
    hits = 0
    done = 0
    while done < n_boot:
        b = min(chunk, n_boot - done)
        hits += int(np.sum(_ks_normal(rng.standard_normal((b, x.size))) >= stat))
        done += b
    return stat, (hits + 1) / (n_boot + 1)
