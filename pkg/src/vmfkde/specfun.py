"""Exponentially scaled Bessel functions and vMF normalizing constants.

Everything is computed in log form so that nothing overflows for large
concentrations. The order ``nu`` must be an integer or a half-integer, which
covers every order that appears for integer sphere dimensions.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

X_SERIES = 30.0
X_SWITCH = 1.0e4
MAX_ORDER = 1000.0
LOG_2PI = float(np.log(2.0 * np.pi))

_EPS = 1e-17
_MAX_TERMS = 500


def _check_order(nu: float) -> float:
    nu = float(nu)
    if not np.isfinite(nu) or nu < 0:
        raise ValueError(f"Bessel order must be >= 0, got {nu}")
    if nu > MAX_ORDER:
        raise ValueError(f"Bessel order {nu} exceeds the supported cap {MAX_ORDER}")
    if abs(2.0 * nu - round(2.0 * nu)) > 1e-12:
        raise ValueError(f"only integer or half-integer orders are supported, got {nu}")
    return nu


def _as_nonneg(x, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)) or np.any(x < 0):
        raise ValueError(f"{name} must be >= 0")
    return x


def _log_series_sum(nu: float, x: np.ndarray) -> np.ndarray:
    """log of sum_k (x^2/4)^k Gamma(nu+1) / (k! Gamma(nu+k+1)); equals 0 at x=0."""
    q = 0.25 * x * x
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, _MAX_TERMS):
        term = term * q / (k * (k + nu))
        total += term
        if np.all(term <= _EPS * total):
            break
    return np.log(total)


def _log_hankel(nu: float, x: np.ndarray) -> np.ndarray:
    """Large-argument expansion of log(e^{-x} I_nu(x)), summed to its smallest term.

    The first correction is -(4 nu^2 - 1)/(8x); for half-integer orders the sum
    terminates and is exact up to an e^{-2x} term.
    """
    mu = 4.0 * nu * nu
    term = np.ones_like(x)
    total = np.ones_like(x)
    active = np.ones(x.shape, dtype=bool)
    for k in range(1, _MAX_TERMS):
        new = term * (-(mu - (2 * k - 1) ** 2) / (8.0 * k * x))
        active &= np.abs(new) <= np.abs(term)
        total = np.where(active, total + new, total)
        term = new
        active &= np.abs(new) > _EPS * np.abs(total)
        if not active.any():
            break
    return np.log(total) - 0.5 * np.log(2.0 * np.pi * x)


def _log_ratio_method(nu: float, x: np.ndarray) -> np.ndarray:
    """Anchor at order 0 or 1/2 and multiply ratios I_m/I_{m-1} down from nu.

    The top ratio comes from the continued fraction (modified Lentz); the rest
    follow from the stable backward recurrence R_m = 1/(2m/x + R_{m+1}).
    """
    nu0 = nu - np.floor(nu)
    out = _log_hankel(nu0, x)
    if nu == nu0:
        return out
    tiny = 1e-300
    f = 2.0 * nu / x
    c = f.copy()
    dd = np.zeros_like(x)
    for k in range(1, 200000):
        b = 2.0 * (nu + k) / x
        dd = b + dd
        dd = np.where(np.abs(dd) < tiny, tiny, dd)
        dd = 1.0 / dd
        c = b + 1.0 / c
        c = np.where(np.abs(c) < tiny, tiny, c)
        delta = c * dd
        f = f * delta
        if np.all(np.abs(delta - 1.0) < 1e-16):
            break
    r = 1.0 / f
    m = nu
    while m > nu0 + 0.5:
        out = out + np.log(r)
        m -= 1.0
        r = 1.0 / (2.0 * m / x + r)
    return out


def log_scaled_bessel_i(nu: float, x):
    """log(e^{-x} I_nu(x)) for x >= 0 and integer or half-integer nu.

    Returns -inf at x=0 when nu > 0 (since I_nu(0) = 0).
    """
    nu = _check_order(nu)
    x = _as_nonneg(x)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)

    zero = x == 0
    out[zero] = 0.0 if nu == 0 else -np.inf

    small = (~zero) & (x <= X_SERIES)
    if small.any():
        xs = x[small]
        out[small] = (nu * np.log(0.5 * xs) - gammaln(nu + 1.0)
                      + _log_series_sum(nu, xs) - xs)

    big = x > X_SERIES
    hank = big & (x >= 0.5 * nu * nu)
    if hank.any():
        out[hank] = _log_hankel(nu, x[hank])
    rat = big & ~hank
    if rat.any():
        out[rat] = _log_ratio_method(nu, x[rat])
    return float(out[0]) if scalar else out


def bessel_ratio(nu: float, x):
    """I_{nu+1}(x) / I_nu(x), computed from scaled logs (0 at x=0)."""
    x = _as_nonneg(x)
    with np.errstate(invalid="ignore"):
        r = np.exp(log_scaled_bessel_i(nu + 1.0, x) - log_scaled_bessel_i(nu, x))
    r = np.where(np.asarray(x) == 0, 0.0, r)
    return float(r) if np.ndim(r) == 0 else r


def mean_resultant_length(d: int, kappa):
    """A_d(kappa) = I_{(d+1)/2}(kappa)/I_{(d-1)/2}(kappa), the vMF mean resultant length."""
    return bessel_ratio(0.5 * (_check_dim(d) - 1), kappa)


def _check_dim(d) -> int:
    if int(d) != d or d < 1:
        raise ValueError(f"sphere dimension must be an integer >= 1, got {d}")
    return int(d)


def log_surface_area(d: int) -> float:
    d = _check_dim(d) if d >= 1 else int(d)
    return float(np.log(2.0) + 0.5 * (d + 1) * np.log(np.pi) - gammaln(0.5 * (d + 1)))


def surface_area(d: int) -> float:
    """omega_d = 2 pi^{(d+1)/2} / Gamma((d+1)/2); d=0 gives 2."""
    if int(d) != d or d < 0:
        raise ValueError(f"invalid dimension {d}")
    return float(np.exp(np.log(2.0) + 0.5 * (d + 1) * np.log(np.pi) - gammaln(0.5 * (d + 1))))


def log_c_vmf(d: int, kappa):
    """log of the vMF normalizing constant c_d(kappa) on S^d.

    At kappa=0 this is -log omega_d. Small arguments go through the normalized
    power series so the kappa^{nu} / I_nu(kappa) cancellation is done analytically.
    """
    d = _check_dim(d)
    kappa = _as_nonneg(kappa, "kappa")
    nu = 0.5 * (d - 1)
    _check_order(nu)
    scalar = kappa.ndim == 0
    k = np.atleast_1d(kappa)
    out = np.empty_like(k)
    small = k <= X_SERIES
    if small.any():
        out[small] = (nu * np.log(2.0) + gammaln(nu + 1.0) - 0.5 * (d + 1) * LOG_2PI
                      - _log_series_sum(nu, k[small]))
    big = ~small
    if big.any():
        kb = k[big]
        out[big] = (nu * np.log(kb) - 0.5 * (d + 1) * LOG_2PI - kb
                    - log_scaled_bessel_i(nu, kb))
    return float(out[0]) if scalar else out


def log_c_vmf_split(d: int, kappa):
    """Return (A, B) with log c_d(kappa) = A + B*kappa and B = -1."""
    kappa_arr = _as_nonneg(kappa, "kappa")
    a = log_c_vmf(d, kappa_arr) + kappa_arr
    if np.ndim(a) == 0:
        a = float(a)
    return a, -1.0
