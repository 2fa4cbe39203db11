"""von Mises-Fisher distributions and mixtures.

Densities are evaluated in log form, log f_j(x) = A(kappa_j) + kappa_j (x'mu_j - 1)
with A(kappa) = log c_d(kappa) + kappa, so exponents are never positive.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp, ndtri
from scipy.stats import qmc

from .specfun import (log_c_vmf, log_scaled_bessel_i, mean_resultant_length,
                      surface_area)
from .sphere import DataError, SphericalSample, as_sample, quadrature, tangent_frame

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

KAPPA_MAX = 1e8


@dataclass(frozen=True)
class VmfComponent:
    mu: np.ndarray
    kappa: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).ravel()
        nrm = np.linalg.norm(mu)
        if mu.size < 2 or nrm == 0 or not np.isfinite(nrm):
            raise ValueError("mu must be a non-zero vector with at least 2 entries")
        if not (self.kappa >= 0 and np.isfinite(self.kappa)):
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa}")
        object.__setattr__(self, "mu", mu / nrm)
        object.__setattr__(self, "kappa", float(self.kappa))

    @property
    def d(self) -> int:
        return self.mu.size - 1


@dataclass(frozen=True)
class VmfMixture:
    """r-component mixture; ``mus`` is (r, d+1), ``kappas`` and ``weights`` are (r,)."""

    mus: np.ndarray
    kappas: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        mus = np.atleast_2d(np.asarray(self.mus, dtype=float))
        kap = np.atleast_1d(np.asarray(self.kappas, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        r = mus.shape[0]
        if kap.shape != (r,) or w.shape != (r,):
            raise ValueError("mus, kappas and weights must describe the same number of components")
        if mus.shape[1] < 2:
            raise ValueError("mean directions need at least 2 coordinates")
        nrm = np.linalg.norm(mus, axis=1, keepdims=True)
        if np.any(nrm == 0) or not np.all(np.isfinite(nrm)):
            raise ValueError("mean directions must be non-zero and finite")
        if np.any(~np.isfinite(kap)) or np.any(kap < 0):
            raise ValueError("concentrations must be finite and >= 0")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be >= 0 and sum to 1")
        object.__setattr__(self, "mus", mus / nrm)
        object.__setattr__(self, "kappas", kap)
        object.__setattr__(self, "weights", w)

    @classmethod
    def single(cls, mu, kappa: float) -> "VmfMixture":
        return cls(np.atleast_2d(mu), [kappa], [1.0])

    @classmethod
    def from_components(cls, comps, weights) -> "VmfMixture":
        return cls(np.array([c.mu for c in comps]), [c.kappa for c in comps], weights)

    @property
    def d(self) -> int:
        return self.mus.shape[1] - 1

    @property
    def r(self) -> int:
        return self.mus.shape[0]

    @property
    def components(self) -> list[VmfComponent]:
        return [VmfComponent(m, k) for m, k in zip(self.mus, self.kappas)]

    def log_c(self) -> np.ndarray:
        return np.array([log_c_vmf(self.d, k) for k in self.kappas])


@dataclass
class FitReport:
    mixture: VmfMixture
    loglik: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)


def _points(x) -> np.ndarray:
    if isinstance(x, SphericalSample):
        return x.points
    return np.atleast_2d(np.asarray(x, dtype=float))


def component_log_densities(mix: VmfMixture, x) -> np.ndarray:
    """(m, r) array of log f_j(x_i), without mixture weights."""
    x = _points(x)
    t = x @ mix.mus.T
    a = mix.log_c() + mix.kappas
    return a[None, :] + mix.kappas[None, :] * (t - 1.0)


def log_density(mix: VmfMixture, x):
    """log sum_j p_j f_j(x) for one point (returns float) or many (returns array)."""
    single = np.ndim(x) == 1 and not isinstance(x, SphericalSample)
    with np.errstate(divide="ignore"):
        lw = np.log(mix.weights)
    out = logsumexp(component_log_densities(mix, x) + lw[None, :], axis=1)
    return float(out[0]) if single else out


def density(mix: VmfMixture, x):
    return np.exp(log_density(mix, x))


# ---------------------------------------------------------------- sampling

def _wood_cosines(d: int, kappa: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Rejection sampler for t = x'mu with density prop. to e^{kappa t}(1-t^2)^{d/2-1}."""
    if kappa == 0:
        z = rng.beta(d / 2.0, d / 2.0, size=n)
        return 1.0 - 2.0 * z
    b = d / (np.sqrt(4.0 * kappa ** 2 + d ** 2) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + d * np.log(1.0 - x0 ** 2)
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(16, int(1.3 * (n - filled)))
        z = rng.beta(d / 2.0, d / 2.0, size=m)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.uniform(size=m)
        ok = kappa * w + d * np.log(1.0 - x0 * w) - c >= np.log(u)
        take = w[ok][: n - filled]
        out[filled:filled + take.size] = take
        filled += take.size
    return out


def _sample_component(mu: np.ndarray, kappa: float, n: int, rng) -> np.ndarray:
    d = mu.size - 1
    t = _wood_cosines(d, kappa, n, rng)
    z = rng.standard_normal((n, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    frame = tangent_frame(mu)
    return t[:, None] * mu[None, :] + np.sqrt(np.clip(1.0 - t * t, 0.0, None))[:, None] * (z @ frame.T)


def sample(mix: VmfMixture, n: int, rng: np.random.Generator) -> SphericalSample:
    """i.i.d. draws: component by weight, Wood rejection for the cosine, uniform tangent."""
    if np.any(mix.kappas > KAPPA_MAX):
        raise ValueError(f"concentration above {KAPPA_MAX:g} is outside the supported range")
    labels = rng.choice(mix.r, size=n, p=mix.weights) if mix.r > 1 else np.zeros(n, dtype=int)
    x = np.empty((n, mix.d + 1))
    for j in range(mix.r):
        idx = np.flatnonzero(labels == j)
        if idx.size:
            x[idx] = _sample_component(mix.mus[j], mix.kappas[j], idx.size, rng)
    return SphericalSample(x, mix.d)


def _angle_quantile(d: int, kappa: float, u: np.ndarray, panels: int = 2048) -> np.ndarray:
    """Inverse CDF of the polar angle, density prop. to e^{kappa(cos th - 1)} sin^{d-1} th.

    Panelwise Gauss-Legendre CDF, then safeguarded Newton inside each panel.
    Smooth in kappa, which keeps frozen quasi-random draws comparable across fits.
    """
    th_max = np.pi if kappa < 5.0 else min(np.pi, 14.0 / np.sqrt(kappa))
    gx, gw = np.polynomial.legendre.leggauss(10)

    def g(th):
        with np.errstate(divide="ignore"):
            lg = kappa * (np.cos(th) - 1.0) + (d - 1) * np.log(np.sin(th)) if d > 1 \
                else kappa * (np.cos(th) - 1.0)
        return np.exp(lg)

    edges = np.linspace(0.0, th_max, panels + 1)
    half = 0.5 * (edges[1] - edges[0])
    mids = 0.5 * (edges[1:] + edges[:-1])
    pan = (g(mids[:, None] + half * gx[None, :]) * gw[None, :]).sum(axis=1) * half
    cdf = np.concatenate([[0.0], np.cumsum(pan)])
    v = np.clip(u, 0.0, 1.0) * cdf[-1]
    k = np.clip(np.searchsorted(cdf, v, side="right") - 1, 0, panels - 1)
    lo, hi = edges[k].copy(), edges[k + 1].copy()
    base = cdf[k]
    th = lo + (hi - lo) * np.where(pan[k] > 0, (v - base) / np.where(pan[k] > 0, pan[k], 1.0), 0.5)

    def partial(th):
        hw = 0.5 * (th - edges[k])
        return base + hw * (g(edges[k][:, None] + hw[:, None] * (gx[None, :] + 1.0)) * gw[None, :]).sum(axis=1)

    for _ in range(60):
        f = partial(th) - v
        lo = np.where(f < 0, th, lo)
        hi = np.where(f >= 0, th, hi)
        gt = g(th)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = th - f / gt
        bad = ~np.isfinite(step) | (step < lo) | (step > hi)
        new = np.where(bad, 0.5 * (lo + hi), step)
        done = np.abs(new - th) <= 1e-13 * (1.0 + th)
        th = new
        if np.all(done):
            break
    return th


def transform_uniforms(mu, kappa: float, u: np.ndarray) -> np.ndarray:
    """Map points of [0,1)^{d+1} to vMF(mu, kappa) draws by an inverse-CDF construction.

    Column 0 drives the polar angle; the remaining columns pick the tangent direction.
    """
    mu = np.asarray(mu, dtype=float)
    mu = mu / np.linalg.norm(mu)
    d = mu.size - 1
    u = np.atleast_2d(u)
    th = _angle_quantile(d, float(kappa), u[:, 0])
    if d == 1:
        xi = np.where(u[:, 1] < 0.5, -1.0, 1.0)[:, None]
    elif d == 2:
        phi = 2.0 * np.pi * u[:, 1]
        xi = np.column_stack([np.cos(phi), np.sin(phi)])
    else:
        z = ndtri(np.clip(u[:, 1:d + 1], 1e-16, 1.0 - 1e-16))
        xi = z / np.linalg.norm(z, axis=1, keepdims=True)
    frame = tangent_frame(mu)
    return np.cos(th)[:, None] * mu[None, :] + np.sin(th)[:, None] * (xi @ frame.T)


def sobol_uniforms(dim: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Scrambled Sobol points; size is rounded up to a power of two."""
    m = int(np.ceil(np.log2(max(size, 2))))
    return qmc.Sobol(d=dim, scramble=True, seed=rng).random_base2(m)


# ---------------------------------------------------------------- fitting

def _solve_kappa(d: int, rbar: float, tol: float = 1e-10, max_iter: int = 100) -> float:
    """Solve A_d(kappa) = rbar by Newton with a bisection fallback."""
    if rbar <= 0:
        return 0.0
    if rbar >= 1.0 - 1e-12:
        raise ValueError("degenerate concentration: mean resultant length is 1")
    kappa = rbar * (d + 1 - rbar ** 2) / (1.0 - rbar ** 2)
    lo, hi = 0.0, max(2.0 * kappa, 1.0)
    while mean_resultant_length(d, hi) < rbar:
        hi *= 2.0
    for _ in range(max_iter):
        a = mean_resultant_length(d, kappa)
        f = a - rbar
        if abs(f) < tol:
            return kappa
        if f > 0:
            hi = kappa
        else:
            lo = kappa
        da = 1.0 - a * a - d * a / kappa
        step = kappa - f / da if da > 0 else -1.0
        kappa = step if lo < step < hi else 0.5 * (lo + hi)
    return kappa


def fit_mle_single(sample) -> VmfComponent:
    """Maximum likelihood for one vMF: normalized mean and the Bessel-ratio equation."""
    x = _points(sample)
    d = x.shape[1] - 1
    m = x.mean(axis=0)
    rbar = float(np.linalg.norm(m))
    if rbar == 0:
        mu = np.zeros(d + 1)
        mu[0] = 1.0
        return VmfComponent(mu, 0.0)
    return VmfComponent(m / rbar, _solve_kappa(d, min(rbar, 1.0)))


def _loglik(mix: VmfMixture, x: np.ndarray) -> float:
    return float(np.sum(log_density(mix, x)))


def _em_run(x: np.ndarray, r: int, max_iter: int, rng, tol: float) -> FitReport:
    n, p = x.shape
    d = p - 1
    mus = x[rng.choice(n, size=r, replace=n < r)].copy()
    kap = np.ones(r)
    w = np.full(r, 1.0 / r)
    mix = VmfMixture(mus, kap, w)
    trace = [_loglik(mix, x)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        logp = component_log_densities(mix, x) + np.log(np.maximum(mix.weights, 1e-300))[None, :]
        resp = np.exp(logp - logsumexp(logp, axis=1, keepdims=True))
        nk = resp.sum(axis=0)
        mus = np.empty((r, p))
        kap = np.empty(r)
        for j in range(r):
            if np.all(resp[:, j] < 1e-12):
                worst = int(np.argmin(log_density(mix, x)))
                mus[j], kap[j], nk[j] = x[worst], 1.0, 1.0
                continue
            s = resp[:, j] @ x
            rb = np.linalg.norm(s) / nk[j]
            mus[j] = s / np.linalg.norm(s)
            kap[j] = _solve_kappa(d, min(rb, 1.0 - 1e-8))
        mix = VmfMixture(mus, kap, nk / nk.sum())
        trace.append(_loglik(mix, x))
        if abs(trace[-1] - trace[-2]) <= tol * (1.0 + abs(trace[-1])):
            converged = True
            break
    return FitReport(mix, trace[-1], it, converged, trace)


def fit_em(sample, r: int, runs: int = 5, max_iter: int = 100,
           rng: np.random.Generator | None = None, tol: float = 1e-10) -> FitReport:
    """EM for an r-mixture; the run with the highest log-likelihood is returned."""
    x = _points(sample)
    rng = np.random.default_rng(0) if rng is None else rng
    if r == 1:
        comp = fit_mle_single(x)
        mix = VmfMixture.single(comp.mu, comp.kappa)
        ll = _loglik(mix, x)
        return FitReport(mix, ll, 1, True, [ll])
    best = None
    for _ in range(runs):
        rep = _em_run(x, r, max_iter, rng, tol)
        if best is None or rep.loglik > best.loglik:
            best = rep
    return best


# ---------------------------------------------------------------- functionals

def log_product_integral(d: int, k1, k2, t):
    """log of int f(x; mu1, k1) f(x; mu2, k2) dx = log c(k1)c(k2)/c(a), a = ||k1 mu1 + k2 mu2||.

    Depends on the directions only through t = mu1'mu2. The exponent a - k1 - k2
    is formed as 2 k1 k2 (t - 1)/(a + k1 + k2), which stays accurate when a is
    near k1 + k2 and handles exact antipodal cancellation (a = 0).
    """
    k1, k2, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (k1, k2, t)))
    t = np.clip(t, -1.0, 1.0)
    a = np.sqrt(np.maximum(k1 * k1 + k2 * k2 + 2.0 * k1 * k2 * t, 0.0))
    den = a + k1 + k2
    with np.errstate(invalid="ignore", divide="ignore"):
        gap = np.where(den > 0, 2.0 * k1 * k2 * (t - 1.0) / np.where(den > 0, den, 1.0), 0.0)
    out = log_c_vmf(d, k1) + k1 + log_c_vmf(d, k2) + k2 - log_c_vmf(d, a) - a + gap
    return float(out) if np.ndim(out) == 0 else out


def psi0_matrix(mix: VmfMixture, other: VmfMixture | None = None) -> np.ndarray:
    """Integrals of products of components, c(k_i)c(k_j)/c(||k_i mu_i + k_j mu_j||)."""
    other = mix if other is None else other
    t = mix.mus @ other.mus.T
    return np.exp(log_product_integral(mix.d, mix.kappas[:, None], other.kappas[None, :], t))


def roughness(mix: VmfMixture) -> float:
    """R(f) = int f^2; closed form c(k)^2/c(2k) for one component."""
    if mix.r == 1:
        k = mix.kappas[0]
        return float(np.exp(2.0 * log_c_vmf(mix.d, k) - log_c_vmf(mix.d, 2.0 * k)))
    return float(mix.weights @ psi0_matrix(mix) @ mix.weights)


def laplacian_radial(mix: VmfMixture, x) -> np.ndarray:
    """Laplace-Beltrami of the mixture density at points x."""
    x = _points(x)
    t = x @ mix.mus.T
    k = mix.kappas[None, :]
    logf = component_log_densities(mix, x)
    comp = np.exp(logf) * (k ** 2 * (1.0 - t ** 2) - mix.d * k * t)
    out = comp @ mix.weights
    return out


def curvature_closed_form(d: int, kappa: float) -> float:
    """R(laplacian f) for a single vMF, in scaled-log Bessel arithmetic."""
    if kappa == 0:
        return 0.0
    nu = 0.5 * (d - 1)
    k2 = 2.0 * kappa
    i1 = log_scaled_bessel_i(nu + 1.0, k2)
    i2 = log_scaled_bessel_i(nu + 2.0, k2)
    i0 = log_scaled_bessel_i(nu, kappa)
    # 2d I_{nu+1}(2k) + (d+2) k I_{nu+2}(2k), scaled by e^{-2k}
    bracket = np.logaddexp(np.log(2.0 * d) + i1, np.log((d + 2) * kappa) + i2)
    logv = (np.log(d) + 0.5 * (d + 1) * np.log(kappa) + bracket
            - (d + 2) * np.log(2.0) - 0.5 * (d + 1) * np.log(np.pi) - 2.0 * i0)
    return float(np.exp(logv))


def curvature_functional(mix: VmfMixture, B: int = 10_000,
                         rng: np.random.Generator | None = None) -> float:
    """R(laplacian f): closed form for r=1, quadrature on S^1/S^2, importance sampling above."""
    if np.all(mix.kappas == 0):
        return 0.0
    if mix.r == 1:
        return curvature_closed_form(mix.d, float(mix.kappas[0]))
    if mix.d in (1, 2):
        kmax = float(mix.kappas.max())
        if mix.d == 1:
            rule = quadrature(1, max(2048, int(64 * np.sqrt(kmax))))
        else:
            rule = quadrature(2, max(160, int(24 * np.sqrt(kmax))))
        return rule.integrate(laplacian_radial(mix, rule.nodes) ** 2)
    rng = np.random.default_rng(0) if rng is None else rng
    y = sample(mix, B, rng).points
    lap = laplacian_radial(mix, y)
    g = density(mix, y)
    return float(np.mean(lap ** 2 / g))


# ---------------------------------------------------------------- config

def mixture_from_dict(cfg: dict) -> VmfMixture:
    try:
        d = int(cfg["d"])
        mu = np.atleast_2d(np.asarray(cfg["mu"], dtype=float))
        kappa = np.atleast_1d(np.asarray(cfg["kappa"], dtype=float))
        p = np.atleast_1d(np.asarray(cfg.get("p", np.full(mu.shape[0], 1.0 / mu.shape[0])), dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"invalid mixture config: {exc}") from None
    if mu.shape[1] != d + 1:
        raise DataError(f"mixture config: mu rows must have d+1={d + 1} entries")
    if np.any(np.abs(np.linalg.norm(mu, axis=1) - 1.0) > 1e-3):
        raise DataError("mixture config: mu rows must be unit vectors")
    if abs(p.sum() - 1.0) > 1e-8 or np.any(p < 0):
        raise DataError("mixture config: weights p must be >= 0 and sum to 1")
    try:
        return VmfMixture(mu, kappa, p / p.sum())
    except ValueError as exc:
        raise DataError(f"invalid mixture config: {exc}") from None


def load_mixture_config(path) -> VmfMixture:
    """Read a mixture from TOML or JSON with fields d, mu, kappa, p."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    text = path.read_text()
    try:
        cfg = json.loads(text) if path.suffix.lower() == ".json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise DataError(f"{path}: cannot parse config: {exc}") from None
    return mixture_from_dict(cfg.get("mixture", cfg))


def uniform_mixture(d: int) -> VmfMixture:
    mu = np.zeros(d + 1)
    mu[0] = 1.0
    return VmfMixture.single(mu, 0.0)


def uniform_density(d: int) -> float:
    return 1.0 / surface_area(d)


__all__ = [
    "VmfComponent", "VmfMixture", "FitReport", "log_density", "density", "sample",
    "transform_uniforms", "sobol_uniforms", "fit_mle_single", "fit_em", "psi0_matrix",
    "log_product_integral",
    "roughness", "laplacian_radial", "curvature_functional", "curvature_closed_form",
    "load_mixture_config", "mixture_from_dict", "uniform_mixture", "as_sample",
]
