"""Asymptotic constants of the cross-validation bandwidth.

The normalized error n^{d/(2d+8)} (h_CV - h_MISE)/h_MISE is asymptotically
normal with variance sigma2 = tau(L) * rho(f): a kernel part tau and a density
part rho. This module provides both in closed form for the vMF kernel and
density, the generic-kernel functionals they are built from, their Euclidean
(Gaussian kernel, normal density) counterparts, and the theoretical rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.special import roots_jacobi

from .specfun import log_scaled_bessel_i, surface_area
from .vmf import curvature_closed_form, roughness, VmfMixture

TRUNC_REL = 1e-16
FD_STEP = 1e-5


@dataclass(frozen=True)
class KernelProfile:
    """Kernel profile L on [0, inf), with optional analytic first and second derivatives."""

    L: Callable
    dL: Callable | None = None
    d2L: Callable | None = None
    name: str = "custom"
    differentiable: bool = True

    def __call__(self, s):
        return self.L(np.asarray(s, dtype=float))

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        if self.dL is not None:
            return self.dL(s)
        e = FD_STEP * (1.0 + np.abs(s))
        lo = np.maximum(s - e, 0.0)
        return (self.L(s + e) - self.L(lo)) / (s + e - lo)

    def deriv2(self, s):
        s = np.asarray(s, dtype=float)
        if self.d2L is not None:
            return self.d2L(s)
        e = 1e3 * FD_STEP * (1.0 + np.abs(s))
        lo = np.maximum(s - e, 0.0)
        return (self.deriv(s + e) - self.deriv(lo)) / (s + e - lo)

    def power(self, k: int) -> "KernelProfile":
        return KernelProfile(lambda s: self.L(s) ** k, name=f"{self.name}^{k}",
                             differentiable=False)

    def scaled(self, c: float) -> "KernelProfile":
        d1 = None if self.dL is None else (lambda s: c * self.dL(s))
        d2 = None if self.d2L is None else (lambda s: c * self.d2L(s))
        return KernelProfile(lambda s: c * self.L(s), d1, d2, f"{c}*{self.name}", self.differentiable)


L_VMF = KernelProfile(lambda s: np.exp(-s), lambda s: -np.exp(-s), lambda s: np.exp(-s), "vMF")
L_INDICATOR = KernelProfile(lambda s: (np.asarray(s) <= 1.0).astype(float), name="indicator",
                            differentiable=False)


def G_profile(L: KernelProfile) -> KernelProfile:
    """G(s) = L'(s) s."""
    return KernelProfile(lambda s: L.deriv(s) * s, name=f"G[{L.name}]", differentiable=False)


def truncation_point(L: KernelProfile, rel: float = TRUNC_REL) -> float:
    """x such that |L|, |L'| s, |L''| s^2 at s >= x^2 stay below rel times their peak."""
    s = np.concatenate([[0.0], np.geomspace(1e-6, 1e5, 4000)])
    vals = np.abs(L(s))
    if L.differentiable:
        vals = np.maximum(vals, np.abs(L.deriv(s)) * (1.0 + s))
        vals = np.maximum(vals, np.abs(L.deriv2(s)) * (1.0 + s) ** 2)
    big = np.flatnonzero(vals > rel * vals.max())
    if big.size == 0 or big[-1] == s.size - 1:
        raise ValueError(f"kernel {L.name} does not decay fast enough to truncate")
    return float(np.sqrt(s[big[-1] + 1]))


def _omega(d: int) -> float:
    return surface_area(d)


def _radial_integral(F, d: int, power: float, L: KernelProfile) -> float:
    """int_0^inf F(s) s^power ds via s = x^2, integrating on the truncated range."""
    X = truncation_point(L)
    val, _ = quad(lambda x: 2.0 * float(F(x * x)) * x ** (2.0 * power + 1.0), 0.0, X,
                  epsabs=0.0, epsrel=1e-12, limit=400, points=[1.0] if X > 1.0 else None)
    return val


def lambda_d(L: KernelProfile, d: int, k: int = 1) -> float:
    """2^{d/2-1} omega_{d-1} int_0^inf L(s)^k s^{d/2-1} ds."""
    F = (lambda s: L(s) ** k)
    return 2.0 ** (d / 2 - 1) * _omega(d - 1) * _radial_integral(F, d, d / 2 - 1, L)


def beta_dj(L: KernelProfile, d: int, j: int = 2) -> float:
    """2^{d/2-1} omega_{d-1} int_0^inf L(s) s^{j/2+d/2-1} ds.

    The prefactor 2^{d/2-1} (matching lambda_d) is the one that gives b_d = 1/2
    for the vMF kernel.
    """
    return 2.0 ** (d / 2 - 1) * _omega(d - 1) * _radial_integral(L, d, j / 2 + d / 2 - 1, L)


def kernel_constants(L: KernelProfile, d: int) -> tuple[float, float]:
    """(v_d, b_d) = (lambda_d(L^2)/lambda_d(L)^2, beta_{d,2}(L)/(d lambda_d(L)))."""
    lam = lambda_d(L, d)
    return lambda_d(L, d, 2) / lam ** 2, beta_dj(L, d, 2) / (d * lam)


def gamma_constants(d: int) -> tuple[float, float]:
    if d == 1:
        return 1.0, 2.0 ** -0.5
    w1, w2 = _omega(d - 1), _omega(d - 2)
    return w1 * w2 * 2.0 ** (d - 2), w1 * w2 ** 2 * 2.0 ** ((3 * d - 6) / 2)


def _theta_rule(d: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for int_{-1}^1 (1-th^2)^{(d-3)/2} g(th) dth; d=1 is the two-point sum."""
    if d == 1:
        return np.array([1.0, -1.0]), np.array([1.0, 1.0])
    a = (d - 3) / 2.0
    return roots_jacobi(m, a, a)


def _gl_panels(a: float, b: float, panels: int, order: int = 20) -> tuple[np.ndarray, np.ndarray]:
    z, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * z).ravel(), (half[:, None] * w).ravel()


def _sigma0_terms(L: KernelProfile, d: int, panels: int, m_theta: int) -> float:
    X = truncation_point(L)
    th, wth = _theta_rule(d, m_theta)
    x, wx = _gl_panels(0.0, X, panels)
    y, wy = _gl_panels(0.0, 2.0 * X, 2 * panels)
    lam = lambda_d(L, d)
    gam, gam_t = gamma_constants(d)
    lam_g2 = lambda_d(G_profile(L), d, 2)
    Lx = L(x * x)

    # (u, v) = (x^2, x'^2); integrand of the phi_12 term times u^{d/2} v^{d/2} du dv
    t2 = 0.0
    for xi, wi, Li in zip(x, wx, Lx):
        z = xi * xi + x[:, None] ** 2 - 2.0 * th[None, :] * xi * x[:, None]
        xy = xi * x[:, None]
        poly = xy - th[None, :] * (xi * xi + x[:, None] ** 2) + th[None, :] ** 2 * xy
        core = L.deriv2(z) * poly - L.deriv(z) * th[None, :] / 2.0
        inner = (core @ wth) * (xi * x) ** d
        t2 += wi * Li * 4.0 * np.sum(wx * Lx * inner)

    # inner integral of L(u) phi_1(u, w) u^{d/2} du for each w = y^2
    inner = np.empty_like(y)
    for k, yk in enumerate(y):
        z = x[:, None] ** 2 + yk * yk - 2.0 * th[None, :] * x[:, None] * yk
        # phi_1 u^{d/2} with u = x^2: L'(z) (x - th y) x^d
        core = L.deriv(z) * (x[:, None] - th[None, :] * yk)
        inner[k] = 2.0 * np.sum(wx * Lx * (core @ wth) * x ** d)
    t3 = 2.0 * np.sum(wy * inner ** 2 * y ** (d - 1))

    return 16.0 * (lam_g2 / lam ** 2 - 2.0 * gam * t2 / lam ** 3 + gam_t * t3 / lam ** 4)


def sigma0_sq_numeric(L: KernelProfile, d: int, rtol: float = 1e-4,
                      return_diagnostics: bool = False):
    """Kernel variance constant by nested quadrature, refined until two resolutions agree."""
    if not L.differentiable:
        raise ValueError(f"kernel {L.name} is not differentiable; sigma0^2 needs L'")
    panels, m_theta = 8, 96
    prev = _sigma0_terms(L, d, panels, m_theta)
    for _ in range(4):
        panels, m_theta = 2 * panels, 2 * m_theta
        cur = _sigma0_terms(L, d, panels, m_theta)
        if abs(cur - prev) <= rtol * abs(cur):
            return (cur, abs(cur - prev) / abs(cur)) if return_diagnostics else cur
        prev = cur
    raise RuntimeError("sigma0^2 quadrature did not converge")


def _shape_factor(d: float) -> float:
    return 1.0 + 2.0 ** (-(d / 2 + 2)) - 2.0 * 1.5 ** (-(d / 2 + 2))


def sigma0_sq_vmf(d: int) -> float:
    return 2.0 ** (-d) * math.pi ** (-d / 2) * d * (d + 2) * _shape_factor(d)


def sigma0_sq_vmf_d1() -> float:
    return math.pi ** -0.5 * (-(4.0 / 9.0) * math.sqrt(6.0) + 1.5 + (3.0 / 16.0) * math.sqrt(2.0))


def tau_generic(sigma0_sq: float, v: float, b: float, d: int) -> float:
    den = (2.0 ** (d - 4) * float(d) ** (d + 8)) ** (1.0 / (d + 4)) * (d + 4) ** 2
    return sigma0_sq / (den * (v ** (d + 8) * b ** (2 * d)) ** (1.0 / (d + 4)))


def tau_vmf(d: float) -> float:
    d = float(d)
    log_pref = ((5 * d + 4) / (d + 4) * math.log(2.0) + 2 * d / (d + 4) * math.log(math.pi)
                - (d + 8) / (d + 4) * math.log(d))
    return math.exp(log_pref) * _shape_factor(d) * d * (d + 2) / (d + 4) ** 2


def rho_vmf(d: int, kappa: float) -> float:
    """Density part rho_d(kappa) of the variance for a vMF truth (inf at kappa = 0)."""
    if kappa == 0:
        return math.inf
    nu = (d - 1) / 2.0
    k2 = 2.0 * kappa
    # everything scaled by e^{-x}; the exponentials cancel exactly
    li0_2k = log_scaled_bessel_i(nu, k2)
    li0_k = log_scaled_bessel_i(nu, kappa)
    bracket = np.logaddexp(math.log(2.0 * d) + log_scaled_bessel_i(nu + 1, k2),
                           math.log((d + 2) * kappa) + log_scaled_bessel_i(nu + 2, k2))
    inner = (math.log(4.0) + 2.0 * (1 + 1 / d) * math.log(math.pi) + math.log(d)
             + (8.0 / d) * li0_k + (2.0 / d - 1.0) * math.log(kappa) + bracket)
    return float(math.exp(li0_2k - d / (d + 4) * inner))


def rho_from_functionals(R_f: float, R_lap: float, d: int) -> float:
    if not R_lap > 0:
        return math.inf
    return R_f / R_lap ** (d / (d + 4))


def rho_vmf_assembled(d: int, kappa: float) -> float:
    mu = np.zeros(d + 1)
    mu[0] = 1.0
    mix = VmfMixture.single(mu, kappa)
    return rho_from_functionals(roughness(mix), curvature_closed_form(d, kappa), d)


@dataclass(frozen=True)
class VarianceConstants:
    tau: float
    rho: float
    sigma2: float
    beta_star: float
    d: int


def beta_star(d: int) -> float:
    return -d / (2.0 * d + 8.0)


def sigma_sq(d: int, kappa: float) -> VarianceConstants:
    t = tau_vmf(d)
    r = rho_vmf(d, kappa)
    return VarianceConstants(t, r, t * r, beta_star(d), d)


def euclidean_constants(d: int) -> tuple[float, float]:
    """(rho_d(phi), tau_d(W_G)) for a normal density and the Gaussian kernel."""
    rho = (2 * math.pi) ** (-2 * d / (d + 4)) * float(d * (d + 2)) ** (-d / (d + 4))
    return rho, tau_vmf(d)


def rate_exponents(d: int) -> tuple[float, float, float]:
    """Relative-error rates of (CV, AMI, EMI): -d/(2d+8), -4/(2d+8), -1/2."""
    return beta_star(d), -4.0 / (2 * d + 8), -0.5


def asymptotics_table(kappa: float, dmax: int) -> list[dict]:
    rows = []
    for d in range(1, dmax + 1):
        vc = sigma_sq(d, kappa)
        b_cv, b_ami, b_emi = rate_exponents(d)
        rows.append({"d": d, "tau": vc.tau, "rho": vc.rho, "sigma2": vc.sigma2,
                     "beta_cv": b_cv, "beta_ami": b_ami, "beta_emi": b_emi,
                     "rho_gauss": euclidean_constants(d)[0]})
    return rows
