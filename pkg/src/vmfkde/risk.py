"""Exact and asymptotic risk of the vMF-kernel estimator under vMF-mixture truths.

With s = 1/h^2, the expected estimate is sum_i p_i A_i(x), where
A_i(x) = c(s)c(k_i)/c(||s x + k_i mu_i||) is the kernel smoothed i-th component.
The MISE then needs

    Psi0_ij = int f_i f_j,   Psi1_ij = int A_i f_j,   Psi2_ij = int A_i A_j,

the first in closed form, the other two by importance sampling on draws that are
frozen once per evaluator, so h -> MISE(h) is a smooth deterministic function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .kde import KdeModel
from .specfun import log_c_vmf, log_surface_area
from .vmf import (VmfMixture, component_log_densities, density, log_product_integral,
                  psi0_matrix, sample, sobol_uniforms, transform_uniforms)

N_EXACT = 2048
V_SCALE = 2.0 * np.sqrt(np.pi)
B_VMF = 0.5


def v_vmf(d: int) -> float:
    """Kernel variance constant of the vMF kernel, (2 sqrt(pi))^{-d}."""
    return float(V_SCALE ** (-d))


def _check_h(h: float) -> float:
    h = float(h)
    if not h > 0 or np.isnan(h):
        raise ValueError(f"bandwidth must be > 0, got {h}")
    return h


@dataclass(frozen=True)
class PsiMatrices:
    psi0: np.ndarray
    psi1: np.ndarray
    psi2: np.ndarray

    def quadratic(self, p: np.ndarray, n: int) -> float:
        """p'[(1 - 1/n) Psi2 - 2 Psi1 + Psi0]p."""
        m = (1.0 - 1.0 / n) * self.psi2 - 2.0 * self.psi1 + self.psi0
        return float(p @ m @ p)


class RiskEvaluator:
    """MISE(h) for a fixed truth and sample size, on frozen importance draws.

    ``draws[j]`` holds B draws from component j. The (i, j) mixture proposal
    (f_i + f_j)/2 reuses them: its first half comes from ``draws[i]`` and its
    second half from ``draws[j]``, so every Psi2 entry is built from the same
    r*B points and Psi2 is exactly symmetric.
    """

    def __init__(self, truth: VmfMixture, n: int, draws: np.ndarray, base_uniforms=None):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.truth = truth
        self.n = int(n)
        self.draws = np.asarray(draws, dtype=float)
        r, b = self.draws.shape[:2]
        if r != truth.r or b < 2:
            raise ValueError("draws must have shape (r, B, d+1) with B >= 2")
        self.B = b
        self.base_uniforms = base_uniforms
        self.psi0 = psi0_matrix(truth)
        flat = self.draws.reshape(r * b, -1)
        # t[i, j, b] = mu_i' Y_{j, b}
        self._t = (flat @ truth.mus.T).T.reshape(r, r, b)
        logf = component_log_densities(truth, flat).T.reshape(r, r, b)  # log f_i(Y_{j,b})
        self._log_prop = self._mixture_log_proposal(logf)
        self._cache: dict[float, PsiMatrices] = {}

    def _mixture_log_proposal(self, logf: np.ndarray) -> np.ndarray:
        r, _, b = logf.shape
        half = b // 2
        out = np.empty((r, r, b))
        for i in range(r):
            for j in range(r):
                if i == j:
                    out[i, j] = logf[i, i]
                    continue
                y_log_fi = np.concatenate([logf[i, i, :half], logf[i, j, half:]])
                y_log_fj = np.concatenate([logf[j, i, :half], logf[j, j, half:]])
                out[i, j] = np.logaddexp(y_log_fi, y_log_fj) - np.log(2.0)
        return out

    @property
    def d(self) -> int:
        return self.truth.d

    def log_smoothed(self, h: float) -> np.ndarray:
        """log A_i(Y_{j,b}) as an (r, r, B) array."""
        s = 1.0 / _check_h(h) ** 2
        k = self.truth.kappas[:, None, None]
        return log_product_integral(self.d, s, k, self._t)

    def psi(self, h: float) -> PsiMatrices:
        h = _check_h(h)
        hit = self._cache.get(h)
        if hit is not None:
            return hit
        la = self.log_smoothed(h)
        r, _, b = la.shape
        half = b // 2
        psi1 = np.exp(la).mean(axis=2)
        # Psi2 uses A_i = m_i + (A_i - m_i) with m_i = min A_i, the value at -mu_i;
        # since int A_i = 1 only the centred product needs sampling.
        s = 1.0 / h ** 2
        m = np.exp(log_product_integral(self.d, s, self.truth.kappas, -1.0))
        dev = np.exp(la) - m[:, None, None]
        omega = np.exp(log_surface_area(self.d))
        psi2 = np.empty((r, r))
        for i in range(r):
            for j in range(i, r):
                if i == j:
                    di = dj = dev[i, i]
                else:
                    di = np.concatenate([dev[i, i, :half], dev[i, j, half:]])
                    dj = np.concatenate([dev[j, i, :half], dev[j, j, half:]])
                est = np.mean(di * dj * np.exp(-self._log_prop[i, j]))
                psi2[i, j] = psi2[j, i] = est + m[i] + m[j] - m[i] * m[j] * omega
        out = PsiMatrices(self.psi0, psi1, psi2)
        if len(self._cache) < 4096:
            self._cache[h] = out
        return out

    def variance_term(self, h: float) -> float:
        """c(s)^2/(n c(2s)) with s = 1/h^2."""
        s = 1.0 / _check_h(h) ** 2
        return float(np.exp(log_product_integral(self.d, s, s, 1.0)) / self.n)

    def mise(self, h: float) -> float:
        if np.isinf(h):
            return mise_at_infinity(self.truth)
        p = self.truth.weights
        return self.variance_term(h) + self.psi(h).quadratic(p, self.n)

    __call__ = mise


def build_risk_evaluator(truth: VmfMixture, n: int, B: int = 10_000,
                         rng: np.random.Generator | None = None, sampling: str = "qmc",
                         base_uniforms: np.ndarray | None = None) -> RiskEvaluator:
    """Draw the frozen importance samples once.

    ``sampling="qmc"`` maps scrambled Sobol points (B rounded up to a power of
    two) through each component's inverse CDF; passing the same
    ``base_uniforms`` to two evaluators gives them common random numbers.
    ``sampling="mc"`` uses plain i.i.d. draws.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    d = truth.d
    if sampling == "qmc":
        u = sobol_uniforms(d + 1, B, rng) if base_uniforms is None else np.asarray(base_uniforms)
        draws = np.stack([transform_uniforms(truth.mus[j], truth.kappas[j], u) for j in range(truth.r)])
        return RiskEvaluator(truth, n, draws, base_uniforms=u)
    if sampling == "mc":
        draws = np.stack([sample(VmfMixture.single(truth.mus[j], truth.kappas[j]), B, rng).points
                          for j in range(truth.r)])
        return RiskEvaluator(truth, n, draws)
    raise ValueError(f"unknown sampling scheme {sampling!r}")


def exact_mise(ev: RiskEvaluator, h: float) -> float:
    return ev.mise(_check_h(h))


def mise_at_infinity(truth: VmfMixture) -> float:
    """MISE of the uniform estimate, int (1/omega_d - f)^2 = p'Psi0 p - 1/omega_d."""
    if np.all(truth.kappas == 0):
        return 0.0
    p = truth.weights
    return float(max(p @ psi0_matrix(truth) @ p - np.exp(-log_surface_area(truth.d)), 0.0))


def amise(d: int, n: int, curvature: float, h: float) -> float:
    """v_d/(n h^d) + h^4 b_d^2 R(laplacian f)."""
    h = _check_h(h)
    return v_vmf(d) / (n * h ** d) + h ** 4 * B_VMF ** 2 * curvature


def h_amise(d: int, n: int, curvature: float) -> float:
    if not curvature > 0:
        return float("inf")
    return float((d * v_vmf(d) / (4.0 * B_VMF ** 2 * curvature)) ** (1.0 / (d + 4)) * n ** (-1.0 / (d + 4)))


# ---------------------------------------------------------------- ISE

class IseEvaluator:
    """h -> ISE of the estimator on one sample, exact (double sums) or by importance sampling.

    The exact path caches the sample Gram matrix and the sample-to-mean dots;
    the sampled path freezes B draws from the truth and their dots with the sample.
    """

    def __init__(self, sample_points, truth: VmfMixture, method: str = "auto", B: int = 10_000,
                 rng: np.random.Generator | None = None, n_exact: int = N_EXACT):
        x = np.atleast_2d(np.asarray(sample_points, dtype=float))
        self.x = x
        self.truth = truth
        self.n = x.shape[0]
        p = truth.weights
        self.r_f = float(p @ psi0_matrix(truth) @ p)
        if method == "auto":
            method = "exact" if self.n <= n_exact else "is"
        self.method = method
        if method == "exact":
            iu = np.triu_indices(self.n, 1)
            self._pair_t = (x @ x.T)[iu]
            self._mean_t = x @ truth.mus.T
        elif method == "is":
            rng = np.random.default_rng(0) if rng is None else rng
            y = sample(truth, B, rng).points
            self._log_g = np.log(density(truth, y))
            self._g = np.exp(self._log_g)
            self._yx = y @ x.T
        else:
            raise ValueError(f"unknown ISE method {method!r}")

    @property
    def d(self) -> int:
        return self.truth.d

    def _exact(self, h: float) -> float:
        s = 1.0 / h ** 2
        d, n = self.d, self.n
        diag = np.exp(log_product_integral(d, s, s, 1.0))
        off = np.exp(log_product_integral(d, s, s, self._pair_t)).sum()
        int_f2hat = (n * diag + 2.0 * off) / n ** 2
        cross = np.exp(log_product_integral(d, s, self.truth.kappas[None, :], self._mean_t))
        int_fhat_f = float((cross @ self.truth.weights).mean())
        return max(int_f2hat - 2.0 * int_fhat_f + self.r_f, 0.0)

    def _sampled(self, h: float) -> float:
        s = 1.0 / h ** 2
        a = float(log_c_vmf(self.d, s)) + s
        fhat = np.exp(a + logsumexp(s * (self._yx - 1.0), axis=1) - np.log(self.n))
        return float(np.mean((fhat - self._g) ** 2 / self._g))

    def __call__(self, h: float) -> float:
        if np.isinf(h):
            return mise_at_infinity(self.truth)
        h = _check_h(h)
        return self._exact(h) if self.method == "exact" else self._sampled(h)


def exact_ise(model: KdeModel, truth: VmfMixture, n_exact: int = N_EXACT) -> float:
    """ISE by the closed-form double sums; cost O(n^2)."""
    if model.sample.n > n_exact:
        raise ValueError(f"exact ISE is limited to n <= {n_exact}; use is_ise")
    return IseEvaluator(model.sample.points, truth, "exact", n_exact=n_exact)(model.h)


def is_ise(model: KdeModel, truth: VmfMixture, B: int = 10_000,
           rng: np.random.Generator | None = None, return_se: bool = False):
    """(1/B) sum (f_hat(Y) - g(Y))^2 / g(Y) with Y ~ g, the truth."""
    rng = np.random.default_rng(0) if rng is None else rng
    if model.is_uniform and np.all(truth.kappas == 0):
        return (0.0, 0.0) if return_se else 0.0
    y = sample(truth, B, rng).points
    g = density(truth, y)
    fh = np.exp(model.log_evaluate_batch(y))
    terms = (fh - g) ** 2 / g
    val = float(terms.mean())
    if return_se:
        return val, float(terms.std(ddof=1) / np.sqrt(B))
    return val
