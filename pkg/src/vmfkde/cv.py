"""Least-squares cross-validation for the vMF kernel estimator.

All pair terms depend on the sample only through t = X_i'X_j. With s = 1/h^2,

    L_h(t)      = c(s) exp(s t)                    (the kernel)
    (L*L)_h(t)  = c(s)^2 / c(s sqrt(2 + 2t))       (kernel convolved with itself)

and the criterion is

    CV(h) = c(s)^2/(n c(2s)) - (2/n^2) sum_{i<j} [(2n/(n-1)) L_h(t_ij) - (L*L)_h(t_ij)].

Pair sums are either evaluated exactly, or through a binned rule: pair dots are
binned once, and in each bin the smooth pair function is replaced by its
interpolant at six Chebyshev nodes. The per-bin interpolation weights do not
depend on h, so each new bandwidth costs O(bins) instead of O(n^2). Small h uses
a finer binning of the pairs near t = 1, the only ones that still contribute.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb

from .specfun import log_c_vmf_split, mean_resultant_length
from .sphere import as_sample
from .vmf import VmfMixture, log_product_integral, sample

GRAM_CAP = 10_000
N_BINS = 4096
N_NODES = 6
BIN_SMOOTHNESS = 0.25  # max s * bin width for the binned rule
EXP_CUTOFF = 160.0     # pairs with s (1 - t) above this are negligible
_BLOCK = 1024

_NODES = np.cos((2 * np.arange(N_NODES) + 1) * np.pi / (2 * N_NODES))
_VINV = np.linalg.inv(np.vander(_NODES, N_NODES, increasing=True))


@dataclass
class GramCache:
    """Pairwise dots X_i'X_j for i < j, stored when n <= GRAM_CAP and streamed otherwise."""

    points: np.ndarray
    dots: np.ndarray | None = None
    _psums: dict = field(default_factory=dict, repr=False)
    _weights: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_sample(cls, sample, cap: int = GRAM_CAP) -> "GramCache":
        x = as_sample(sample).points
        dots = None
        if x.shape[0] <= cap:
            iu = np.triu_indices(x.shape[0], 1)
            dots = np.clip((x @ x.T)[iu], -1.0, 1.0)
        return cls(x, dots)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1] - 1

    def iter_dots(self):
        """Yield the pair dots in blocks (a single block when stored)."""
        if self.dots is not None:
            yield self.dots
            return
        x = self.points
        for lo in range(0, self.n, _BLOCK):
            blk = x[lo:lo + _BLOCK] @ x[lo:].T
            rows, cols = np.triu_indices(blk.shape[0], 1, m=blk.shape[1])
            yield np.clip(blk[rows, cols], -1.0, 1.0)

    def _power_sums(self, level: int) -> np.ndarray:
        """Per-bin sums of u^p, u the pair dot in local bin coordinates on [-1, 1]."""
        if level not in self._psums:
            lo = 1.0 - 2.0 * 4.0 ** (-level)
            width = (1.0 - lo) / N_BINS
            psum = np.zeros((N_BINS, N_NODES))
            for t in self.iter_dots():
                if level > 0:
                    t = t[t >= lo]
                k = np.minimum(((t - lo) / width).astype(np.int64), N_BINS - 1)
                u = (t - lo - (k + 0.5) * width) / (0.5 * width)
                up = np.ones_like(u)
                for p in range(N_NODES):
                    psum[:, p] += np.bincount(k, weights=up, minlength=N_BINS)
                    up = up * u
            self._psums[level] = psum
        return self._psums[level]

    def bin_weights(self, level: int = 0, merge: int = 1) -> tuple[np.ndarray, float, float]:
        """Binned rule on [lo, 1], lo = 1 - 2 * 4^-level, with N_BINS/merge bins.

        Returns (weights, lo, width); ``weights`` has one row of N_NODES
        interpolation weights per bin, so that the sum over pairs in [lo, 1] of
        F(t) is approximately sum(weights * F(bin nodes)).
        """
        key = (level, merge)
        if key not in self._weights:
            psum = self._power_sums(level)
            if merge > 1:
                psum = _merge_power_sums(psum, merge)
            self._weights[key] = psum @ _VINV
        lo = 1.0 - 2.0 * 4.0 ** (-level)
        return self._weights[key], lo, (1.0 - lo) * merge / N_BINS


def _merge_power_sums(psum: np.ndarray, g: int) -> np.ndarray:
    """Re-expand power sums of g adjacent bins about the centre of their union.

    A fine local coordinate u maps to the coarse one as u' = u/g + b_m with
    b_m = (2m + 1)/g - 1 for the m-th fine bin in the group; powers of u' follow
    from the binomial theorem, so the merge is exact.
    """
    nb, P = psum.shape
    grouped = psum.reshape(nb // g, g, P)
    out = np.zeros((nb // g, P))
    q = np.arange(P)
    for m in range(g):
        b = (2 * m + 1) / g - 1.0
        # T[p, q] = C(p, q) g^-q b^(p-q) for q <= p
        T = np.zeros((P, P))
        for p in range(P):
            T[p, :p + 1] = comb(p, q[:p + 1]) * g ** (-q[:p + 1].astype(float)) * b ** (p - q[:p + 1])
        out += grouped[:, m, :] @ T.T
    return out


def _pair_log_terms(d: int, s: float, t):
    """(log L_h(t), log (L*L)_h(t)) in split form, exponents <= 0 before the constants."""
    a, _ = log_c_vmf_split(d, s)
    return a + s * (t - 1.0), log_product_integral(d, s, s, t)


def pair_sums(cache: GramCache, h: float, method: str = "exact") -> tuple[float, float]:
    """(sum_{i<j} L_h(t_ij), sum_{i<j} (L*L)_h(t_ij))."""
    h = _check_h(h)
    s = 1.0 / h ** 2
    d = cache.d
    # finest level whose range still holds every non-negligible pair
    level = max(0, int(np.floor(np.log(2.0 * s / EXP_CUTOFF) / np.log(4.0))))
    fine = 2.0 * 4.0 ** (-level) / N_BINS
    if method == "auto":
        method = "binned" if s * fine <= BIN_SMOOTHNESS else "exact"
    if method == "binned":
        merge = 1
        while merge < N_BINS and s * fine * merge * 2 <= BIN_SMOOTHNESS:
            merge *= 2
        w, lo, width = cache.bin_weights(level, merge)
        live = np.flatnonzero(np.any(w != 0, axis=1))
        centers = lo + (live + 0.5) * width
        nodes = np.clip(centers[:, None] + 0.5 * width * _NODES[None, :], -1.0, 1.0)
        ll, lll = _pair_log_terms(d, s, nodes)
        return float(np.sum(w[live] * np.exp(ll))), float(np.sum(w[live] * np.exp(lll)))
    if method != "exact":
        raise ValueError(f"unknown method {method!r}")
    lo = 1.0 - EXP_CUTOFF / s
    s1 = s2 = 0.0
    for t in cache.iter_dots():
        if lo > -1.0:
            t = t[t >= lo]
        if t.size:
            ll, lll = _pair_log_terms(d, s, t)
            s1 += float(np.sum(np.exp(ll)))
            s2 += float(np.sum(np.exp(lll)))
    return s1, s2


def _check_h(h: float) -> float:
    h = float(h)
    if not h > 0 or np.isnan(h):
        raise ValueError(f"bandwidth must be > 0, got {h}")
    return h


def _cache_of(data) -> GramCache:
    return data if isinstance(data, GramCache) else GramCache.from_sample(data)


def _self_term(d: int, s: float) -> float:
    return float(np.exp(log_product_integral(d, s, s, 1.0)))


def cv_loss(cache, d: int | None = None, h: float = 1.0, method: str = "exact") -> float:
    """Exact least-squares cross-validation loss.

    ``method`` is "exact", "binned" or "auto" (binned whenever the interpolation
    error is negligible). ``h = inf`` returns the uniform limit -1/omega_d.
    """
    cache = _cache_of(cache)
    d = cache.d if d is None else int(d)
    if d != cache.d:
        raise ValueError(f"sample lives on S^{cache.d}, not S^{d}")
    n = cache.n
    if n < 2:
        raise ValueError("cross-validation needs n >= 2")
    if np.isinf(h):
        return float(-np.exp(log_product_integral(d, 0.0, 0.0, 1.0)))
    h = _check_h(h)
    s = 1.0 / h ** 2
    sl, sll = pair_sums(cache, h, method)
    return _self_term(d, s) / n - 2.0 / n ** 2 * (2.0 * n / (n - 1) * sl - sll)


def cv_ustat(cache, h: float, method: str = "exact") -> float:
    """U-statistic form c(s)^2/(n c(2s)) + (2/(n(n-1))) sum_{i<j} [(L*L)_h - 2 L_h].

    Its expectation is MISE(h) - R(f) + p'Psi2(h)p/n.
    """
    cache = _cache_of(cache)
    n = cache.n
    if n < 2:
        raise ValueError("cross-validation needs n >= 2")
    h = _check_h(h)
    sl, sll = pair_sums(cache, h, method)
    return _self_term(cache.d, 1.0 / h ** 2) / n + 2.0 / (n * (n - 1)) * (sll - 2.0 * sl)


def cv_curve(cache, d: int | None = None, h_grid=(), method: str = "exact") -> np.ndarray:
    cache = _cache_of(cache)
    return np.array([cv_loss(cache, d, h, method) for h in np.atleast_1d(h_grid)])


# ---------------------------------------------------------------- kernels and convolutions

def kernel_L(d: int, h: float, t):
    """L_h(x, y) = c(1/h^2) exp((t - 1)/h^2 + 1/h^2) as a function of t = x'y."""
    s = 1.0 / _check_h(h) ** 2
    a, _ = log_c_vmf_split(d, s)
    return np.exp(a + s * (np.asarray(t, dtype=float) - 1.0))


def kernel_G(d: int, h: float, t):
    """Normalized derivative kernel G_h(x, y) = (1 - t) L_h(x, y) / (1 - A_d(1/h^2))."""
    s = 1.0 / _check_h(h) ** 2
    t = np.asarray(t, dtype=float)
    return (1.0 - t) * kernel_L(d, h, t) / (1.0 - mean_resultant_length(d, s))


def log_c_g(d: int, h: float) -> tuple[float, float]:
    """(log|c_{d,G}(h)|, sign) for the profile G(r) = -r e^{-r}."""
    s = 1.0 / _check_h(h) ** 2
    a, _ = log_c_vmf_split(d, s)
    # 1/c_G = -s e^{-s} (1 - A_d(s)) / c_d(s)
    log_abs = a - np.log(s) - np.log1p(-mean_resultant_length(d, s))
    return float(log_abs), -1.0


def conv_LL(d: int, h: float, t):
    """(L_h * L_h)(x, y) = c(1/h^2)^2 / c(||x + y||/h^2)."""
    s = 1.0 / _check_h(h) ** 2
    return np.exp(log_product_integral(d, s, s, t))


def conv_GL(d: int, h: float, t):
    """(G_h * L_h)(x, y) = (L_h * L_h)(x, y) [1 - (a/(2s)) A_d(a)] / [1 - A_d(s)], a = s||x + y||."""
    s = 1.0 / _check_h(h) ** 2
    t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
    rho = np.sqrt(2.0 + 2.0 * t)
    a = s * rho
    num = 1.0 - 0.5 * rho * mean_resultant_length(d, a)
    return conv_LL(d, h, t) * num / (1.0 - mean_resultant_length(d, s))


def mu1_estimate(truth: VmfMixture, d: int | None = None, h: float = 0.1, M_mc: int = 100_000,
                 rng: np.random.Generator | None = None, return_se: bool = False):
    """Monte Carlo value of the variance functional of the CV derivative at h.

    Averages the squared combination (L*L - G*L - L + G)(X, Y) over X, Y drawn
    independently from the truth, rescaled by 16 s^3 (1 - A_d(s))^2, s = 1/h^2.
    """
    d = truth.d if d is None else int(d)
    rng = np.random.default_rng(0) if rng is None else rng
    h = _check_h(h)
    s = 1.0 / h ** 2
    scale = 16.0 * s ** 3 * (1.0 - mean_resultant_length(d, s)) ** 2
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < M_mc:
        m = min(200_000, M_mc - done)
        x = sample(truth, m, rng).points
        y = sample(truth, m, rng).points
        t = np.clip(np.einsum("ij,ij->i", x, y), -1.0, 1.0)
        v = (conv_LL(d, h, t) - conv_GL(d, h, t) - kernel_L(d, h, t) + kernel_G(d, h, t)) ** 2
        total += v.sum()
        total_sq += (v * v).sum()
        done += m
    mean = total / M_mc
    val = scale * mean
    if return_se:
        var = max(total_sq / M_mc - mean * mean, 0.0)
        return val, scale * np.sqrt(var / M_mc)
    return val


__all__ = [
    "GramCache", "cv_loss", "cv_ustat", "cv_curve", "pair_sums", "kernel_L",
    "kernel_G", "log_c_g", "conv_LL", "conv_GL", "mu1_estimate",
]
