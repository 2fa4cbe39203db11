"""Spherical kernel density estimator with the vMF kernel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .specfun import log_c_vmf_split, log_surface_area
from .sphere import SphericalSample, as_sample


@dataclass(frozen=True)
class KdeModel:
    """f_h(x) = (1/n) sum_i c(1/h^2) exp(x'X_i / h^2); ``h = inf`` is the uniform density."""

    sample: SphericalSample
    h: float

    def __post_init__(self):
        object.__setattr__(self, "sample", as_sample(self.sample))
        h = float(self.h)
        if not h > 0:
            raise ValueError(f"bandwidth must be > 0, got {self.h}")
        object.__setattr__(self, "h", h)

    @property
    def d(self) -> int:
        return self.sample.d

    @property
    def is_uniform(self) -> bool:
        return np.isinf(self.h)

    def log_evaluate_batch(self, points) -> np.ndarray:
        y = np.atleast_2d(np.asarray(points, dtype=float))
        if y.shape[1] != self.d + 1:
            raise ValueError(f"points must have {self.d + 1} columns")
        if self.is_uniform:
            return np.full(y.shape[0], -log_surface_area(self.d))
        s = 1.0 / self.h ** 2
        a, _ = log_c_vmf_split(self.d, s)
        x = self.sample.points
        out = np.empty(y.shape[0])
        step = max(1, 2_000_000 // x.size)
        for lo in range(0, y.shape[0], step):
            # elementwise dots: identical whatever the batch size
            t = np.einsum("ik,jk->ijk", y[lo:lo + step], x).sum(axis=2)
            out[lo:lo + step] = logsumexp(s * (t - 1.0), axis=1)
        return out + a - np.log(x.shape[0])


def evaluate_batch(model: KdeModel, points) -> np.ndarray:
    return np.exp(model.log_evaluate_batch(points))


def evaluate(model: KdeModel, x) -> float:
    return float(evaluate_batch(model, np.atleast_2d(x))[0])


def kde(sample, h: float) -> KdeModel:
    return KdeModel(as_sample(sample), h)
