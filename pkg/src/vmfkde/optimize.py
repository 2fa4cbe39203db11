"""Grid-then-refine bandwidth minimization and the bandwidth selectors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import minimize_scalar

from .cv import GramCache, cv_loss
from .risk import (IseEvaluator, RiskEvaluator, amise, build_risk_evaluator, h_amise,
                   mise_at_infinity)
from .sphere import as_sample
from .vmf import VmfMixture, curvature_functional, fit_em

CV_GRID = 0.005 + 0.025 * np.arange(23)
MISE_FACTORS = np.round(np.arange(0.5, 2.0 + 1e-9, 0.05), 10)


class Method(str, Enum):
    CV = "CV"
    AMI = "AMI"
    EMI = "EMI"
    MISE_ORACLE = "MISE_ORACLE"
    ISE_ORACLE = "ISE_ORACLE"


@dataclass
class Trace:
    grid: np.ndarray
    values: np.ndarray
    grid_winner: float
    iterations: int = 0
    converged: bool = True
    expanded: bool = False


@dataclass
class SelectorResult:
    h: float
    criterion_value: float
    method: Method | str = ""
    trace: Trace | None = None
    boundary_flag: bool = False
    info: dict = field(default_factory=dict)

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.h)

    def to_dict(self) -> dict:
        out = {
            "h": None if self.is_infinite else self.h,
            "h_is_infinite": self.is_infinite,
            "criterion_value": self.criterion_value,
            "method": getattr(self.method, "value", self.method),
            "boundary_flag": self.boundary_flag,
        }
        if self.trace is not None:
            out["trace"] = {
                "grid_winner": self.trace.grid_winner,
                "iterations": self.trace.iterations,
                "converged": self.trace.converged,
                "expanded": self.trace.expanded,
            }
        out.update(self.info)
        return out


def _eval(criterion, h: float) -> float:
    v = float(criterion(h))
    if math.isnan(v):
        raise ValueError(f"criterion returned NaN at h={h!r}")
    return v


def minimize_1d(criterion, grid, rel_tol: float = 1e-8, method: Method | str = "",
                infinity_value: float | None = None) -> SelectorResult:
    """Minimize a criterion over h > 0: best grid node, then bounded Brent refinement.

    A winner at either end of the grid widens the bracket once by a factor 2 on
    that side and sets ``boundary_flag``. When ``infinity_value`` is given, h = inf
    is a candidate with that criterion value.
    """
    grid = np.sort(np.asarray(grid, dtype=float).ravel())
    if grid.size == 0:
        raise ValueError("empty bandwidth grid")
    if np.any(grid <= 0):
        raise ValueError("bandwidth grid must be positive")
    vals = np.array([_eval(criterion, h) for h in grid])
    k = int(np.argmin(vals))
    best_h, best_v = float(grid[k]), float(vals[k])
    boundary = k == 0 or k == grid.size - 1
    lo = grid[k - 1] if k > 0 else grid[0] / 2.0
    hi = grid[k + 1] if k < grid.size - 1 else grid[-1] * 2.0
    trace = Trace(grid, vals, best_h, expanded=boundary)
    if hi > lo:
        res = minimize_scalar(lambda h: _eval(criterion, h), bounds=(lo, hi), method="bounded",
                              options={"xatol": rel_tol * best_h, "maxiter": 500})
        trace.iterations = int(res.nfev)
        trace.converged = bool(res.success)
        if res.fun <= best_v:
            best_h, best_v = float(res.x), float(res.fun)
    out = SelectorResult(best_h, best_v, method, trace, boundary)
    if infinity_value is not None and infinity_value <= best_v:
        out.h, out.criterion_value, out.boundary_flag = math.inf, float(infinity_value), True
    return out


# ---------------------------------------------------------------- selectors

def select_cv(sample, grid=None, rel_tol: float = 1e-8, method: str = "auto",
              cache: GramCache | None = None) -> SelectorResult:
    """Minimize the exact cross-validation loss (default grid 0.005, 0.030, ..., 0.555)."""
    cache = GramCache.from_sample(as_sample(sample)) if cache is None else cache
    grid = CV_GRID if grid is None else grid
    return minimize_1d(lambda h: cv_loss(cache, None, h, method), grid, rel_tol, Method.CV)


def fit_plugin_model(sample, r: int = 1, rng: np.random.Generator | None = None) -> VmfMixture:
    return fit_em(as_sample(sample), r, rng=rng).mixture


def _curvature(mix: VmfMixture, B: int, rng) -> float:
    return curvature_functional(mix, B=B, rng=rng)


def select_ami(sample, r: int = 1, rng: np.random.Generator | None = None, B: int = 10_000,
               model: VmfMixture | None = None) -> SelectorResult:
    """Plug-in AMISE bandwidth under a fitted vMF mixture (closed-form minimizer)."""
    smp = as_sample(sample)
    rng = np.random.default_rng(0) if rng is None else rng
    mix = fit_plugin_model(smp, r, rng) if model is None else model
    curv = _curvature(mix, B, rng)
    h = h_amise(smp.d, smp.n, curv)
    val = mise_at_infinity(mix) if math.isinf(h) else amise(smp.d, smp.n, curv, h)
    return SelectorResult(h, val, Method.AMI, None, math.isinf(h), {"curvature": curv})


def _mise_grid(truth: VmfMixture, n: int, B: int, rng, factors) -> np.ndarray | None:
    h0 = h_amise(truth.d, n, _curvature(truth, B, rng))
    if math.isinf(h0):
        return None
    return h0 * np.asarray(factors, dtype=float)


def _minimize_mise(ev: RiskEvaluator, grid, rel_tol: float, method) -> SelectorResult:
    inf_val = mise_at_infinity(ev.truth)
    if grid is None:
        return SelectorResult(math.inf, inf_val, method, None, True)
    return minimize_1d(ev.mise, grid, rel_tol, method, infinity_value=inf_val)


def select_mise_oracle(truth: VmfMixture, n: int, B: int = 10_000,
                       rng: np.random.Generator | None = None, evaluator: RiskEvaluator | None = None,
                       factors=MISE_FACTORS, rel_tol: float = 1e-8) -> SelectorResult:
    """Minimizer of the exact MISE on the grid {c * h_AMISE}, with h = inf as a candidate."""
    rng = np.random.default_rng(0) if rng is None else rng
    ev = build_risk_evaluator(truth, n, B, rng) if evaluator is None else evaluator
    res = _minimize_mise(ev, _mise_grid(truth, n, B, rng, factors), rel_tol, Method.MISE_ORACLE)
    res.info["evaluator"] = ev
    return res


def select_emi(sample, r: int = 1, rng: np.random.Generator | None = None, B: int = 10_000,
               base_uniforms: np.ndarray | None = None, factors=MISE_FACTORS,
               rel_tol: float = 1e-8, model: VmfMixture | None = None) -> SelectorResult:
    """Exact-MISE plug-in: the MISE oracle evaluated at a fitted vMF mixture.

    Passing the oracle's ``base_uniforms`` makes both use common random numbers.
    """
    smp = as_sample(sample)
    rng = np.random.default_rng(0) if rng is None else rng
    mix = fit_plugin_model(smp, r, rng) if model is None else model
    ev = build_risk_evaluator(mix, smp.n, B, rng, base_uniforms=base_uniforms)
    res = _minimize_mise(ev, _mise_grid(mix, smp.n, B, rng, factors), rel_tol, Method.EMI)
    res.info["model"] = mix
    return res


def select_ise_oracle(sample, truth: VmfMixture, grid=None, B: int = 10_000,
                      rng: np.random.Generator | None = None, rel_tol: float = 1e-8,
                      evaluator: IseEvaluator | None = None) -> SelectorResult:
    """Minimizer of the realized ISE (exact for small n, importance sampled otherwise)."""
    smp = as_sample(sample)
    rng = np.random.default_rng(0) if rng is None else rng
    ev = IseEvaluator(smp.points, truth, B=B, rng=rng) if evaluator is None else evaluator
    if grid is None:
        grid = _mise_grid(truth, smp.n, B, rng, MISE_FACTORS)
    inf_val = mise_at_infinity(truth)
    if grid is None:
        return SelectorResult(math.inf, inf_val, Method.ISE_ORACLE, None, True)
    return minimize_1d(ev, grid, rel_tol, Method.ISE_ORACLE, infinity_value=inf_val)
