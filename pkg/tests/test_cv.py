import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vmfkde.cv import (GramCache, conv_GL, conv_LL, cv_curve, cv_loss, cv_ustat, kernel_G,
                       kernel_L, log_c_g, mu1_estimate)
from vmfkde.kde import kde
from vmfkde.risk import build_risk_evaluator
from vmfkde.sphere import quadrature, sample_uniform
from vmfkde.specfun import log_c_vmf
from vmfkde.vmf import VmfMixture, sample

S1 = quadrature(1, 2048)
S2 = quadrature(2, (128, 256))
E2 = np.array([1.0, 0.0])
E3 = np.array([1.0, 0.0, 0.0])
THREE = np.array([[1.0, 0.0], [0.6, 0.8], [0.0, -1.0]])


def loo_definition(points, h):
    """int f_h^2 by quadrature minus (2/n) sum of leave-one-out values at the data."""
    n = points.shape[0]
    rule = S1 if points.shape[1] == 2 else S2
    fh = np.exp(kde(points, h).log_evaluate_batch(rule.nodes))
    loo = [np.exp(kde(np.delete(points, i, axis=0), h).log_evaluate_batch(points[i:i + 1]))[0]
           for i in range(n)]
    return rule.integrate(fh ** 2) - 2.0 / n * sum(loo)


def test_matches_leave_one_out_definition():
    assert cv_loss(GramCache.from_sample(THREE), 1, 0.7) == pytest.approx(loo_definition(THREE, 0.7), abs=1e-6)


@pytest.mark.parametrize("h", [0.2, 0.45, 1.3])
def test_matches_definition_on_s2(rng, h):
    x = sample(VmfMixture.single(E3, 3.0), 7, rng).points
    assert cv_loss(GramCache.from_sample(x), 2, h) == pytest.approx(loo_definition(x, h), abs=1e-6)


def test_permutation_invariance(rng):
    x = sample(VmfMixture.single(E3, 3.0), 40, rng).points
    a = cv_loss(GramCache.from_sample(x), 2, 0.3)
    b = cv_loss(GramCache.from_sample(x[rng.permutation(40)]), 2, 0.3)
    assert a == pytest.approx(b, rel=1e-12)


def test_large_bandwidth_limit(rng):
    x = sample(VmfMixture.single(E3, 3.0), 10, rng)
    assert cv_loss(GramCache.from_sample(x), 2, 1e3) == pytest.approx(-1 / (4 * math.pi), abs=1e-3)
    assert cv_loss(GramCache.from_sample(x), 2, math.inf) == pytest.approx(-1 / (4 * math.pi))


def test_curve_matches_pointwise(rng):
    cache = GramCache.from_sample(sample_uniform(3, 30, rng))
    hs = [0.1, 0.5, 2.0]
    np.testing.assert_array_equal(cv_curve(cache, 3, hs), [cv_loss(cache, 3, h) for h in hs])


def test_finite_and_continuous(rng):
    cache = GramCache.from_sample(sample(VmfMixture.single(E3, 5.0), 200, rng))
    hs = np.geomspace(1e-3, 1e3, 400)
    vals = cv_curve(cache, 2, hs)
    assert np.all(np.isfinite(vals))
    # a tiny step in h moves the value by a tiny amount, also across path switches
    nudged = cv_curve(cache, 2, hs * (1 + 1e-8))
    np.testing.assert_allclose(nudged, vals, rtol=1e-6, atol=1e-7)


@pytest.mark.parametrize("d", [1, 2, 5])
def test_binned_and_streamed_paths_agree(d):
    x = sample(VmfMixture.single(np.eye(d + 1)[0], 5.0), 1500, np.random.default_rng(d))
    full = GramCache.from_sample(x)
    streamed = GramCache.from_sample(x, cap=100)
    assert streamed.dots is None
    for h in (0.02, 0.1, 0.4, 2.0):
        exact = cv_loss(full, d, h, "exact")
        assert cv_loss(full, d, h, "auto") == pytest.approx(exact, rel=1e-9)
        assert cv_loss(streamed, d, h, "exact") == pytest.approx(exact, rel=1e-12)


def test_duplicates_and_errors():
    x = np.tile(E3, (5, 1))
    assert np.isfinite(cv_loss(GramCache.from_sample(x), 2, 0.3))
    with pytest.raises(ValueError):
        cv_loss(GramCache.from_sample(E3[None, :]), 2, 0.3)
    with pytest.raises(ValueError):
        cv_loss(GramCache.from_sample(x), 2, 0.0)
    with pytest.raises(ValueError):
        cv_loss(GramCache.from_sample(x), 3, 0.5)


def test_expectations_match_risk_identities():
    truth = VmfMixture.single(E2, 5.0)
    n, h = 16, 0.5
    rng = np.random.default_rng(5)
    loo, ustat = [], []
    for _ in range(2000):
        cache = GramCache.from_sample(sample(truth, n, rng))
        loo.append(cv_loss(cache, 1, h))
        ustat.append(cv_ustat(cache, h))
    ev = build_risk_evaluator(truth, n, B=2 ** 14, rng=rng)
    p = truth.weights
    psi = ev.psi(h)
    r_f = float(p @ psi.psi0 @ p)
    for vals, target in ((loo, ev.mise(h) - r_f),
                         (ustat, ev.mise(h) - r_f + float(p @ psi.psi2 @ p) / n)):
        vals = np.asarray(vals)
        assert abs(vals.mean() - target) < 3 * vals.std(ddof=1) / math.sqrt(vals.size)


# ---------------------------------------------------------------- kernels

def test_conv_ll_at_coincidence():
    h = 0.6
    s = 1 / h ** 2
    assert conv_LL(3, h, 1.0) == pytest.approx(math.exp(2 * log_c_vmf(3, s) - log_c_vmf(3, 2 * s)), rel=1e-12)


def quad_conv(kernel_a, kernel_b, d, h, t):
    rule = S1 if d == 1 else S2
    x = np.zeros(d + 1)
    x[0] = 1.0
    y = np.zeros(d + 1)
    y[0], y[1] = t, math.sqrt(1 - t * t)
    return rule.integrate(kernel_a(d, h, rule.nodes @ x) * kernel_b(d, h, rule.nodes @ y))


@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("h,t", [(0.8, 0.3), (0.3, -0.5), (1.5, 0.95)])
def test_convolutions_match_quadrature(d, h, t):
    assert conv_LL(d, h, t) == pytest.approx(quad_conv(kernel_L, kernel_L, d, h, t), abs=1e-6, rel=1e-9)
    assert conv_GL(d, h, t) == pytest.approx(quad_conv(kernel_G, kernel_L, d, h, t), abs=1e-6, rel=1e-9)


@given(st.floats(-1.0, 1.0), st.floats(0.05, 5.0))
def test_convolution_symmetric_in_arguments(t, h):
    # a function of t only; the closed form is bounded by the peak value
    v = conv_LL(2, h, t)
    assert 0 <= v <= conv_LL(2, h, 1.0) * (1 + 1e-12)


@pytest.mark.parametrize("h", [0.3, 0.8])
def test_convolution_marginals(h):
    x = np.array([0.0, 0.0, 1.0])
    t = S2.nodes @ x
    assert S2.integrate(conv_LL(2, h, t)) == pytest.approx(1.0, abs=1e-6)
    assert S2.integrate(conv_GL(2, h, t)) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("d,h", [(1, 0.8), (2, 0.5), (2, 1.7)])
def test_derivative_kernel_constant(d, h):
    rule = S1 if d == 1 else S2
    s = 1 / h ** 2
    r = (1 - rule.nodes[:, 0]) * s
    direct = rule.integrate(-r * np.exp(-r))
    log_abs, sign = log_c_g(d, h)
    assert sign == -1.0
    assert sign * math.exp(log_abs) == pytest.approx(1 / direct, rel=1e-6)
    # kernel_G is c_G * G((1 - t)/h^2)
    t = np.linspace(-1, 1, 9)
    np.testing.assert_allclose(kernel_G(d, h, t), sign * math.exp(log_abs) * -(1 - t) * s * np.exp(-(1 - t) * s),
                               rtol=1e-10, atol=1e-300)


def test_mu1_nonnegative_and_variance_halves():
    truth = VmfMixture.single(E3, 5.0)
    v1, se1 = mu1_estimate(truth, 2, 0.2, M_mc=40_000, rng=np.random.default_rng(1), return_se=True)
    v2, se2 = mu1_estimate(truth, 2, 0.2, M_mc=80_000, rng=np.random.default_rng(2), return_se=True)
    assert v1 >= 0 and v2 >= 0
    assert (se1 / se2) ** 2 == pytest.approx(2.0, rel=0.15)
    assert abs(v1 - v2) < 3 * math.hypot(se1, se2)
