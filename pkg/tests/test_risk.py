import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar
from scipy.special import iv

from vmfkde.kde import kde
from vmfkde.risk import (IseEvaluator, RiskEvaluator, amise, build_risk_evaluator, exact_ise,
                         exact_mise, h_amise, is_ise, mise_at_infinity, v_vmf)
from vmfkde.sphere import quadrature
from vmfkde.specfun import log_c_vmf
from vmfkde.vmf import VmfMixture, curvature_functional, density, roughness, sample

S1 = quadrature(1, 2048)
S2 = quadrature(2, (96, 192))
E2 = np.array([1.0, 0.0])
E3 = np.array([1.0, 0.0, 0.0])


def circle_mixture():
    return VmfMixture(np.array([[1.0, 0.0], [-0.6, 0.8]]), [5.0, 2.0], [0.4, 0.6])


def quadrature_mise(truth, n, h):
    """MISE on S^1 from the kernel matrix: integrated variance plus squared bias."""
    s = 1 / h ** 2
    nodes, w = S1.nodes, S1.weights
    K = np.exp(log_c_vmf(1, s) + s * (nodes @ nodes.T))
    f = density(truth, nodes)
    mean = K @ (w * f)
    second = (K ** 2) @ (w * f)
    var = (second - mean ** 2) / n
    return float(np.sum(w * (var + (mean - f) ** 2)))


def test_psi0_special_cases():
    ev = build_risk_evaluator(VmfMixture.single(E3, 0.0), 10, B=256)
    assert ev.psi0[0, 0] == pytest.approx(1 / (4 * math.pi))
    mix = VmfMixture.single(E3, 5.0)
    assert build_risk_evaluator(mix, 10, B=256).psi0[0, 0] == pytest.approx(roughness(mix))


@pytest.mark.parametrize("truth", [VmfMixture.single(E2, 5.0), circle_mixture()])
@pytest.mark.parametrize("h", [0.15, 0.4, 1.0, 3.0])
def test_mise_matches_quadrature_on_circle(truth, h):
    ev = build_risk_evaluator(truth, 16, B=2 ** 14, rng=np.random.default_rng(3))
    assert exact_mise(ev, h) == pytest.approx(quadrature_mise(truth, 16, h), rel=2e-4)


def test_mise_matches_simulation():
    truth = VmfMixture.single(E2, 5.0)
    rng = np.random.default_rng(11)
    f = density(truth, S1.nodes)
    ises = np.empty(5000)
    for j in range(ises.size):
        m = kde(sample(truth, 16, rng), 0.5)
        fh = np.exp(m.log_evaluate_batch(S1.nodes))
        ises[j] = S1.integrate((fh - f) ** 2)
    ev = build_risk_evaluator(truth, 16, B=10_000, rng=rng)
    se = ises.std(ddof=1) / math.sqrt(ises.size)
    assert abs(exact_mise(ev, 0.5) - ises.mean()) < 3 * se


def test_mise_nonnegative_and_large_n_limit():
    ev = build_risk_evaluator(circle_mixture(), 10 ** 9, B=4096)
    for h in np.geomspace(0.02, 20, 15):
        assert exact_mise(ev, h) >= 0
    p = ev.truth.weights
    psi = ev.psi(0.3)
    isb = float(p @ (psi.psi2 - 2 * psi.psi1 + psi.psi0) @ p)
    assert exact_mise(ev, 0.3) == pytest.approx(isb, rel=1e-6)


def test_mise_smooth_in_h():
    ev = build_risk_evaluator(VmfMixture.single(np.array([1.0, 0, 0, 0]), 5.0), 500, B=10_000)
    hs = 0.05 * 1.01 ** np.arange(300)
    vals = np.array([ev.mise(h) for h in hs])
    # third log differences are O(step^3) for a smooth curve; re-draw jitter would be O(1e-2)
    assert np.abs(np.diff(np.log(vals), 3)).max() < 1e-4
    assert (np.abs(np.diff(vals)) / vals[:-1]).max() < 0.05


def test_psi2_quadratic_form_nonnegative(rng):
    mix = VmfMixture(np.stack([E3, -E3, np.array([0, 0, 1.0])]), [5.0, 5.0, 1.0], [0.2, 0.3, 0.5])
    ev = build_risk_evaluator(mix, 50, B=4096, rng=rng)
    psi2 = ev.psi(0.4).psi2
    np.testing.assert_array_equal(psi2, psi2.T)
    for _ in range(20):
        p = rng.dirichlet(np.ones(3))
        assert p @ psi2 @ p >= 0


def test_qmc_and_mc_agree():
    truth = VmfMixture.single(E3, 5.0)
    qmc_ev = build_risk_evaluator(truth, 100, B=2 ** 14, rng=np.random.default_rng(0))
    mc_ev = build_risk_evaluator(truth, 100, B=200_000, rng=np.random.default_rng(1), sampling="mc")
    for h in (0.2, 0.5):
        assert qmc_ev.mise(h) == pytest.approx(mc_ev.mise(h), rel=1e-2)
    with pytest.raises(ValueError):
        build_risk_evaluator(truth, 100, sampling="grid")


def test_bad_inputs():
    ev = build_risk_evaluator(VmfMixture.single(E3, 5.0), 10, B=256)
    for h in (0.0, -0.1):
        with pytest.raises(ValueError):
            exact_mise(ev, h)
    with pytest.raises(ValueError):
        RiskEvaluator(VmfMixture.single(E3, 5.0), 0, np.zeros((1, 4, 3)))


def test_mise_at_infinity():
    assert mise_at_infinity(VmfMixture.single(E3, 0.0)) == 0.0
    mix = VmfMixture.single(E3, 5.0)
    assert mise_at_infinity(mix) == pytest.approx(roughness(mix) - 1 / (4 * math.pi))
    quad = S2.integrate((1 / (4 * math.pi) - density(mix, S2.nodes)) ** 2)
    assert mise_at_infinity(mix) == pytest.approx(quad, abs=1e-6)
    ev = build_risk_evaluator(mix, 10, B=256)
    assert ev.mise(math.inf) == mise_at_infinity(mix)


def test_amise_minimizer():
    res = minimize_scalar(lambda h: amise(2, 1000, 1.0, h), bounds=(1e-3, 2), method="bounded",
                          options={"xatol": 1e-12})
    assert res.x == pytest.approx(h_amise(2, 1000, 1.0), rel=1e-6)
    assert h_amise(2, 1000, 0.0) == math.inf


def test_h_amise_end_to_end():
    k = 5.0
    # curvature of a vMF on S^2 with raw scipy Bessels
    R = 2 * k ** 1.5 * (4 * iv(1.5, 2 * k) + 4 * k * iv(2.5, 2 * k)) / (2 ** 4 * math.pi ** 1.5 * iv(0.5, k) ** 2)
    v = 1 / (4 * math.pi)
    expected = (2 * v / (4 * 0.25 * R)) ** (1 / 6) * 1000 ** (-1 / 6)
    got = h_amise(2, 1000, curvature_functional(VmfMixture.single(E3, k)))
    assert got == pytest.approx(expected, rel=1e-10)
    assert v_vmf(2) == pytest.approx(v)


def test_exact_ise_matches_quadrature():
    truth = VmfMixture.single(E2, 5.0)
    pts = np.array([[1.0, 0.0], [0.6, 0.8], [0.0, -1.0]])
    m = kde(pts, 0.7)
    fh = np.exp(m.log_evaluate_batch(S1.nodes))
    quad = S1.integrate((fh - density(truth, S1.nodes)) ** 2)
    assert exact_ise(m, truth) == pytest.approx(quad, abs=1e-6)


def test_ise_degenerate_cases(rng):
    uni = VmfMixture.single(E3, 0.0)
    m = kde(sample(uni, 5, rng), math.inf)
    assert exact_ise(m, uni) == 0.0
    assert is_ise(m, uni) == 0.0
    truth = VmfMixture.single(E3, 5.0)
    for h in (0.1, 1.0, 10.0):
        assert exact_ise(kde(sample(truth, 20, rng), h), truth) >= 0


def test_is_ise_matches_exact(rng):
    truth = VmfMixture.single(E3, 5.0)
    m = kde(sample(truth, 50, rng), 0.4)
    val, se = is_ise(m, truth, B=10_000, rng=rng, return_se=True)
    assert val >= 0
    assert abs(val - exact_ise(m, truth)) < 3 * se


def test_ise_evaluator_paths_agree(rng):
    truth = VmfMixture.single(E3, 5.0)
    x = sample(truth, 300, rng).points
    exact = IseEvaluator(x, truth, method="exact")
    sampled = IseEvaluator(x, truth, method="is", B=100_000, rng=rng)
    for h in (0.15, 0.3, 0.6):
        assert sampled(h) == pytest.approx(exact(h), rel=0.05)
    with pytest.raises(ValueError):
        exact_ise(kde(np.tile(E3, (3000, 1)), 0.5), truth)
