import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from vmfkde.kde import KdeModel, evaluate, evaluate_batch, kde
from vmfkde.sphere import quadrature, sample_uniform
from vmfkde.specfun import log_c_vmf
from vmfkde.vmf import VmfMixture, sample

S1 = quadrature(1, 2048)
S2 = quadrature(2, (128, 256))


def test_single_point_mode():
    x = np.array([[0.0, 1.0, 0.0]])
    h = 0.6
    s = 1 / h ** 2
    assert evaluate(kde(x, h), x[0]) == pytest.approx(math.exp(log_c_vmf(2, s) + s), rel=1e-12)


def test_infinite_bandwidth_is_uniform(rng):
    m = kde(sample_uniform(2, 5, rng), math.inf)
    assert m.is_uniform
    np.testing.assert_allclose(evaluate_batch(m, S2.nodes[:7]), 1 / (4 * math.pi))


def test_antipodal_circle():
    x = np.array([[1.0, 0.0], [-1.0, 0.0]])
    c = 1 / (2 * math.pi * float(mpmath.besseli(0, 1)))
    assert evaluate(kde(x, 1.0), x[0]) == pytest.approx(0.5 * (c * math.e + c / math.e), rel=1e-12)


def test_batch_matches_single(rng):
    m = kde(sample_uniform(3, 40, rng), 0.3)
    pts = sample_uniform(3, 3, rng).points
    batch = evaluate_batch(m, pts)
    for p, v in zip(pts, batch):
        assert evaluate(m, p) == v


def test_invalid_bandwidth(rng):
    for h in (0.0, -1.0, float("nan")):
        with pytest.raises(ValueError):
            KdeModel(sample_uniform(2, 3, rng), h)


@pytest.mark.parametrize("h", [0.2, 0.5, 1.0, 5.0])
def test_integrates_to_one(rng, h):
    x1 = sample(VmfMixture.single(np.array([1.0, 0.0]), 3.0), 25, rng)
    x2 = sample(VmfMixture.single(np.array([0.0, 0.0, 1.0]), 3.0), 25, rng)
    assert S1.integrate(evaluate_batch(kde(x1, h), S1.nodes)) == pytest.approx(1.0, abs=1e-6)
    assert S2.integrate(evaluate_batch(kde(x2, h), S2.nodes)) == pytest.approx(1.0, abs=1e-6)


@given(st.integers(0, 2 ** 31), st.floats(0.05, 20.0))
def test_nonnegative_and_permutation_invariant(seed, h):
    r = np.random.default_rng(seed)
    x = sample_uniform(2, 12, r).points
    pts = sample_uniform(2, 6, r).points
    a = evaluate_batch(kde(x, h), pts)
    b = evaluate_batch(kde(x[r.permutation(12)], h), pts)
    assert np.all(a >= 0)
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_large_concentration_no_overflow(rng):
    x = sample_uniform(2, 10, rng)
    v = evaluate_batch(kde(x, 1e-3), x.points)
    assert np.all(np.isfinite(v)) and np.all(v > 0)
