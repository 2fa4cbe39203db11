import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from vmfkde.sphere import (DataError, SphericalSample, UnitVector, load_sample_csv, quadrature,
                           sample_uniform, save_sample_csv, tangent_frame)
from vmfkde.specfun import log_c_vmf

vectors = arrays(float, st.integers(2, 6), elements=st.floats(-1, 1)).filter(
    lambda v: np.linalg.norm(v) > 1e-3)


def test_unit_vector_renormalized():
    u = UnitVector([3.0, 4.0])
    assert np.linalg.norm(u.coords) == pytest.approx(1.0, abs=1e-12)
    assert u.d == 1
    with pytest.raises(ValueError):
        UnitVector([0.0, 0.0])


def test_uniform_mean_small(rng):
    x = sample_uniform(2, 100_000, rng)
    assert np.linalg.norm(x.points.mean(axis=0)) < 0.02
    np.testing.assert_allclose(np.linalg.norm(x.points, axis=1), 1.0, atol=1e-12)


def test_uniform_circle_histogram(rng):
    x = sample_uniform(1, 100_000, rng).points
    counts, _ = np.histogram(np.arctan2(x[:, 1], x[:, 0]), bins=36)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_uniform_rotation_invariance(rng):
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    a = sample_uniform(2, 100_000, rng).points
    b = sample_uniform(2, 100_000, rng).points @ q.T
    axis = np.array([0.3, -0.2, 0.9]) / np.linalg.norm([0.3, -0.2, 0.9])
    assert stats.ks_2samp(a @ axis, b @ axis).pvalue > 1e-3


def test_tangent_frame_e1():
    B = tangent_frame(np.array([1.0, 0.0, 0.0]))
    assert B.shape == (3, 2)
    np.testing.assert_allclose(B[0], 0.0, atol=1e-15)


@given(vectors)
def test_tangent_frame_identities(v):
    x = v / np.linalg.norm(v)
    B = tangent_frame(x)
    d = x.size - 1
    np.testing.assert_allclose(B.T @ B, np.eye(d), atol=1e-12)
    np.testing.assert_allclose(B @ B.T, np.eye(d + 1) - np.outer(x, x), atol=1e-12)
    np.testing.assert_allclose(x @ B, 0.0, atol=1e-12)


def test_quadrature_total_mass():
    assert quadrature(1, 512).weights.sum() == pytest.approx(2 * np.pi, abs=1e-12)
    assert quadrature(2, (64, 128)).weights.sum() == pytest.approx(4 * np.pi, abs=1e-10)
    with pytest.raises(ValueError):
        quadrature(3, 10)


def test_quadrature_vmf_normalization():
    rule = quadrature(2, (64, 128))
    mu = np.array([0.0, 0.6, 0.8])
    f = np.exp(log_c_vmf(2, 5.0) + 5.0 * rule.nodes @ mu)
    assert rule.integrate(f) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("deg", range(1, 9))
def test_quadrature_harmonics_vanish(deg):
    # zonal harmonics about a tilted axis and sectoral ones integrate to zero
    rule = quadrature(2, (64, 128))
    axis = np.array([0.48, 0.6, 0.64])
    axis /= np.linalg.norm(axis)
    p = np.polynomial.legendre.Legendre.basis(deg)(rule.nodes @ axis)
    x, y = rule.nodes[:, 0], rule.nodes[:, 1]
    sect = np.real((x + 1j * y) ** deg)
    assert abs(rule.integrate(p)) < 1e-8
    assert abs(rule.integrate(sect)) < 1e-8
    circ = quadrature(1, 64)
    assert abs(circ.integrate(np.cos(deg * np.arctan2(circ.nodes[:, 1], circ.nodes[:, 0])))) < 1e-10


def test_csv_roundtrip(tmp_path, rng):
    s = sample_uniform(3, 20, rng)
    p = tmp_path / "s.csv"
    save_sample_csv(s, p)
    back = load_sample_csv(p)
    assert back.d == 3 and back.n == 20
    np.testing.assert_allclose(back.points, s.points, atol=1e-15)


@pytest.mark.parametrize("text,fragment", [
    ("", "empty"),
    ("a,b\n1,0\n", "header"),
    ("x0,x1\n", "no data"),
    ("x0,x1\n1,0,0\n", "fields"),
    ("x0,x1\n1,abc\n", "non-numeric"),
    ("x0,x1\n1,1\n", "unit vector"),
])
def test_csv_validation(tmp_path, text, fragment):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(DataError, match=fragment):
        load_sample_csv(p)


def test_csv_missing(tmp_path):
    with pytest.raises(DataError):
        load_sample_csv(tmp_path / "nope.csv")


def test_sample_shape_checks():
    with pytest.raises(ValueError):
        SphericalSample(np.ones((3, 3)), 1)
