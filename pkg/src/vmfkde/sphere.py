"""Points on S^d, uniform sampling, tangent frames and oracle quadrature."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

NORM_TOL = 1e-3


class DataError(ValueError):
    """Raised for malformed or invalid input data."""


@dataclass(frozen=True)
class UnitVector:
    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float).ravel()
        nrm = np.linalg.norm(c)
        if c.size < 2 or not np.isfinite(nrm) or nrm == 0:
            raise ValueError("a unit vector needs at least 2 finite, non-zero coordinates")
        object.__setattr__(self, "coords", c / nrm)

    @property
    def d(self) -> int:
        return self.coords.size - 1


@dataclass(frozen=True)
class SphericalSample:
    """n points on S^d stored as an (n, d+1) array of unit rows."""

    points: np.ndarray
    d: int

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.points, dtype=float))
        if x.shape[0] < 1:
            raise ValueError("a sample needs at least one point")
        if x.shape[1] != self.d + 1:
            raise ValueError(f"points have {x.shape[1]} columns, expected d+1={self.d + 1}")
        nrm = np.linalg.norm(x, axis=1, keepdims=True)
        if np.any(~np.isfinite(nrm)) or np.any(nrm == 0):
            raise ValueError("sample contains zero or non-finite rows")
        object.__setattr__(self, "points", x / nrm)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.n


def as_sample(points, d: int | None = None) -> SphericalSample:
    if isinstance(points, SphericalSample):
        return points
    x = np.atleast_2d(np.asarray(points, dtype=float))
    return SphericalSample(x, x.shape[1] - 1 if d is None else d)


def sample_uniform(d: int, n: int, rng: np.random.Generator) -> SphericalSample:
    """i.i.d. uniform points on S^d via normalized Gaussians."""
    z = rng.standard_normal((n, d + 1))
    return SphericalSample(z, d)


def tangent_frame(x) -> np.ndarray:
    """(d+1) x d matrix B with orthonormal columns spanning the complement of x.

    Built from the Householder reflection that sends e_1 to -x (or x), so its
    remaining columns are an orthonormal basis of x's orthogonal complement.
    """
    x = np.asarray(x.coords if isinstance(x, UnitVector) else x, dtype=float)
    x = x / np.linalg.norm(x)
    p = x.size
    e1 = np.zeros(p)
    e1[0] = 1.0
    v = x + e1 if x[0] >= 0 else x - e1
    h = np.eye(p) - 2.0 * np.outer(v, v) / (v @ v)
    return h[:, 1:]


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def quadrature(d: int, m: int | tuple[int, int] = 512) -> QuadratureRule:
    """Oracle rules: equispaced angles on S^1, Gauss-Legendre x trapezoid on S^2."""
    if d == 1:
        m = int(m)
        th = 2.0 * np.pi * np.arange(m) / m
        nodes = np.column_stack([np.cos(th), np.sin(th)])
        return QuadratureRule(nodes, np.full(m, 2.0 * np.pi / m))
    if d == 2:
        if np.isscalar(m):
            m_theta, m_phi = int(m), 2 * int(m)
        else:
            m_theta, m_phi = (int(v) for v in m)
        z, wz = np.polynomial.legendre.leggauss(m_theta)
        phi = 2.0 * np.pi * np.arange(m_phi) / m_phi
        zz, pp = np.meshgrid(z, phi, indexing="ij")
        r = np.sqrt(1.0 - zz ** 2)
        nodes = np.column_stack([(r * np.cos(pp)).ravel(), (r * np.sin(pp)).ravel(), zz.ravel()])
        w = np.outer(wz, np.full(m_phi, 2.0 * np.pi / m_phi)).ravel()
        return QuadratureRule(nodes, w)
    raise ValueError(f"quadrature is only available for d in {{1, 2}}, got d={d}")


def load_sample_csv(path) -> SphericalSample:
    """Read a sample with header x0,...,xd; rows are renormalized after validation."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        expected = [f"x{i}" for i in range(len(header))]
        if len(header) < 2 or header != expected:
            raise DataError(f"{path}: header must be x0,...,xd, got {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric value") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    x = np.asarray(rows)
    nrm = np.linalg.norm(x, axis=1)
    bad = np.flatnonzero(~np.isfinite(nrm) | (np.abs(nrm - 1.0) > NORM_TOL))
    if bad.size:
        raise DataError(f"{path}: row {bad[0] + 2} has norm {nrm[bad[0]]:.6g}, not a unit vector")
    return SphericalSample(x, x.shape[1] - 1)


def save_sample_csv(sample: SphericalSample, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(sample.d + 1)])
        for row in sample.points:
            w.writerow([repr(float(v)) for v in row])

