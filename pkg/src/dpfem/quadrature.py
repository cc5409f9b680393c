"""Quadrature rules on reference simplices and time intervals.

Simplex rules are conical products of Gauss-Jacobi rules (the collapsed
coordinate construction), which gives positive weights and exactness for any
requested polynomial degree.  Points are returned in Cartesian coordinates of
the reference simplex; weights sum to the reference measure (1/2 for the
triangle, 1/6 for the tetrahedron).  Facet rules are normalized so that the
weights sum to 1, i.e. they compute facet *means* that the caller scales by
the physical facet measure.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

#: Largest polynomial degree a rule will be built for.
MAX_DEGREE = 30


@dataclass(frozen=True)
class QuadRule:
    """A quadrature rule on a reference simplex.

    Attributes
    ----------
    dim : int
        Dimension of the reference simplex (1, 2 or 3).
    degree : int
        Polynomial degree integrated exactly.
    points : ndarray, shape (nq, dim)
        Quadrature points in reference Cartesian coordinates.
    weights : ndarray, shape (nq,)
        Quadrature weights.
    """

    dim: int
    degree: int
    points: np.ndarray
    weights: np.ndarray

    @property
    def npoints(self) -> int:
        return self.weights.size

    @property
    def barycentric(self) -> np.ndarray:
        """Points as barycentric coordinates, shape (nq, dim + 1)."""
        lam0 = 1.0 - self.points.sum(axis=1)
        return np.column_stack([lam0, self.points])


def _check_degree(degree: int) -> int:
    degree = int(degree)
    if degree < 0 or degree > MAX_DEGREE:
        raise ValueError(
            f"quadrature degree must be in [0, {MAX_DEGREE}], got {degree}"
        )
    return degree


def _gauss_legendre_01(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [0, 1]."""
    t, w = roots_legendre(npts)
    return 0.5 * (1.0 + t), 0.5 * w


def _gauss_jacobi_01(npts: int, alpha: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Jacobi nodes/weights on [0, 1] for the weight (1 - x)**alpha."""
    t, w = roots_jacobi(npts, alpha, 0.0)
    return 0.5 * (1.0 + t), w / 2.0 ** (alpha + 1)


def _freeze(rule: QuadRule) -> QuadRule:
    rule.points.setflags(write=False)
    rule.weights.setflags(write=False)
    return rule


@lru_cache(maxsize=None)
def simplex_rule(dim: int, degree: int) -> QuadRule:
    """Quadrature rule of the given degree on the reference simplex.

    Parameters
    ----------
    dim : int
        1 (interval [0,1]), 2 (triangle) or 3 (tetrahedron).
    degree : int
        Polynomial degree to integrate exactly; at most ``MAX_DEGREE``.
    """
    degree = _check_degree(degree)
    npts = max(1, (degree + 2) // 2)  # 2m - 1 >= degree

    if dim == 1:
        x, w = _gauss_legendre_01(npts)
        return _freeze(QuadRule(1, degree, x[:, None].copy(), w.copy()))

    if dim == 2:
        xi, u = _gauss_legendre_01(npts)
        eta, v = _gauss_jacobi_01(npts, 1)
        X, E = np.meshgrid(xi, eta, indexing="ij")
        pts = np.column_stack([(X * (1.0 - E)).ravel(), E.ravel()])
        wts = np.outer(u, v).ravel()
        return _freeze(QuadRule(2, degree, pts, wts))

    if dim == 3:
        xi, u = _gauss_legendre_01(npts)
        eta, v = _gauss_jacobi_01(npts, 1)
        zeta, s = _gauss_jacobi_01(npts, 2)
        X, E, Z = np.meshgrid(xi, eta, zeta, indexing="ij")
        pts = np.column_stack(
            [
                (X * (1.0 - E) * (1.0 - Z)).ravel(),
                (E * (1.0 - Z)).ravel(),
                Z.ravel(),
            ]
        )
        wts = np.einsum("i,j,k->ijk", u, v, s).ravel()
        return _freeze(QuadRule(3, degree, pts, wts))

    raise ValueError(f"unsupported simplex dimension {dim}")


@lru_cache(maxsize=None)
def facet_rule(dim_facet: int, degree: int) -> QuadRule:
    """Rule on the reference facet (interval or triangle), weights summing to 1.

    The returned rule computes means: the integral of g over a physical facet
    F is ``measure(F) * sum(w_q * g(x_q))``.
    """
    degree = _check_degree(degree)
    if dim_facet not in (1, 2):
        raise ValueError(f"unsupported facet dimension {dim_facet}")
    base = simplex_rule(dim_facet, degree)
    scale = 1.0 if dim_facet == 1 else 2.0
    return _freeze(QuadRule(dim_facet, degree, base.points.copy(), scale * base.weights))


def interval_average(f, t0: float, t1: float, degree: int = 5):
    """Mean value of ``f`` over [t0, t1] by Gauss quadrature.

    ``f`` may return scalars or arrays; the average is taken over the leading
    quadrature axis with broadcasting.
    """
    if not t1 > t0:
        raise ValueError(f"empty interval [{t0}, {t1}]")
    rule = simplex_rule(1, degree)
    times = t0 + (t1 - t0) * rule.points[:, 0]
    acc = None
    for w, t in zip(rule.weights, times):
        term = w * np.asarray(f(t), dtype=float)
        acc = term if acc is None else acc + term
    if acc.ndim == 0:
        return float(acc)
    return acc
