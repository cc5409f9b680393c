"""Quadrature rules: exactness, positivity, normalization."""

from __future__ import annotations

from math import factorial

import numpy as np
import pytest

from dpfem.quadrature import MAX_DEGREE, facet_rule, interval_average, simplex_rule


def _exact_monomial_2d(a: int, b: int) -> float:
    # int over reference triangle of x^a y^b
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def _exact_monomial_3d(a: int, b: int, c: int) -> float:
    return factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3)


@pytest.mark.parametrize("degree", [0, 1, 2, 3, 5, 8, 10, 12])
def test_triangle_rule_exactness(degree):
    rule = simplex_rule(2, degree)
    x, y = rule.points[:, 0], rule.points[:, 1]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            got = rule.weights @ (x**a * y**b)
            assert got == pytest.approx(_exact_monomial_2d(a, b), rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("degree", [0, 1, 2, 3, 4, 6, 8])
def test_tetrahedron_rule_exactness(degree):
    rule = simplex_rule(3, degree)
    x, y, z = rule.points.T
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            for c in range(degree + 1 - a - b):
                got = rule.weights @ (x**a * y**b * z**c)
                assert got == pytest.approx(
                    _exact_monomial_3d(a, b, c), rel=1e-12, abs=1e-15
                )


@pytest.mark.parametrize("dim,measure", [(2, 0.5), (3, 1.0 / 6.0)])
def test_weights_positive_and_normalized(dim, measure):
    for degree in (1, 4, 9):
        rule = simplex_rule(dim, degree)
        assert np.all(rule.weights > 0)
        assert rule.weights.sum() == pytest.approx(measure, rel=1e-14)


def test_barycentric_coordinates():
    rule = simplex_rule(2, 4)
    lam = rule.barycentric
    assert lam.shape == (rule.npoints, 3)
    np.testing.assert_allclose(lam.sum(axis=1), 1.0, atol=1e-14)
    assert np.all(lam > -1e-14)
    np.testing.assert_allclose(lam[:, 1:], rule.points)


def test_rules_are_cached():
    assert simplex_rule(2, 6) is simplex_rule(2, 6)
    assert facet_rule(1, 4) is facet_rule(1, 4)


def test_facet_rule_computes_means():
    # 1D facet (edge of a triangle): mean of s^k over [0,1] is 1/(k+1)
    rule = facet_rule(1, 6)
    assert rule.weights.sum() == pytest.approx(1.0, rel=1e-14)
    s = rule.points[:, 0]
    for k in range(7):
        assert rule.weights @ s**k == pytest.approx(1.0 / (k + 1), rel=1e-13)

    # 2D facet (face of a tet): mean over the reference triangle
    rule = facet_rule(2, 5)
    assert rule.weights.sum() == pytest.approx(1.0, rel=1e-14)
    x, y = rule.points.T
    for a in range(6):
        for b in range(6 - a):
            mean = _exact_monomial_2d(a, b) / 0.5
            assert rule.weights @ (x**a * y**b) == pytest.approx(mean, rel=1e-12)


def test_interval_average_exponential():
    exact = (1.0 - np.exp(-0.01)) / 0.01
    # 2-point Gauss truncation error for this integrand sits near 2e-12
    got = interval_average(lambda t: np.exp(-t), 0.0, 0.01, degree=3)
    assert got == pytest.approx(exact, rel=1e-10)
    assert interval_average(lambda t: np.exp(-t), 0.0, 0.01, degree=9) == pytest.approx(
        exact, rel=1e-15
    )


def test_interval_average_polynomial_exact():
    # degree-5 rule integrates t^5 exactly: mean over [1, 3] is (3^6-1)/ (6*2)
    got = interval_average(lambda t: t**5, 1.0, 3.0, degree=5)
    assert got == pytest.approx((3.0**6 - 1.0) / 12.0, rel=1e-14)


def test_degree_out_of_range_rejected():
    with pytest.raises(ValueError):
        simplex_rule(2, MAX_DEGREE + 1)
    with pytest.raises(ValueError):
        simplex_rule(2, -1)
