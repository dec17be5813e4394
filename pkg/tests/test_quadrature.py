from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from ulamfloat.errors import DomainError
from ulamfloat.functions import QuadraticFn
from ulamfloat.quadrature import (
    QuadratureSpec,
    gauss_legendre,
    integrate_1d,
    integrate_box,
    integrate_intervals,
    integrate_region,
    local_frame,
    star_integrate,
)


def test_gauss_legendre_exact_for_polynomials():
    nodes, weights = gauss_legendre(5)
    for k in range(10):
        assert np.sum(weights * nodes**k) == pytest.approx(1 / (k + 1), rel=1e-13)


@given(st.floats(-3, 3), st.floats(0.1, 4))
@settings(max_examples=30, deadline=None)
def test_integrate_1d_matches_scipy(a, width):
    f = lambda t: np.exp(-t * t) * np.cos(3 * t)  # noqa: E731
    value, err = integrate_1d(f, a, a + width)
    ref, _ = integrate.quad(lambda t: math.exp(-t * t) * math.cos(3 * t), a, a + width, epsabs=1e-14, epsrel=1e-13)
    assert value == pytest.approx(ref, abs=1e-11)


def test_circular_segment_integral():
    value, _ = integrate_1d(lambda t: np.sqrt(2 * t - t * t), 0.0, 0.1)
    # substitute u = 1 - t: antiderivative of sqrt(1 - u^2) is (u sqrt(1 - u^2) + asin u) / 2
    prim = lambda u: 0.5 * (u * math.sqrt(1 - u * u) + math.asin(u))  # noqa: E731
    assert value == pytest.approx(prim(1.0) - prim(0.9), abs=1e-12)
    assert value == pytest.approx(0.0293630, abs=5e-8)


def test_gaussian_on_coercivity_box():
    from ulamfloat.functions import coercivity_box

    R = coercivity_box(QuadraticFn(np.eye(1)), 1e-10)
    value, _ = integrate_1d(lambda x: np.exp(-0.5 * x * x), -R, R)
    assert value == pytest.approx(math.sqrt(2 * math.pi), abs=1e-8)


def test_integrate_intervals_batched_columns():
    lo = np.array([0.0, 1.0, -2.0])
    hi = np.array([1.0, 3.0, 2.0])

    def integrand(owner, t):
        return np.column_stack([t**2, np.sin(t)])

    values, errors, ok = integrate_intervals(integrand, lo, hi)
    assert np.all(ok)
    np.testing.assert_allclose(values[:, 0], (hi**3 - lo**3) / 3, rtol=1e-12)
    np.testing.assert_allclose(values[:, 1], np.cos(lo) - np.cos(hi), atol=1e-12)


def test_integrate_intervals_per_owner_tolerance():
    lo, hi = np.zeros(2), np.ones(2)
    values, _, ok = integrate_intervals(lambda o, t: np.sqrt(t), lo, hi, rel_tol=np.array([1e-4, 1e-10]))
    assert np.all(ok)
    assert abs(values[1] - 2 / 3) < 1e-9


def test_integrate_box_gaussian():
    value, err = integrate_box(lambda x: np.exp(-0.5 * np.sum(x**2, axis=1)), [-8, -8], [8, 8])
    assert value == pytest.approx(2 * math.pi, rel=1e-10)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_integrate_region_ellipsoid_volume(n):
    A = np.diag(np.arange(1.0, n + 1))
    q = QuadraticFn(A)
    value, _ = integrate_region(lambda x: np.ones(len(x)), q, 0.5)
    expected = math.pi ** (n / 2) / math.gamma(n / 2 + 1) / math.sqrt(np.prod(np.diag(A)))
    assert value == pytest.approx(expected, rel=1e-9)


def test_integrate_region_rejects_dimension():
    with pytest.raises(DomainError):
        integrate_region(lambda x: np.ones(len(x)), QuadraticFn(np.eye(4)), 1.0)


def test_star_integrate_area_and_moment():
    centers = np.array([[0.0, 0.0], [1.0, -1.0]])
    radii = np.array([1.0, 2.0])

    def boundary(owner, x):
        return np.sum((x - centers[owner]) ** 2, axis=1)

    def integrand(owner, x):
        return (x - centers[owner])[:, 0] ** 2

    res = star_integrate(boundary, integrand, centers, radii**2, radius_guess=radii)
    assert np.all(res.converged)
    np.testing.assert_allclose(res.area, math.pi * radii**2, rtol=1e-10)
    np.testing.assert_allclose(res.values[:, 0], math.pi * radii**4 / 4, rtol=1e-9)
    np.testing.assert_allclose(res.base_moment, 0.0, atol=1e-10)


def test_local_frame_whitens():
    H = np.array([[4.0, 1.0], [1.0, 2.0]])
    F = local_frame(H)
    np.testing.assert_allclose(F.T @ H @ F, np.eye(2), atol=1e-12)


def test_local_frame_zero_hessian_is_identity():
    np.testing.assert_allclose(local_frame(np.zeros((2, 2))), np.eye(2))


def test_quadrature_options_validation():
    with pytest.raises(DomainError):
        QuadratureSpec(rel_tol=0)
