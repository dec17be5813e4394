from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ulamfloat.errors import DomainError
from ulamfloat.functions import (
    CallableFn,
    ComposedFn,
    MaxAffineFn,
    PNormFn,
    PointwiseMaxFn,
    PointwiseMinFn,
    QuadraticFn,
    SlopeGrid,
    SmoothMaxAffineFn,
    TiltedFn,
    coercivity_box,
    conjugate_on_grid,
    epigraph_curvature,
    epigraph_normal,
    rolling_bound,
)

FAMILIES = [
    QuadraticFn([[2.0, 0.5], [0.5, 1.0]], [0.3, -0.2], 1.0),
    PNormFn(4.0, 1.0, 2),
    PNormFn(3.0, 2.0, 1),
    SmoothMaxAffineFn([[-1.0], [1.0]], [0.0, 0.0], beta=10.0, mu=0.1),
    ComposedFn(PNormFn(4.0, 1.0, 2), [[1.0, 0.5], [0.0, 1.0]]),
]


@pytest.mark.parametrize("psi", FAMILIES, ids=repr)
def test_gradient_matches_finite_difference(psi, rng):
    x = rng.normal(size=(5, psi.dim)) * 0.7
    h = 1e-6
    for i in range(psi.dim):
        e = np.zeros(psi.dim)
        e[i] = h
        fd = (psi.value(x + e) - psi.value(x - e)) / (2 * h)
        np.testing.assert_allclose(psi.gradient(x)[:, i], fd, rtol=1e-5, atol=1e-7)


@pytest.mark.parametrize("psi", FAMILIES, ids=repr)
def test_hessian_is_symmetric_psd(psi, rng):
    x = rng.normal(size=(5, psi.dim))
    H = psi.hessian(x)
    np.testing.assert_allclose(H, np.swapaxes(H, 1, 2), atol=1e-12)
    assert np.all(np.linalg.eigvalsh(H) >= -1e-9)


@pytest.mark.parametrize("psi", FAMILIES, ids=repr)
def test_argmin_is_stationary(psi):
    x, fx = psi.argmin()
    assert np.linalg.norm(psi.gradient(x)) < 1e-6
    assert fx == pytest.approx(float(psi.value(x)))


@pytest.mark.parametrize("psi", FAMILIES, ids=repr)
def test_conjugate_argmin_hits_slopes(psi, rng):
    ys = rng.normal(size=(6, psi.dim)) * 0.5
    c = psi.conjugate_argmin(ys)
    np.testing.assert_allclose(psi.gradient(c), ys, atol=1e-8)


@pytest.mark.parametrize("psi", FAMILIES, ids=repr)
def test_bregman_offset_matches_definition(psi, rng):
    c = rng.normal(size=(6, psi.dim)) * 0.5
    d = rng.normal(size=(6, psi.dim)) * 0.5
    y = psi.gradient(c)
    direct = psi.value(c + d) - psi.value(c) - np.sum(y * d, axis=1)
    np.testing.assert_allclose(psi.bregman_offset(c, d, y), direct, atol=1e-10)
    assert np.all(psi.bregman_offset(c, d, y) >= -1e-12)


def test_bregman_noise_zero_for_exact_families():
    q = QuadraticFn(np.eye(2))
    assert np.all(q.bregman_noise(np.ones((3, 2)), np.ones((3, 2))) == 0)
    assert ComposedFn(q, np.eye(2) * 2).bregman_exact
    s = SmoothMaxAffineFn([[-1.0], [1.0]], [0.0, 0.0])
    assert np.all(s.bregman_noise(np.array([[10.0]]), np.array([[1.0]])) > 0)


def test_key_determines_hash():
    a = QuadraticFn(np.eye(2), [1.0, 0.0])
    b = QuadraticFn(np.eye(2), [1.0, 0.0])
    c = QuadraticFn(np.eye(2), [1.0, 1e-12])
    assert a.hash() == b.hash()
    assert a.hash() != c.hash()


def test_quadratic_validation():
    with pytest.raises(DomainError):
        QuadraticFn([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(DomainError):
        QuadraticFn([[-1.0]])


def test_pnorm_validation():
    with pytest.raises(DomainError):
        PNormFn(1.0)


def test_max_affine_not_supercoercive():
    f = MaxAffineFn([[-1.0], [1.0]], [0.0, 0.0])
    assert not f.supercoercive
    assert f.value(np.array([[2.0]]))[0] == 2.0
    with pytest.raises(DomainError):
        TiltedFn(f, [0.5])


def test_tilted_minimum_moves_to_gradient_preimage():
    q = QuadraticFn([[2.0]])
    t = TiltedFn(q, [1.0])
    x, fx = t.argmin()
    assert x[0] == pytest.approx(0.5, abs=1e-9)
    assert fx == pytest.approx(-0.25, abs=1e-12)


def test_pointwise_min_and_max():
    a = QuadraticFn([[1.0]])
    b = QuadraticFn([[4.0]])
    lo, hi = PointwiseMinFn([a, b]), PointwiseMaxFn([a, b])
    x = np.linspace(-2, 2, 9)[:, None]
    np.testing.assert_allclose(lo.value(x), a.value(x))
    np.testing.assert_allclose(hi.value(x), b.value(x))


def test_callable_fn():
    f = CallableFn(lambda x: np.sum(x**2, axis=1) ** 2, 2, (1.0, -1.0), True, "quartic")
    assert f.value(np.array([[1.0, 1.0]]))[0] == pytest.approx(4.0)
    assert "quartic" in f.key()


def test_epigraph_geometry_of_paraboloid():
    q = QuadraticFn(np.eye(2))
    assert epigraph_curvature(q, np.zeros(2)) == pytest.approx(1.0, rel=1e-10)
    # |grad| = 1 at x = (1, 0): curvature (1 + 1)^(-2)
    assert epigraph_curvature(q, np.array([1.0, 0.0])) == pytest.approx(0.25, rel=1e-10)
    nu = epigraph_normal(q, np.array([1.0, 0.0]))
    np.testing.assert_allclose(nu, np.array([1.0, 0.0, -1.0]) / math.sqrt(2), atol=1e-12)
    assert rolling_bound(q, np.zeros(2)) == pytest.approx(1.0)


def test_coercivity_box_tail_bound():
    q = QuadraticFn(np.eye(1))
    R = coercivity_box(q, 1e-12)
    a, b = q.coercivity
    tail = 2 * math.exp(-a * R - b) / a
    assert tail <= 1.01e-12


def test_slope_grid_uniform_and_coarsened():
    g = SlopeGrid.uniform(1.0, 0.25, 2)
    assert g.points.shape == (81, 2)
    assert np.any(np.all(g.points == 0, axis=1))
    assert g.spacing() == pytest.approx(0.25)
    coarse = g.coarsened()
    np.testing.assert_allclose(g.points[g.coarse_mask()], coarse.points)


@given(st.floats(-2, 2))
@settings(max_examples=30, deadline=None)
def test_conjugate_on_grid_recovers_parabola(x):
    grid = SlopeGrid.uniform(4.0, 0.01, 1)
    ys = grid.points
    conj = 0.5 * ys[:, 0] ** 2
    f = conjugate_on_grid(ys, conj)
    value = f(np.array([[x]]))[0]
    assert 0.5 * x * x - 0.5 * 0.01**2 / 4 - 1e-12 <= value <= 0.5 * x * x + 1e-12
