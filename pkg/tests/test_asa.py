from __future__ import annotations

import math

import numpy as np
import pytest

from ulamfloat.asa import asa_body, asa_boundary, asa_density, asa_invariance_check
from ulamfloat.bodies import Ball, Ellipsoid, Polygon
from ulamfloat.functions import ComposedFn, PNormFn, QuadraticFn


def quadratic_asa(A, b, c):
    # det(A)^(1/(n+2)) times the Gaussian integral of exp(-psi)
    A = np.atleast_2d(A)
    n = A.shape[0]
    vmin = c - 0.5 * b @ np.linalg.solve(A, b)
    mass = (2 * math.pi) ** (n / 2) / math.sqrt(np.linalg.det(A)) * math.exp(-vmin)
    return np.linalg.det(A) ** (1 / (n + 2)) * mass


def test_standard_gaussian_value():
    assert asa_density(QuadraticFn(np.eye(1))).value == pytest.approx(2.5066283, abs=5e-8)


@pytest.mark.parametrize(
    "A, b, c",
    [
        (np.array([[3.0]]), np.array([0.5]), 0.2),
        (np.array([[2.0, 0.4], [0.4, 1.0]]), np.array([0.1, -0.3]), 0.0),
        (np.eye(2), np.zeros(2), 0.0),
    ],
)
def test_quadratic_closed_form(A, b, c):
    res = asa_density(QuadraticFn(A, b, c))
    assert res.value == pytest.approx(quadratic_asa(A, b, c), rel=1e-9)
    assert res.form == "density"


@pytest.mark.parametrize(
    "psi",
    [QuadraticFn([[2.0, 0.3], [0.3, 1.0]]), PNormFn(4.0, 1.0, 1), PNormFn(3.0, 2.0, 2)],
    ids=repr,
)
def test_density_equals_boundary(psi):
    dens, bnd = asa_density(psi), asa_boundary(psi)
    assert dens.value == pytest.approx(bnd.value, rel=1e-7, abs=dens.err_estimate + bnd.err_estimate)


def test_unimodular_invariance_and_scaling():
    psi = PNormFn(4.0, 1.0, 2)
    _, _, gap = asa_invariance_check(psi, [[1.0, 0.7], [0.0, 1.0]])
    assert gap < 1e-7
    lhs, rhs, gap = asa_invariance_check(psi, [[2.0, 0.0], [0.0, 1.0]])
    assert gap < 1e-7


def test_body_closed_forms():
    assert asa_body(Ball(1.0, 2)) == pytest.approx(2 * math.pi)
    assert asa_body(Ball(1.0, 3)) == pytest.approx(4 * math.pi)
    assert asa_body(Polygon.square()) == 0.0
    # ellipsoids are linear images of the ball: as scales with det^((m-1)/(m+1))
    assert asa_body(Ellipsoid([2.0, 0.5])) == pytest.approx(2 * math.pi, rel=1e-10)
    assert asa_body(Ellipsoid([2.0, 3.0])) == pytest.approx(2 * math.pi * 6 ** (1 / 3), rel=1e-10)
    assert asa_body(Ellipsoid([1.0, 2.0, 3.0])) == pytest.approx(4 * math.pi * math.sqrt(6), rel=1e-8)


def test_composed_quadratic_matches_closed_form():
    T = np.array([[1.0, 2.0], [0.0, 1.5]])
    psi = ComposedFn(QuadraticFn(np.eye(2)), T)
    assert asa_density(psi).value == pytest.approx(quadratic_asa(T.T @ T, np.zeros(2), 0.0), rel=1e-9)
