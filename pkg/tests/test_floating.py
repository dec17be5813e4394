from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ulamfloat.core import constant_c, constant_d
from ulamfloat.errors import DomainError
from ulamfloat.floating import (
    affine_precompose,
    build_floating_function,
    build_ulam_function,
    floating_excess,
    sandwich_report,
    ulam_excess,
    ulam_log_concave,
)
from ulamfloat.functions import MaxAffineFn, PNormFn, QuadraticFn, SlopeGrid


def quadratic_excess(constant, A, delta):
    # volume-preserving shears reduce any quadratic to |x|^2/2 with volume delta sqrt(det A)
    n = A.shape[0]
    return constant(n + 1) * (delta * np.sqrt(np.linalg.det(A))) ** (2 / (n + 2))


@pytest.mark.parametrize("A", [np.eye(1), np.array([[3.0]]), np.array([[2.0, 0.5], [0.5, 1.0]])])
@pytest.mark.parametrize("delta", [0.5, 1e-4])
def test_anchored_excess_on_quadratics(A, delta, rng):
    psi = QuadraticFn(A, rng.normal(size=A.shape[0]))
    x = rng.normal(size=(3, A.shape[0]))
    np.testing.assert_allclose(ulam_excess(psi, x, delta), quadratic_excess(constant_c, A, delta), rtol=1e-7)
    np.testing.assert_allclose(floating_excess(psi, x, delta), quadratic_excess(constant_d, A, delta), rtol=1e-7)


@pytest.mark.parametrize("delta", [2 / 3, 6.7e-4])
def test_lattice_route_agrees_with_anchored_route(delta):
    psi = QuadraticFn(np.eye(1))
    grid = SlopeGrid.uniform(2.0, 0.01, 1)
    x = np.array([[0.0], [0.3]])
    ulam = build_ulam_function(psi, delta, grid, probes=x)
    flo = build_floating_function(psi, delta, grid, probes=x)
    anchored_u = psi.value(x) + ulam_excess(psi, x, delta)
    anchored_f = psi.value(x) + floating_excess(psi, x, delta)
    # envelopes under-approximate by at most the grid slack
    assert np.all(ulam(x) <= anchored_u + 1e-12)
    assert np.all(anchored_u - ulam(x) <= ulam.grid_slack + 1e-10)
    assert np.all(anchored_f - flo(x) <= flo.grid_slack + 1e-10)


def test_sandwich_on_quartic():
    psi = PNormFn(4.0, 1.0, 1)
    rep = sandwich_report(psi, 0.05, np.linspace(-1, 1, 9)[:, None], step=0.02)
    assert rep.holds
    assert np.all(rep.ulam_values >= rep.psi_values)


@given(st.floats(-1.0, 1.0))
@settings(max_examples=10, deadline=None)
def test_excess_monotone_in_delta(x):
    psi = PNormFn(4.0, 1.0, 1)
    pts = np.array([[x]])
    big, small = ulam_excess(psi, pts, 0.1)[0], ulam_excess(psi, pts, 0.01)[0]
    assert 0 < small < big


def test_floating_dominates_ulam(rng):
    psi = PNormFn(4.0, 1.0, 2)
    x = rng.normal(size=(4, 2)) * 0.5
    assert np.all(floating_excess(psi, x, 0.01) > ulam_excess(psi, x, 0.01))


def test_equivariance_under_unimodular_maps():
    psi = PNormFn(4.0, 1.0, 2)
    T = np.array([[2.0, 1.0], [0.0, 0.5]])
    composed = affine_precompose(psi, T)
    x = np.array([[0.2, -0.3], [0.5, 0.4]])
    np.testing.assert_allclose(
        ulam_excess(composed, x, 0.01), ulam_excess(psi, x @ T.T, 0.01), rtol=1e-6, atol=1e-9
    )


def test_log_concave_evaluator():
    psi = QuadraticFn(np.eye(1))
    f = ulam_log_concave(psi, 0.1, SlopeGrid.uniform(2.0, 0.01, 1), probes=[[0.0]])
    assert f(np.array([[0.0]]))[0] == pytest.approx(np.exp(-f.approx(np.array([[0.0]]))[0]))


def test_refuses_non_supercoercive():
    with pytest.raises(DomainError):
        build_ulam_function(MaxAffineFn([[-1.0], [1.0]], [0.0, 0.0]), 0.1, SlopeGrid.uniform(1, 0.1, 1))
