from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma

from ulamfloat.core import (
    constant_c,
    constant_d,
    find_monotone_root,
    fit_power_law,
    minimize_convex,
    unit_ball_volume,
)
from ulamfloat.errors import DomainError


def _kappa(m):
    return math.pi ** (m / 2) / gamma(m / 2 + 1)


@pytest.mark.parametrize("m", [1, 2, 3, 4, 7])
def test_unit_ball_volume(m):
    assert unit_ball_volume(m) == pytest.approx(_kappa(m), rel=1e-14)


@pytest.mark.parametrize(
    "m, expected_c, expected_d",
    [(2, 0.393111, 0.655185), (3, 0.376126, 0.564190)],
)
def test_constants_reference_values(m, expected_c, expected_d):
    assert constant_c(m) == pytest.approx(expected_c, abs=5e-7)
    assert constant_d(m) == pytest.approx(expected_d, abs=5e-7)


@pytest.mark.parametrize("m", [2, 3, 4, 5])
def test_ratio_of_constants(m):
    # cap height over barycenter depth of a parabolic cap
    ratio = constant_d(m) / constant_c(m)
    assert ratio == pytest.approx((m + 3) / (m + 1), rel=1e-12)


@pytest.mark.parametrize("bad", [1, 0, 2.5, -3])
def test_constants_reject_bad_dimension(bad):
    with pytest.raises(DomainError):
        constant_c(bad)
    with pytest.raises(DomainError):
        constant_d(bad)


@given(st.floats(0.1, 50.0), st.floats(0.5, 5.0))
@settings(max_examples=50, deadline=None)
def test_find_monotone_root_recovers_cube_root(target, scale):
    root = find_monotone_root(lambda a: scale * a**3, target, 0.0, tol=1e-13)
    assert root == pytest.approx((target / scale) ** (1 / 3), rel=1e-10)


def test_find_monotone_root_expands_bracket():
    root = find_monotone_root(lambda a: a, 1e6, 0.0, step=1.0)
    assert root == pytest.approx(1e6, rel=1e-12)


def test_minimize_convex_quadratic():
    A = np.array([[3.0, 1.0], [1.0, 2.0]])
    b = np.array([1.0, -2.0])
    x, fx = minimize_convex(lambda z: 0.5 * z @ A @ z - b @ z, np.zeros(2))
    np.testing.assert_allclose(x, np.linalg.solve(A, b), atol=1e-6)


def test_fit_fixed_exponent_exact():
    deltas = 0.5 * 4.0 ** -np.arange(6)
    values = 1.25 - 0.3 * deltas ** (2 / 3)
    fit = fit_power_law(list(zip(deltas, values)), fixed_exponent=2 / 3)
    assert fit.limit == pytest.approx(1.25, abs=1e-13)
    assert fit.amplitude == pytest.approx(-0.3, rel=1e-10)


@given(st.floats(0.2, 3.0), st.floats(-2.0, 2.0).filter(lambda c: abs(c) > 0.05), st.floats(-5, 5))
@settings(max_examples=40, deadline=None)
def test_free_fit_recovers_noise_free_model(beta, amp, limit):
    deltas = 10.0 ** -np.arange(1, 7, dtype=float) * 3
    values = limit + amp * deltas**beta
    fit = fit_power_law(list(zip(deltas, values)))
    assert fit.limit == pytest.approx(limit, abs=1e-7 * (1 + abs(limit)))


def test_fit_rejects_unsorted():
    with pytest.raises(DomainError):
        fit_power_law([(1e-3, 1.0), (1e-2, 1.0), (1e-4, 1.0)])
    with pytest.raises(DomainError):
        fit_power_law([(1e-3, 1.0), (1e-4, 1.0)])
