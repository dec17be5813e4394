from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from ulamfloat.bodies import (
    Ball,
    Ellipsoid,
    Polygon,
    ball_cap_profile,
    body_cut_level,
    deficit_reference,
    deficit_sweep,
    ellipsoid_cap_sandwich_check,
    floating_body_support_envelope,
    metronoid_support,
)
from ulamfloat.errors import DomainError


def segment_area(r, R):
    return r * r * math.acos(R / r) - R * math.sqrt(r * r - R * R)


@given(st.floats(-0.95, 0.95))
@example(1e-11)
@example(-1e-11)
@settings(max_examples=30, deadline=None)
def test_disk_cap_volume_closed_form(R):
    disk = Ball(1.0, 2)
    assert disk.cap_volume([1.0, 0.0], R) == pytest.approx(segment_area(1.0, R), rel=1e-12, abs=1e-14)


def test_ball_cap_barycenter_3d():
    # a half ball has its barycenter at 3/8 of the radius
    ball = Ball(2.0, 3)
    np.testing.assert_allclose(ball.cap_barycenter([0.0, 0.0, 1.0], 0.0), [0.0, 0.0, 0.75], atol=1e-12)


@given(st.floats(0.05, 1.9), st.floats(0, 2 * math.pi))
@settings(max_examples=30, deadline=None)
def test_square_caps_against_disk_free_oracle(width, angle):
    # axis directions cut rectangles: volume and barycenter are elementary
    sq = Polygon.square()
    a = 1.0 - width
    assert sq.cap_volume([1.0, 0.0], a) == pytest.approx(2 * width, rel=1e-12)
    np.testing.assert_allclose(sq.cap_barycenter([1.0, 0.0], a), [1.0 - width / 2, 0.0], atol=1e-12)
    theta = np.array([math.cos(angle), math.sin(angle)])
    assert sq.cap_volume(theta, -10.0) == pytest.approx(4.0)


def test_polygon_validation():
    with pytest.raises(DomainError):
        Polygon([[0.0, 0.0], [1.0, 0.0]])


@pytest.mark.parametrize("m, delta, ratio", [(2, 1e-6, 5 / 3), (3, 1e-8, 1.5)])
def test_ball_cap_profile_ratio(m, delta, ratio):
    dh, drho, r = ball_cap_profile(1.0, m, delta)
    assert r == pytest.approx(ratio, abs=1e-3)
    assert 0 < drho < dh


@pytest.mark.parametrize("m", [2, 3])
@pytest.mark.parametrize("r", [0.5, 1.0, 3.0])
@pytest.mark.parametrize("frac", [0.01, 0.3, 0.9, 1.5])
def test_ellipsoid_cap_sandwich(m, r, frac):
    *_, holds = ellipsoid_cap_sandwich_check(r, frac * r, m)
    assert holds


@given(st.floats(1e-5, 0.5))
@settings(max_examples=20, deadline=None)
def test_disk_metronoid_sandwich(delta):
    disk = Ball(1.0, 2)
    u = np.array([0.6, 0.8])
    inner = body_cut_level(disk, u, (1 - 1 / math.e) * delta)
    outer = body_cut_level(disk, u, delta / math.e)
    h = metronoid_support(disk, u, delta)
    assert inner <= h + 1e-12
    assert h <= outer + 1e-12


def test_square_cut_levels_against_closed_form():
    # corner caps of [-1, 1]^2 along the diagonal are triangles of area s^2
    sq = Polygon.square()
    u = np.array([1.0, 1.0]) / math.sqrt(2)
    delta = 0.02
    side = math.sqrt(2 * delta)
    assert body_cut_level(sq, u, delta) == pytest.approx(math.sqrt(2) - side / math.sqrt(2), rel=1e-10)


@pytest.mark.parametrize("which", ["floating", "metronoid"])
def test_disk_deficit_limit(which):
    rows, fit = deficit_sweep(Ball(1.0, 2), [1e-2, 1e-3, 1e-4, 1e-5, 1e-6], which)
    ref = deficit_reference(Ball(1.0, 2), which)
    assert fit.limit == pytest.approx(ref, rel=1e-3)


def test_ellipsoid_deficit_is_scaled_ball():
    e = Ellipsoid([2.0, 0.5])
    rows, fit = deficit_sweep(e, [1e-2, 1e-3, 1e-4], "floating")
    ball_rows, _ = deficit_sweep(Ball(1.0, 2), [1e-2, 1e-3, 1e-4], "floating")
    for a, b in zip(rows, ball_rows):
        assert a.deficit == pytest.approx(b.deficit, rel=1e-12)


def test_polygon_envelope_converges_for_disk_like_polygon():
    # a regular 96-gon is close to the disk; so are their floating bodies
    t = np.linspace(0, 2 * math.pi, 96, endpoint=False)
    poly = Polygon(np.column_stack([np.cos(t), np.sin(t)]))
    env = floating_body_support_envelope(poly, 0.05, count=128, max_count=256, tol=1e-6)
    disk_env = floating_body_support_envelope(Ball(1.0, 2), 0.05)
    assert env.volume == pytest.approx(disk_env.volume, rel=5e-3)


def test_deficit_sweep_validation():
    with pytest.raises(DomainError):
        deficit_sweep(Ball(1.0, 2), [1e-3, 1e-2])
    with pytest.raises(DomainError):
        deficit_sweep(Ball(1.0, 2), [1e-2, 1e-3], "other")
