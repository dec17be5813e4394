"""Affine surface area of log-concave functions and of convex bodies.

For ``f = exp(-psi)`` the density form integrates
``det(hess psi)^(1/(n+2)) exp(-psi)``. The boundary form integrates the
Gauss curvature of the graph of ``psi`` to the power ``1/(n+2)`` against
``exp(-t)`` over the graph, parametrized by ``x``; the surface element
``sqrt(1 + |grad psi|^2) dx`` makes the two agree identically, which is
what makes the pair a useful cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NonsmoothPointError
from .functions import ComposedFn, ConvexFunction, coercivity_box
from .quadrature import QuadratureSpec, integrate_1d, integrate_box

__all__ = ["AsaResult", "asa_body", "asa_boundary", "asa_density", "asa_invariance_check"]

TAIL_EPS = 1e-12


@dataclass(frozen=True)
class AsaResult:
    value: float
    err_estimate: float
    form: str


def _robust(fn, psi: ConvexFunction, pts: np.ndarray, box_step: float):
    """Evaluate ``fn`` and nudge points that land on a kink once."""
    try:
        return fn(pts)
    except NonsmoothPointError:
        out = np.empty(pts.shape[0])
        for i in range(pts.shape[0]):
            p = pts[i : i + 1]
            try:
                out[i] = fn(p)[0]
            except NonsmoothPointError:
                out[i] = fn(p + 1e-7 * box_step)[0]
        return out


def _box_integral(psi: ConvexFunction, integrand, form: str, spec: QuadratureSpec | None) -> AsaResult:
    if spec is None:
        # finite-difference Hessians carry noise near 1e-8; ask for no more
        rel = 1e-10 if psi.has_hessian else 1e-6
        spec = QuadratureSpec(abs_tol=1e-13, rel_tol=rel, max_subdivisions=200_000)
    n = psi.dim
    if n not in (1, 2, 3):
        raise DomainError("affine surface area is computed for n in {1, 2, 3}")
    radius = coercivity_box(psi, TAIL_EPS)
    lo, hi = -np.full(n, radius), np.full(n, radius)
    step = 2 * radius

    def fn(pts):
        return _robust(integrand, psi, pts, step)

    if n == 1:
        value, err = integrate_1d(lambda t: fn(t[:, None]), -radius, radius, spec)
    else:
        value, err = integrate_box(fn, lo, hi, spec)
    return AsaResult(max(value, 0.0), err + TAIL_EPS, form)


def _density_integrand(psi: ConvexFunction):
    n = psi.dim

    def integrand(pts):
        det = np.maximum(np.linalg.det(psi.hessian(pts)), 0.0)
        return det ** (1.0 / (n + 2)) * np.exp(-psi.value(pts))

    return integrand


def _boundary_integrand(psi: ConvexFunction):
    n = psi.dim

    def integrand(pts):
        g = psi.gradient(pts)
        det = np.maximum(np.linalg.det(psi.hessian(pts)), 0.0)
        lift = 1.0 + np.sum(g * g, axis=1)
        kappa = det / lift ** ((n + 2) / 2)
        return kappa ** (1.0 / (n + 2)) * np.exp(-psi.value(pts)) * np.sqrt(lift)

    return integrand


def asa_density(psi: ConvexFunction, spec: QuadratureSpec | None = None) -> AsaResult:
    """Affine surface area of ``exp(-psi)`` from the Hessian determinant.

    Integrates over the box ``[-R, R]^n`` from :func:`coercivity_box`; the
    neglected tail mass is added to the error estimate.
    """
    return _box_integral(psi, _density_integrand(psi), "density", spec)


def asa_boundary(psi: ConvexFunction, spec: QuadratureSpec | None = None) -> AsaResult:
    """Affine surface area of ``exp(-psi)`` as a curvature integral over the graph."""
    return _box_integral(psi, _boundary_integrand(psi), "boundary", spec)


def asa_body(body) -> float:
    """Affine surface area of a ball, ellipsoid or polygon.

    Balls use the closed form. Ellipsoids integrate curvature over the
    standard parametrization. Polygons have zero curvature almost everywhere.
    """
    from .bodies import Ball, Ellipsoid, Polygon

    if isinstance(body, Ball):
        m, r = body.ambient_dim, body.radius
        return m * _ball_volume(m) * r ** (m - 1) * r ** (-(m - 1) / (m + 1))
    if isinstance(body, Polygon):
        return 0.0
    if isinstance(body, Ellipsoid):
        axes = body.semi_axes
        if body.ambient_dim == 2:
            a, b = axes

            def integrand(t):
                speed2 = (a * np.sin(t)) ** 2 + (b * np.cos(t)) ** 2
                kappa = a * b / speed2**1.5
                return kappa ** (1 / 3) * np.sqrt(speed2)

            return integrate_1d(integrand, 0.0, 2 * math.pi)[0]
        a, b, c = axes
        spec = QuadratureSpec(abs_tol=1e-14, rel_tol=1e-11)

        def surface(pts):
            u, v = pts[:, 0], pts[:, 1]
            x = np.column_stack([a * np.sin(u) * np.cos(v), b * np.sin(u) * np.sin(v), c * np.cos(u)])
            # Gauss curvature of the ellipsoid at x and the area element
            q = (x[:, 0] / a**2) ** 2 + (x[:, 1] / b**2) ** 2 + (x[:, 2] / c**2) ** 2
            kappa = 1.0 / ((a * b * c) ** 2 * q**2)
            du = np.column_stack([a * np.cos(u) * np.cos(v), b * np.cos(u) * np.sin(v), -c * np.sin(u)])
            dv = np.column_stack([-a * np.sin(u) * np.sin(v), b * np.sin(u) * np.cos(v), np.zeros_like(u)])
            area = np.linalg.norm(np.cross(du, dv), axis=1)
            return kappa**0.25 * area

        return integrate_box(surface, [0.0, 0.0], [math.pi, 2 * math.pi], spec)[0]
    raise DomainError(f"unsupported body {type(body).__name__}")


def _ball_volume(m: int) -> float:
    from .core import unit_ball_volume

    return unit_ball_volume(m)


def asa_invariance_check(psi: ConvexFunction, T, spec: QuadratureSpec | None = None):
    """Compare ``as(f o T)`` with ``|det T|^(-n/(n+2)) as(f)``.

    Returns:
        ``(lhs, rhs, rel_gap)``.
    """
    T = np.atleast_2d(np.asarray(T, dtype=float))
    det = abs(float(np.linalg.det(T)))
    if det == 0:
        raise DomainError("T must be invertible")
    lhs = asa_density(ComposedFn(psi, T), spec).value
    rhs = det ** (-psi.dim / (psi.dim + 2)) * asa_density(psi, spec).value
    return lhs, rhs, abs(lhs - rhs) / max(abs(rhs), 1e-300)
