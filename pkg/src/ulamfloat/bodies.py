"""Convex bodies: floating bodies, metronoids and volume deficits.

Bodies carry analytic cap oracles. Caps are cut from the ``theta`` side:
``cap_volume(theta, a)`` is the volume of ``K ∩ {<z, theta> >= a}``.
Balls use incomplete-beta closed forms, ellipsoids reduce to balls through
their axis scaling, and polygons clip against a halfplane and use the
shoelace formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, HalfspaceIntersection
from scipy.special import betainc

from .core import PowerLawFit, constant_c, constant_d, find_monotone_root, fit_power_law, unit_ball_volume
from .errors import DomainError
from .quadrature import QuadratureSpec, integrate_1d

__all__ = [
    "Ball",
    "ConvexBody",
    "DeficitRow",
    "Ellipsoid",
    "Polygon",
    "ball_cap_profile",
    "body_cut_level",
    "deficit_sweep",
    "ellipsoid_cap_sandwich_check",
    "envelope_volume",
    "floating_body_support_envelope",
    "metronoid_support",
    "unit_directions",
]


def _unit(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    norm = np.linalg.norm(theta, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise DomainError("direction must be nonzero")
    return theta / norm


class ConvexBody:
    """Interface of the cap and support oracles."""

    ambient_dim: int

    @property
    def total_volume(self) -> float:
        raise NotImplementedError

    @property
    def centroid(self) -> np.ndarray:
        raise NotImplementedError

    def support(self, theta):
        raise NotImplementedError

    def cap_volume(self, theta, a):
        raise NotImplementedError

    def cap_barycenter(self, theta, a):
        raise NotImplementedError


class Ball(ConvexBody):
    """Euclidean ball of radius ``radius`` in ``R^m``."""

    def __init__(self, radius: float = 1.0, ambient_dim: int = 2, center=None):
        if not radius > 0 or ambient_dim not in (2, 3):
            raise DomainError("need radius > 0 and ambient dimension 2 or 3")
        self.radius = float(radius)
        self.ambient_dim = int(ambient_dim)
        self.center = np.zeros(ambient_dim) if center is None else np.asarray(center, dtype=float)

    @property
    def total_volume(self) -> float:
        return unit_ball_volume(self.ambient_dim) * self.radius**self.ambient_dim

    @property
    def centroid(self):
        return self.center.copy()

    def support(self, theta):
        theta = np.asarray(theta, dtype=float)
        return theta @ self.center + self.radius * np.linalg.norm(theta, axis=-1)

    def cap_volume_height(self, h):
        """Volume of a cap of height ``h`` (``0 <= h <= 2 rho``)."""
        m, r = self.ambient_dim, self.radius
        h = np.clip(np.asarray(h, dtype=float), 0.0, 2 * r)
        small = np.minimum(h, 2 * r - h)
        x = np.clip((2 * r * small - small**2) / r**2, 0.0, 1.0)
        # near the equator use the complement, whose argument (1 - small/r)^2 keeps its digits
        y = ((r - small) / r) ** 2
        frac = np.where(y < 0.5, 1.0 - betainc(0.5, (m + 1) / 2, y), betainc((m + 1) / 2, 0.5, x))
        half = 0.5 * unit_ball_volume(m) * r**m * frac
        return np.where(h <= r, half, self.total_volume - half)

    def cap_volume(self, theta, a):
        u = _unit(theta)
        return self.cap_volume_height(self.radius - (np.asarray(a) - u @ self.center))

    def cap_offset_barycenter(self, R):
        """Distance from the center to the barycenter of the cap ``{<z - c, u> >= R}``."""
        m, r = self.ambient_dim, self.radius
        R = np.asarray(R, dtype=float)
        vol = self.cap_volume_height(r - R)
        moment = unit_ball_volume(m - 1) * np.maximum(r**2 - R**2, 0.0) ** ((m + 1) / 2) / (m + 1)
        return moment / vol

    def cap_barycenter(self, theta, a):
        u = _unit(theta)
        R = np.asarray(a) - u @ self.center
        return self.center + np.multiply.outer(self.cap_offset_barycenter(R), u)


class Ellipsoid(ConvexBody):
    """Axis-aligned ellipsoid ``{z : sum (z_i / s_i)^2 <= 1}``, the image of the unit ball under ``diag(s)``."""

    def __init__(self, semi_axes):
        axes = np.asarray(semi_axes, dtype=float)
        if axes.ndim != 1 or axes.size not in (2, 3) or np.any(axes <= 0):
            raise DomainError("need two or three positive semi-axes")
        self.semi_axes = axes
        self.ambient_dim = axes.size
        self._ball = Ball(1.0, self.ambient_dim)

    @property
    def jacobian(self) -> float:
        return float(np.prod(self.semi_axes))

    @property
    def total_volume(self) -> float:
        return self.jacobian * self._ball.total_volume

    @property
    def centroid(self):
        return np.zeros(self.ambient_dim)

    def support(self, theta):
        return np.linalg.norm(np.asarray(theta, dtype=float) * self.semi_axes, axis=-1)

    def _reduce(self, theta, a):
        # <z, theta> >= a with z = D u becomes <u, D theta> >= a
        u = _unit(theta)
        scaled = u * self.semi_axes
        norm = np.linalg.norm(scaled, axis=-1)
        return scaled / norm[..., None] if scaled.ndim > 1 else scaled / norm, np.asarray(a) / norm

    def cap_volume(self, theta, a):
        phi, level = self._reduce(theta, a)
        return self.jacobian * self._ball.cap_volume(phi, level)

    def cap_barycenter(self, theta, a):
        phi, level = self._reduce(theta, a)
        return self._ball.cap_barycenter(phi, level) * self.semi_axes


def _cross(p, q):
    return p[..., 0] * q[..., 1] - p[..., 1] * q[..., 0]


class Polygon(ConvexBody):
    """Convex polygon given by its vertices (any orientation)."""

    ambient_dim = 2

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise DomainError("need at least three 2D vertices")
        hull = ConvexHull(v)
        if hull.vertices.size != v.shape[0]:
            raise DomainError("vertices must be in convex position")
        self.vertices = v[hull.vertices]  # counterclockwise

    @classmethod
    def square(cls, half_width: float = 1.0) -> "Polygon":
        s = half_width
        return cls([[-s, -s], [s, -s], [s, s], [-s, s]])

    @property
    def total_volume(self) -> float:
        v = self.vertices
        return 0.5 * float(np.sum(_cross(v, np.roll(v, -1, axis=0))))

    @property
    def centroid(self):
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        c = _cross(v, w)
        return ((v + w) * c[:, None]).sum(axis=0) / (3 * c.sum())

    def support(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.max(theta @ self.vertices.T, axis=-1)

    def _clip(self, theta, a):
        """Area and first moment of ``{<z, theta> >= a}`` for many directions at once."""
        u = np.atleast_2d(_unit(theta))
        a = np.broadcast_to(np.asarray(a, dtype=float), (u.shape[0],))
        p = self.vertices[None, :, :]
        q = np.roll(self.vertices, -1, axis=0)[None, :, :]
        hp = u @ self.vertices.T - a[:, None]
        hq = np.roll(hp, -1, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(hp != hq, hp / (hp - hq), 0.0)
        cross_pt = p + t[:, :, None] * (q - p)
        inside_p, inside_q = hp >= 0, hq >= 0
        start = np.where(inside_p[:, :, None], p, cross_pt)
        end = np.where(inside_q[:, :, None], q, cross_pt)
        keep = inside_p | inside_q
        cr = np.where(keep, _cross(start, end), 0.0)
        mom = np.where(keep[:, :, None], (start + end) * cr[:, :, None], 0.0)
        area2 = cr.sum(axis=1)
        moment6 = mom.sum(axis=1)
        # chord along the cut line, from the exit point back to the entry point
        exit_mask = inside_p & ~inside_q
        entry_mask = ~inside_p & inside_q
        has = exit_mask.any(axis=1) & entry_mask.any(axis=1)
        ex = cross_pt[np.arange(u.shape[0]), exit_mask.argmax(axis=1)]
        en = cross_pt[np.arange(u.shape[0]), entry_mask.argmax(axis=1)]
        chord = np.where(has, _cross(ex, en), 0.0)
        area2 = area2 + chord
        moment6 = moment6 + np.where(has[:, None], (ex + en) * chord[:, None], 0.0)
        return 0.5 * area2, moment6 / 6.0

    def cap_volume(self, theta, a):
        area, _ = self._clip(theta, a)
        return area if np.ndim(theta) > 1 else float(area[0])

    def cap_barycenter(self, theta, a):
        area, moment = self._clip(theta, a)
        with np.errstate(divide="ignore", invalid="ignore"):
            bary = moment / area[:, None]
        return bary if np.ndim(theta) > 1 else bary[0]

    def cut_levels(self, theta, delta) -> np.ndarray:
        """Exact cut levels for many directions.

        Between consecutive vertex heights the cap area is a quadratic in the
        level, so three samples per bracket determine it and the root is
        solved in closed form.
        """
        u = np.atleast_2d(_unit(theta))
        nd = u.shape[0]
        heights = np.sort(u @ self.vertices.T, axis=1)[:, ::-1]  # top vertex first
        areas = np.stack([self._clip(u, heights[:, k])[0] for k in range(heights.shape[1])], axis=1)
        k = np.argmax(areas >= delta, axis=1)
        rows = np.arange(nd)
        hi_level, lo_level = heights[rows, k - 1], heights[rows, k]
        a_hi, a_lo = areas[rows, k - 1], areas[rows, k]
        mid = 0.5 * (hi_level + lo_level)
        a_mid = self._clip(u, mid)[0]
        # area as a quadratic in s = level - mid
        half = 0.5 * (hi_level - lo_level)
        c0 = a_mid
        c1 = (a_hi - a_lo) / (2 * half)
        c2 = (a_hi + a_lo - 2 * a_mid) / (2 * half**2)
        disc = np.maximum(c1**2 - 4 * c2 * (c0 - delta), 0.0)
        # the root with decreasing area in s; stable quadratic formula
        with np.errstate(divide="ignore", invalid="ignore"):
            root_lin = (delta - c0) / c1
            q = -0.5 * (c1 - np.sqrt(disc))
            root_quad = np.where(q != 0, (c0 - delta) / q, root_lin)
        s = np.where(np.abs(c2) * half**2 <= 1e-15 * np.abs(c0), root_lin, root_quad)
        return mid + s


# -- cut levels and supports -----------------------------------------------------------


def _check_delta(K: ConvexBody, delta: float, half: bool = False) -> None:
    bound = K.total_volume / 2 if half else K.total_volume
    if not 0 < delta < bound:
        raise DomainError(f"delta must lie in (0, {bound!r})")


def body_cut_level(K: ConvexBody, theta, delta: float, exact: bool = True) -> float:
    """Level ``R`` with ``vol(K ∩ {<z, theta> >= R}) = delta`` for a unit ``theta``.

    Polygons use the exact piecewise-quadratic solver unless ``exact`` is
    false, in which case the generic monotone root finder runs on the cap
    oracle; the two serve as cross-checks.
    """
    _check_delta(K, delta)
    u = _unit(theta)
    if isinstance(K, Polygon) and exact:
        return float(K.cut_levels(u[None, :], delta)[0])
    top = float(K.support(u))
    width = top + float(K.support(-u))
    depth = find_monotone_root(
        lambda t: float(K.cap_volume(u, top - t)),
        delta,
        0.0,
        tol=1e-14 * min(1.0, delta),
        xtol=1e-16 * max(1.0, width),
        step=width / 4,
    )
    return top - depth


def metronoid_support(K: ConvexBody, theta, delta: float) -> float:
    """Support of the metronoid: ``<barycenter of the delta-cap, theta>``."""
    _check_delta(K, delta)
    u = _unit(theta)
    R = body_cut_level(K, u, delta)
    return float(np.asarray(K.cap_barycenter(u, R)) @ u)


def unit_directions(count: int, offset: float = 0.0) -> np.ndarray:
    phi = 2 * np.pi * (np.arange(count) + offset) / count
    return np.column_stack([np.cos(phi), np.sin(phi)])


def _cut_levels(K: ConvexBody, dirs: np.ndarray, delta: float) -> np.ndarray:
    if isinstance(K, Polygon):
        return K.cut_levels(dirs, delta)
    return np.array([body_cut_level(K, d, delta) for d in dirs])


def _supports(K: ConvexBody, dirs: np.ndarray, delta: float, which: str) -> np.ndarray:
    levels = _cut_levels(K, dirs, delta)
    if which == "floating":
        return levels
    bary = np.asarray(K.cap_barycenter(dirs, levels))
    return np.sum(bary * dirs, axis=1)


def envelope_volume(dirs: np.ndarray, offsets: np.ndarray, interior) -> float:
    """Area of ``∩ {z : <z, u_j> <= h_j}``, the outer polygon of a support sample."""
    halfspaces = np.column_stack([dirs, -offsets])
    hs = HalfspaceIntersection(halfspaces, np.asarray(interior, dtype=float))
    return float(ConvexHull(hs.intersections).volume)


@dataclass
class Envelope:
    volume: float
    directions: np.ndarray
    offsets: np.ndarray
    change: float


def floating_body_support_envelope(
    K: ConvexBody, delta: float, which: str = "floating", count: int = 2048, max_count: int = 1 << 17, tol: float = 1e-9
) -> Envelope:
    """Outer halfspace envelope of the floating body (or the metronoid) of a 2D body.

    Starts from ``count`` equally spaced directions and doubles until the
    envelope area changes by less than ``tol``.
    """
    if K.ambient_dim != 2:
        raise DomainError("envelopes are computed for planar bodies")
    _check_delta(K, delta, half=True)
    dirs = unit_directions(count)
    offs = _supports(K, dirs, delta, which)
    if isinstance(K, Ball):
        # the envelope of a ball is the concentric ball through the supports
        return Envelope(math.pi * float(offs[0] - dirs[0] @ K.center) ** 2, dirs, offs, 0.0)
    vol = envelope_volume(dirs, offs, K.centroid)
    change = math.inf
    while count < max_count:
        new_dirs = unit_directions(count, offset=0.5)
        new_offs = _supports(K, new_dirs, delta, which)
        dirs = np.stack([dirs, new_dirs], axis=1).reshape(-1, 2)
        offs = np.stack([offs, new_offs], axis=1).reshape(-1)
        count *= 2
        new_vol = envelope_volume(dirs, offs, K.centroid)
        change = abs(new_vol - vol)
        vol = new_vol
        if change < tol:
            break
    return Envelope(vol, dirs, offs, change)


# -- deficits ------------------------------------------------------------------------


@dataclass(frozen=True)
class DeficitRow:
    delta: float
    deficit: float
    scaled: float


def _ball_inner_radius(K: Ball, delta: float, which: str) -> float:
    u = np.zeros(K.ambient_dim)
    u[0] = 1.0
    R = body_cut_level(K, u, delta)
    if which == "floating":
        return R
    return float(K.cap_offset_barycenter(R))


def _deficit(K: ConvexBody, delta: float, which: str) -> float:
    if isinstance(K, Ball):
        r = _ball_inner_radius(K, delta, which)
        m = K.ambient_dim
        # rho^m - r^m written without cancellation
        rho = K.radius
        diff = (rho - r) * sum(rho ** (m - 1 - k) * r**k for k in range(m))
        return unit_ball_volume(m) * diff
    if isinstance(K, Ellipsoid):
        unit = Ball(1.0, K.ambient_dim)
        return K.jacobian * _deficit(unit, delta / K.jacobian, which)
    env = floating_body_support_envelope(K, delta, which)
    return K.total_volume - env.volume


def deficit_sweep(K: ConvexBody, deltas, which: str = "floating") -> tuple[list[DeficitRow], PowerLawFit]:
    """Volume deficits ``vol(K) - vol(K_delta)`` (or of the metronoid) over a decreasing ``delta`` list.

    Scaled deficits divide by ``delta^(2/(m+1))``; the fit fixes that exponent
    for the correction term.
    """
    if which not in ("floating", "metronoid"):
        raise DomainError("which must be 'floating' or 'metronoid'")
    deltas = [float(d) for d in deltas]
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise DomainError("deltas must be strictly decreasing")
    for d in deltas:
        _check_delta(K, d, half=True)
    m = K.ambient_dim
    expo = 2.0 / (m + 1)
    rows = []
    for d in deltas:
        deficit = _deficit(K, d, which)
        rows.append(DeficitRow(d, deficit, deficit / d**expo))
    fit = fit_power_law([(r.delta, r.scaled) for r in rows], fixed_exponent=expo)
    return rows, fit


def deficit_reference(K: ConvexBody, which: str) -> float:
    """Limit of the scaled deficit: ``d_m as(K)`` (floating) or ``c_m as(K)`` (metronoid)."""
    from .asa import asa_body

    const = constant_d(K.ambient_dim) if which == "floating" else constant_c(K.ambient_dim)
    return const * asa_body(K)


# -- ball caps -------------------------------------------------------------------------


def _profile_integral(rho: float, m: int, dh: float, power: int) -> float:
    """``int_0^dh t^power (2 rho t - t^2)^((m-1)/2) dt`` with ``t = dh u^2``."""
    spec = QuadratureSpec(abs_tol=1e-300, rel_tol=1e-13)

    def f(u):
        t = dh * u * u
        return t**power * np.maximum(2 * rho * t - t * t, 0.0) ** ((m - 1) / 2) * 2 * dh * u

    return integrate_1d(f, 0.0, 1.0, spec)[0]


def ball_cap_profile(rho: float, m: int, delta: float) -> tuple[float, float, float]:
    """Cap height, barycenter depth and their ratio for a ball cap of volume ``delta``.

    Returns:
        ``(dh, drho, dh / drho)`` where ``dh`` is the height of the cap of
        volume ``delta`` and ``drho`` the depth of its barycenter below the
        top of the ball. The ratio tends to ``(m + 3) / (m + 1)``.
    """
    ball = Ball(rho, m)
    if not 0 < delta < ball.total_volume / 2:
        raise DomainError("delta must be positive and the cap at most a half ball")
    omega = unit_ball_volume(m - 1)
    dh = find_monotone_root(
        lambda h: omega * _profile_integral(rho, m, h, 0),
        delta,
        0.0,
        tol=1e-13 * min(1.0, delta),
        xtol=1e-17 * rho,
        step=min(rho, (delta / omega) ** (2.0 / (m + 1))),
    )
    drho = _profile_integral(rho, m, dh, 1) / _profile_integral(rho, m, dh, 0)
    return dh, drho, dh / drho


def ellipsoid_cap_sandwich_check(r: float, h: float, m: int) -> tuple[float, float, float, bool]:
    """Bounds on the scaled cap volume of a ball tangent to the floor.

    The body is the ball of radius ``r`` centered at ``r e_m``; its cap below
    height ``h`` has volume ``V``. Checks
    ``(1 - h/(2r))^((m-1)/(m+1)) h <= d_m (V / r^((m-1)/2))^(2/(m+1)) <= h``.
    """
    if not (r > 0 and 0 < h < 2 * r) or m not in (2, 3):
        raise DomainError("need r > 0, 0 < h < 2r and m in {2, 3}")
    volume = unit_ball_volume(m - 1) * _profile_integral(r, m, h, 0)
    middle = constant_d(m) * (volume / r ** ((m - 1) / 2)) ** (2.0 / (m + 1))
    lower = (1 - h / (2 * r)) ** ((m - 1) / (m + 1)) * h
    upper = h
    slack = 1e-12 * h
    return lower, middle, upper, bool(lower <= middle + slack and middle <= upper + slack)
