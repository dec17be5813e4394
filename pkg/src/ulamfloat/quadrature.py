"""Adaptive quadrature.

Three layers share one Gauss-Legendre panel rule:

* :func:`integrate_intervals` integrates many independent 1D problems at
  once. Each panel is compared against the sum over its two halves and split
  until the owner's tolerance is met.
* :func:`integrate_box` does the same with tensor-product panels on boxes.
* :func:`star_integrate` integrates over star-shaped regions
  ``{F_b <= level_b}`` along rays from an interior point, with radial
  integrals handed to :func:`integrate_intervals` and nested angular
  refinement. :func:`integrate_region` wraps it for convex sublevel sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import DomainError, ToleranceNotMet, UnboundedError

__all__ = [
    "QuadratureSpec",
    "StarResult",
    "gauss_legendre",
    "integrate_1d",
    "integrate_box",
    "integrate_intervals",
    "integrate_region",
    "star_integrate",
]

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-13
    rel_tol: float = 1e-10
    max_subdivisions: int = 4000
    nodes_per_panel: int = 15

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise DomainError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1 or self.nodes_per_panel < 1:
            raise DomainError("max_subdivisions and nodes_per_panel must be >= 1")


@lru_cache(maxsize=None)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _as_columns(values, count: int) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[0] != count:
        raise ValueError(f"integrand returned {arr.shape[0]} rows for {count} nodes")
    return arr


def _panel_values(integrand, owner, a, b, xi, wts):
    """Gauss rule on each panel ``[a_p, b_p]``; returns ``(value, |value|)``."""
    p, g = a.size, xi.size
    width = b - a
    t = (a[:, None] + width[:, None] * xi[None, :]).ravel()
    f = _as_columns(integrand(np.repeat(owner, g), t), p * g).reshape(p, g, -1)
    # plain reductions keep each panel's sum independent of the batch layout
    val = (f * wts[None, :, None]).sum(axis=1) * width[:, None]
    aval = (np.abs(f) * wts[None, :, None]).sum(axis=1) * width[:, None]
    return val, aval


def integrate_intervals(
    integrand: Callable[[np.ndarray, np.ndarray], np.ndarray],
    lo,
    hi,
    *,
    rel_tol: float = 1e-10,
    abs_tol: float = 1e-13,
    order: int = 15,
    max_rounds: int = 60,
    max_panels: int = 4000,
):
    """Integrate many 1D problems simultaneously.

    Args:
        integrand: ``integrand(owner, t)`` returns values of problem
            ``owner[i]`` at ``t[i]``, shaped ``(N,)`` or ``(N, k)``.
        lo, hi: Interval ends, one per problem.
        rel_tol: Scalar or one relative tolerance per problem.

    Returns:
        ``(values, errors, converged)`` with shapes ``(B, k)``, ``(B, k)``
        and ``(B,)``. Each problem is refined only against its own running
        magnitude, so results do not depend on what else is in the batch.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    nb = lo.size
    rel = np.broadcast_to(np.asarray(rel_tol, dtype=float), (nb,))
    xi, wts = gauss_legendre(order)
    span = np.where(hi > lo, hi - lo, 1.0)

    owner = np.arange(nb)
    a, b = lo.copy(), hi.copy()
    val, aval = _panel_values(integrand, owner, a, b, xi, wts)
    k = val.shape[1]
    done = np.zeros((nb, k))
    done_abs = np.zeros((nb, k))
    err = np.zeros((nb, k))
    panels_used = np.ones(nb, dtype=int)
    converged = np.ones(nb, dtype=bool)

    for _ in range(max_rounds):
        if owner.size == 0:
            break
        mid = 0.5 * (a + b)
        owner2 = np.repeat(owner, 2)
        a2 = np.column_stack([a, mid]).ravel()
        b2 = np.column_stack([mid, b]).ravel()
        v2, av2 = _panel_values(integrand, owner2, a2, b2, xi, wts)
        fine = v2[0::2] + v2[1::2]
        afine = av2[0::2] + av2[1::2]
        diff = np.abs(fine - val)

        scale = done_abs.copy()
        np.add.at(scale, owner, afine)
        tol_owner = np.maximum(abs_tol, rel[:, None] * scale)
        share = ((b - a) / span[owner])[:, None]
        ok = np.all(diff <= tol_owner[owner] * share, axis=1)
        ok |= (b - a) <= 64 * _EPS * np.maximum(np.abs(a), np.abs(b))

        over = panels_used[owner] >= max_panels
        accept = ok | over
        if np.any(over & ~ok):
            converged[np.unique(owner[over & ~ok])] = False
        np.add.at(done, owner[accept], fine[accept])
        np.add.at(done_abs, owner[accept], afine[accept])
        np.add.at(err, owner[accept], diff[accept])

        keep = ~accept
        kept2 = np.repeat(keep, 2)
        np.add.at(panels_used, owner[keep], 1)
        owner, a, b = owner2[kept2], a2[kept2], b2[kept2]
        val, aval = v2[kept2], av2[kept2]
    else:
        if owner.size:
            np.add.at(done, owner, val)
            np.add.at(err, owner, np.abs(val))
            converged[np.unique(owner)] = False

    # rounding floor so the estimate never claims more than double precision
    err = np.maximum(err, 16 * _EPS * done_abs)
    return done, err, converged


def integrate_1d(integrand, lo: float, hi: float, spec: QuadratureSpec | None = None):
    """Adaptive Gauss-Legendre integral of a vectorized scalar integrand.

    Returns:
        ``(value, err_estimate)``.

    Raises:
        DomainError: If ``lo > hi``.
        ToleranceNotMet: If ``spec.max_subdivisions`` panels do not suffice;
            the exception carries the best value.
    """
    spec = spec or QuadratureSpec()
    if lo > hi:
        raise DomainError("integrate_1d needs lo <= hi")
    if lo == hi:
        return 0.0, 0.0
    vals, errs, ok = integrate_intervals(
        lambda owner, t: integrand(t),
        [lo],
        [hi],
        rel_tol=spec.rel_tol,
        abs_tol=spec.abs_tol,
        order=spec.nodes_per_panel,
        max_panels=spec.max_subdivisions,
        max_rounds=max(60, int(math.log2(spec.max_subdivisions)) + 60),
    )
    value, err = float(vals[0, 0]), float(errs[0, 0])
    if not ok[0]:
        raise ToleranceNotMet("integrate_1d did not converge", best=value)
    return value, err


def integrate_box(integrand, lo, hi, spec: QuadratureSpec | None = None):
    """Adaptive tensor-product Gauss cubature on an axis-aligned box.

    ``integrand`` maps an ``(N, n)`` array of points to ``(N,)`` values.
    Panels are split along every axis at once until the panel estimate and
    the sum over its ``2**n`` children agree within the panel's share of
    the tolerance.
    """
    spec = spec or QuadratureSpec()
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    n = lo.size
    if n > 3:
        raise DomainError("integrate_box supports at most three dimensions")
    if np.any(hi < lo):
        raise DomainError("integrate_box needs lo <= hi")
    if np.any(hi == lo):
        return 0.0, 0.0
    order = spec.nodes_per_panel if n == 1 else min(spec.nodes_per_panel, 11 if n == 2 else 7)
    xi, w = gauss_legendre(order)
    grids = np.stack(np.meshgrid(*([xi] * n), indexing="ij"), axis=-1).reshape(-1, n)
    wgrid = np.prod(np.stack(np.meshgrid(*([w] * n), indexing="ij"), axis=-1).reshape(-1, n), axis=1)
    corners = np.stack(np.meshgrid(*([[0.0, 0.5]] * n), indexing="ij"), axis=-1).reshape(-1, n)
    total_vol = float(np.prod(hi - lo))

    def rule(plo, phi):
        width = phi - plo
        pts = plo[:, None, :] + width[:, None, :] * grids[None, :, :]
        f = np.asarray(integrand(pts.reshape(-1, n)), dtype=float).reshape(plo.shape[0], -1)
        vol = np.prod(width, axis=1)
        return (f * wgrid).sum(axis=1) * vol, (np.abs(f) * wgrid).sum(axis=1) * vol

    plo, phi = lo[None, :], hi[None, :]
    val, _ = rule(plo, phi)
    done = done_abs = err = 0.0
    panels = 1
    while plo.shape[0]:
        width = phi - plo
        clo = (plo[:, None, :] + width[:, None, :] * corners[None, :, :]).reshape(-1, n)
        chi = clo + np.repeat(width / 2, corners.shape[0], axis=0)
        cval, caval = rule(clo, chi)
        cval = cval.reshape(plo.shape[0], -1)
        caval = caval.reshape(plo.shape[0], -1)
        fine = cval.sum(axis=1)
        afine = caval.sum(axis=1)
        diff = np.abs(fine - val)
        tol = max(spec.abs_tol, spec.rel_tol * (done_abs + afine.sum()))
        share = np.prod(width, axis=1) / total_vol
        ok = diff <= tol * share
        if panels >= spec.max_subdivisions:
            raise ToleranceNotMet("integrate_box did not converge", best=done + fine.sum())
        done += fine[ok].sum()
        done_abs += afine[ok].sum()
        err += diff[ok].sum()
        keep = ~ok
        panels += int(keep.sum()) * (corners.shape[0] - 1)
        plo = clo.reshape(-1, corners.shape[0], n)[keep].reshape(-1, n)
        phi = chi.reshape(-1, corners.shape[0], n)[keep].reshape(-1, n)
        val = cval[keep].ravel()
    return float(done), float(max(err, 16 * _EPS * done_abs))


# -- star-shaped regions -------------------------------------------------------


@dataclass
class StarResult:
    """Integrals over star-shaped regions, one row per owner.

    ``area`` and ``base_moment`` (the integral of ``x - center``) come from
    the boundary radii alone.
    """

    values: np.ndarray
    errors: np.ndarray
    area: np.ndarray
    base_moment: np.ndarray
    n_dirs: np.ndarray
    converged: np.ndarray


def _directions(n: int, k: int, offset: bool = False):
    """Unit directions and surface weights of the angular rule of size ``k``."""
    if n == 1:
        return np.array([[-1.0], [1.0]]), np.array([1.0, 1.0])
    if n == 2:
        phi = 2 * np.pi * (np.arange(k) + (0.5 if offset else 0.0)) / k
        return np.column_stack([np.cos(phi), np.sin(phi)]), np.full(k, 2 * np.pi / k)
    if n == 3:
        kz = max(2, k // 2)
        z, wz = np.polynomial.legendre.leggauss(kz)
        phi = 2 * np.pi * np.arange(k) / k
        zz, pp = np.meshgrid(z, phi, indexing="ij")
        s = np.sqrt(1 - zz**2)
        dirs = np.column_stack([(s * np.cos(pp)).ravel(), (s * np.sin(pp)).ravel(), zz.ravel()])
        weights = np.repeat(wz, k) * (2 * np.pi / k)
        return dirs, weights
    raise DomainError("star_integrate supports n in {1, 2, 3}")


def _ray_radii(boundary, owner, centers, dirs, levels, guess, max_expansions=200, max_iter=100):
    """Solve ``F_b(c_b + r d) = level_b`` for each ray (Illinois regula falsi).

    ``F_b(c_b) < level_b`` is assumed; ``guess`` seeds the upper bracket.
    """
    nr = owner.size
    scale = np.maximum(np.abs(levels), np.abs(boundary(owner, centers)))
    ftol = 8 * _EPS * np.maximum(scale, 1e-300)

    def phi(idx, r):
        return boundary(owner[idx], centers[idx] + r[:, None] * dirs[idx]) - levels[idx]

    lo = np.zeros(nr)
    f_lo = -(levels - boundary(owner, centers))
    hi = np.array(guess, dtype=float)
    idx = np.arange(nr)
    f_hi = phi(idx, hi)
    out = np.full(nr, np.nan)
    exact = np.abs(f_hi) <= ftol
    out[exact] = hi[exact]

    pending = np.flatnonzero(~exact & (f_hi < 0))
    for _ in range(max_expansions):
        if pending.size == 0:
            break
        lo[pending], f_lo[pending] = hi[pending], f_hi[pending]
        hi[pending] *= 2.0
        f_hi[pending] = phi(pending, hi[pending])
        pending = pending[f_hi[pending] < 0]
    else:
        if pending.size:
            raise UnboundedError("ray does not leave the region: sublevel set is unbounded")

    active = np.flatnonzero(np.isnan(out))
    side = np.zeros(nr, dtype=int)
    for _ in range(max_iter):
        if active.size == 0:
            break
        a, fa, b, fb = lo[active], f_lo[active], hi[active], f_hi[active]
        x = b - fb * (b - a) / (fb - fa)
        bad = ~((x > a) & (x < b))
        x[bad] = 0.5 * (a[bad] + b[bad])
        fx = phi(active, x)
        done = (np.abs(fx) <= ftol[active]) | (b - a <= 4 * _EPS * b)
        out[active[done]] = np.where(np.abs(fx[done]) <= ftol[active[done]], x[done], b[done])
        left = fx < 0
        sa = side[active]
        lo[active] = np.where(left, x, a)
        f_lo[active] = np.where(left, fx, np.where(sa == 1, 0.5 * fa, fa))
        hi[active] = np.where(left, b, x)
        f_hi[active] = np.where(left, np.where(sa == -1, 0.5 * fb, fb), fx)
        side[active] = np.where(left, -1, 1)
        active = active[~done]
    if active.size:
        out[active] = hi[active]
    return out


def star_integrate(
    boundary: Callable[[np.ndarray, np.ndarray], np.ndarray],
    integrand: Callable[[np.ndarray, np.ndarray], np.ndarray] | None,
    centers,
    levels,
    *,
    frames=None,
    radius_guess=None,
    rel_tol: float = 1e-10,
    abs_tol: float = 1e-14,
    order: int = 15,
    n_dirs: int = 8,
    max_dirs: int = 1024,
    max_panels: int = 4000,
) -> StarResult:
    """Integrate over ``{x : F_b(x) <= level_b}`` for a batch of owners.

    Rays leave ``centers[b]`` along ``frames[b] @ u`` for unit directions
    ``u``; a frame adapted to the local shape of the region (for example the
    inverse square root of a Hessian) makes the boundary radius nearly
    constant so that the angular rule converges after one doubling.

    Args:
        boundary: ``boundary(owner, X)`` evaluates ``F_owner`` at the
            points ``X`` of shape ``(N, n)``.
        integrand: ``integrand(owner, X)`` returns ``(N,)`` or ``(N, k)``
            values, or ``None`` to compute only the geometric moments.
        centers: Interior points, ``(B, n)``.
        levels: Sublevel values, ``(B,)``.
        frames: Optional ``(B, n, n)`` linear maps applied to directions.
        radius_guess: Optional ``(B,)`` first guess of the radius in the
            frame coordinates.
        rel_tol: Scalar or ``(B,)`` relative tolerances.

    Returns:
        A :class:`StarResult`. Owners whose center is not strictly inside
        the region get zeros.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    nb, n = centers.shape
    levels = np.broadcast_to(np.asarray(levels, dtype=float), (nb,)).copy()
    rel = np.broadcast_to(np.asarray(rel_tol, dtype=float), (nb,))
    if frames is None:
        frames = np.broadcast_to(np.eye(n), (nb, n, n))
    frames = np.asarray(frames, dtype=float)
    jac = np.abs(np.linalg.det(frames))
    inside = boundary(np.arange(nb), centers) < levels
    if radius_guess is None:
        radius_guess = np.ones(nb)
    radius_guess = np.broadcast_to(np.asarray(radius_guess, dtype=float), (nb,))

    k_out = None
    values = errors = None
    area = np.zeros(nb)
    base_moment = np.zeros((nb, n))
    used = np.zeros(nb, dtype=int)
    converged = np.ones(nb, dtype=bool)

    def ray_pass(own, dirs_unit, wts):
        """Ray sums for owners ``own`` and one direction set."""
        m = dirs_unit.shape[0]
        ro = np.repeat(own, m)
        d = np.einsum("bij,kj->bki", frames[own], dirs_unit).reshape(-1, n)
        c = centers[ro]
        r = _ray_radii(boundary, ro, c, d, levels[ro], np.repeat(radius_guess[own], m))
        wr = np.tile(wts, own.size)
        geo_area = (wr * r**n / n).reshape(own.size, m).sum(axis=1) * jac[own]
        geo_mom = np.einsum("r,ri->ri", wr * r ** (n + 1) / (n + 1), d).reshape(own.size, m, n).sum(axis=1)
        geo_mom *= jac[own][:, None]
        if integrand is None:
            return np.zeros((own.size, 1)), np.zeros((own.size, 1)), geo_area, geo_mom, np.ones(own.size, bool)

        def radial(ray_owner, t):
            pts = c[ray_owner] + t[:, None] * d[ray_owner]
            f = _as_columns(integrand(ro[ray_owner], pts), t.size)
            return f * (t ** (n - 1))[:, None]

        vals, errs, ok = integrate_intervals(
            radial, np.zeros(r.size), r, rel_tol=rel[ro], abs_tol=abs_tol, order=order, max_panels=max_panels
        )
        kk = vals.shape[1]
        vals = (vals * wr[:, None]).reshape(own.size, m, kk).sum(axis=1) * jac[own][:, None]
        errs = (errs * wr[:, None]).reshape(own.size, m, kk).sum(axis=1) * jac[own][:, None]
        ok = ok.reshape(own.size, m).all(axis=1)
        return vals, errs, geo_area, geo_mom, ok

    own = np.flatnonzero(inside)
    if own.size == 0:
        return StarResult(np.zeros((nb, 1)), np.zeros((nb, 1)), area, base_moment, used, converged)

    if n == 1:
        dirs, wts = _directions(1, 2)
        v, e, ga, gm, ok = ray_pass(own, dirs, wts)
        values = np.zeros((nb, v.shape[1]))
        errors = np.zeros_like(values)
        values[own], errors[own], area[own], base_moment[own] = v, e, ga, gm
        used[own] = 2
        converged[own] = ok
        return StarResult(values, errors, area, base_moment, used, converged)

    k = n_dirs
    dirs, wts = _directions(n, k)
    v, e, ga, gm, ok = ray_pass(own, dirs, wts)
    values = np.zeros((nb, v.shape[1]))
    errors = np.zeros_like(values)
    cur_v, cur_e, cur_a, cur_m, cur_ok = v, e, ga, gm, ok
    active = own
    while True:
        k2 = 2 * k
        if n == 2:
            dirs, wts = _directions(2, k, offset=True)
            v, e, ga, gm, ok = ray_pass(active, dirs, wts)
            new_v = 0.5 * (cur_v + v)
            new_e = 0.5 * (cur_e + e)
            new_a = 0.5 * (cur_a + ga)
            new_m = 0.5 * (cur_m + gm)
        else:
            dirs, wts = _directions(3, k2)
            new_v, new_e, new_a, new_m, ok = ray_pass(active, dirs, wts)
        ok = ok & cur_ok
        diff = np.abs(new_v - cur_v)
        scale = np.maximum(np.abs(new_v), np.abs(new_e))
        scale = np.maximum(scale.max(axis=1, keepdims=True), 0.0)
        rel_a = rel[active][:, None]
        tol = np.maximum(abs_tol, rel_a * scale)
        area_ok = np.abs(new_a - cur_a) <= 10 * rel_a[:, 0] * np.abs(new_a)
        done = np.all(diff <= tol, axis=1) & area_ok
        final = done | (k2 >= max_dirs)
        idx = active[final]
        values[idx] = new_v[final]
        errors[idx] = new_e[final] + diff[final]
        area[idx] = new_a[final]
        base_moment[idx] = new_m[final]
        used[idx] = k2
        converged[idx] = ok[final] & done[final]
        keep = ~final
        if not np.any(keep):
            break
        active = active[keep]
        cur_v, cur_e, cur_a, cur_m, cur_ok = new_v[keep], new_e[keep], new_a[keep], new_m[keep], ok[keep]
        k = k2
    return StarResult(values, errors, area, base_moment, used, converged)


def local_frame(hessian: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """Inverse square root of (batched) symmetric matrices with an eigenvalue floor."""
    hessian = np.asarray(hessian, dtype=float)
    lam, vec = np.linalg.eigh(0.5 * (hessian + np.swapaxes(hessian, -1, -2)))
    top = np.max(np.abs(lam), axis=-1, keepdims=True)
    # a vanishing Hessian carries no shape information: fall back to the identity
    top = np.where(top > 0, top, 1.0)
    lam = np.where(np.all(lam <= 0, axis=-1, keepdims=True), 1.0, lam)
    lam = np.maximum(lam, floor * top)
    return np.einsum("...ij,...j,...kj->...ik", vec, lam**-0.5, vec)


def integrate_region(integrand, region_fn, level: float, spec: QuadratureSpec | None = None):
    """Integral of ``integrand`` over the sublevel set ``{region_fn <= level}``.

    The set is convex, hence star-shaped about the minimizer of
    ``region_fn``; rays in the Hessian-normalized frame carry adaptive
    radial Gauss panels and the angular rule is refined until it settles.

    Returns:
        ``(value, err_estimate)``; ``(0, 0)`` for an empty set.

    Raises:
        DomainError: If ``n`` is not 1, 2 or 3, or the set is unbounded.
        ToleranceNotMet: If the panel budget is exhausted.
    """
    spec = spec or QuadratureSpec()
    n = region_fn.dim
    if n not in (1, 2, 3):
        raise DomainError("integrate_region supports n in {1, 2, 3}")
    center, min_value = region_fn.argmin()
    if min_value >= level:
        return 0.0, 0.0
    frame = local_frame(region_fn.hessian(center[None, :]))
    guess = math.sqrt(2.0 * (level - min_value))

    def boundary(owner, x):
        return region_fn.value(x)

    def fun(owner, x):
        return integrand(x)

    try:
        res = star_integrate(
            boundary,
            fun,
            center[None, :],
            [level],
            frames=frame,
            radius_guess=[guess],
            rel_tol=spec.rel_tol,
            abs_tol=spec.abs_tol,
            order=spec.nodes_per_panel,
            max_panels=spec.max_subdivisions,
        )
    except UnboundedError as exc:
        raise DomainError(f"sublevel set is unbounded: {exc}") from exc
    value = float(res.values[0, 0])
    if not res.converged[0]:
        raise ToleranceNotMet("integrate_region did not converge", best=value)
    return value, float(res.errors[0, 0])
