"""Caps of epigraphs cut by non-vertical hyperplanes.

A direction is described by its slope ``y``: the unit normal is
``theta = (-y, 1) / sqrt(1 + |y|^2)``. The cut ``<(x, t), theta> <= a``
is ``t <= s + <x, y>`` with ``s = a / theta_last``, so the cap is the region
between the graph and an affine function. Writing ``c`` for the point where
``grad psi(c) = y`` and ``m = psi(c) - <c, y>`` for the tilted minimum, the
fiber length over ``x`` is ``tau - gap(x)`` where ``tau = s - m`` and
``gap`` is the Bregman gap of ``psi`` about ``c``. All cap quantities are
computed in these offset coordinates:

* volume ``eta = int (tau - gap)_+``, with ``d eta / d tau`` equal to the
  area of the base ``{gap <= tau}``;
* barycenter ``x``-part ``c + int d (tau - gap) / eta`` and height
  ``m + <X, y> + tau - int (tau - gap)^2 / (2 eta)``;
* the base centroid, which is where the cutting hyperplane touches the
  floating set.

:func:`solve_caps` handles batches of slopes. :func:`cap_volume`,
:func:`cap_level` and :func:`cap_barycenter` are a scalar path built on
absolute coordinates and a generic root finder; they serve as an
independent check of the batched engine.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import find_monotone_root, unit_ball_volume
from .errors import DomainError, ToleranceNotMet
from .functions import ConvexFunction, TiltedFn
from .quadrature import QuadratureSpec, integrate_region, local_frame, star_integrate

__all__ = [
    "CapBatch",
    "CapOptions",
    "CapStats",
    "Direction",
    "admissible",
    "cap_barycenter",
    "cap_level",
    "cap_volume",
    "conjugate_sample",
    "match_slopes",
    "solve_caps",
]


@dataclass(frozen=True)
class Direction:
    """Unit normal ``theta`` in ``R^(n+1)`` with positive last coordinate, and its slope."""

    theta: np.ndarray
    slope: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if abs(np.linalg.norm(theta) - 1.0) > 1e-12:
            raise DomainError("theta must be a unit vector")
        if theta[-1] <= 0:
            raise DomainError("theta must have a positive last coordinate")

    @classmethod
    def from_slope(cls, y) -> "Direction":
        y = np.atleast_1d(np.asarray(y, dtype=float))
        theta = np.append(-y, 1.0) / math.sqrt(1.0 + float(y @ y))
        return cls(theta, y.copy())

    @classmethod
    def from_theta(cls, theta) -> "Direction":
        theta = np.asarray(theta, dtype=float)
        theta = theta / np.linalg.norm(theta)
        if theta[-1] <= 0:
            raise DomainError("theta must have a positive last coordinate")
        return cls(theta, -theta[:-1] / theta[-1])

    @property
    def last(self) -> float:
        return float(self.theta[-1])


@dataclass
class CapStats:
    """One cap: the level ``a`` in theta units, its volume and barycenter."""

    direction: Direction
    level: float
    volume: float
    barycenter: np.ndarray
    tilted_min: float = math.nan
    depth: float = math.nan
    base_centroid: np.ndarray | None = None


@dataclass(frozen=True)
class CapOptions:
    """Tolerances of the batched cap solver."""

    volume_rel_tol: float = 1e-11
    quad_rel_tol: float = 1e-12
    max_newton: int = 80
    chunk: int = 256


@dataclass
class CapBatch:
    """Arrays describing ``B`` caps, one per slope.

    Attributes:
        slopes: ``(B, n)`` slopes ``y``.
        delta: ``(B,)`` target volumes.
        center: ``(B, n)`` points where ``grad psi = y``.
        tilted_min: ``(B,)`` values ``min_x psi(x) - <x, y> = -psi*(y)``.
        depth: ``(B,)`` cap depth ``tau`` above the tilted minimum.
        bary_drop: ``(B,)`` depth of the barycenter below the cut,
            measured in the sheared frame.
        barycenter_x: ``(B, n)`` spatial part of the barycenter.
        base_centroid: ``(B, n)`` centroid of the cap base.
        volume: ``(B,)`` achieved volumes.
        base_area: ``(B,)`` areas of the cap bases.
    """

    slopes: np.ndarray
    delta: np.ndarray
    center: np.ndarray
    tilted_min: np.ndarray
    depth: np.ndarray
    bary_drop: np.ndarray
    barycenter_x: np.ndarray
    base_centroid: np.ndarray
    volume: np.ndarray
    base_area: np.ndarray

    FIELDS = ("center", "tilted_min", "depth", "bary_drop", "barycenter_x", "base_centroid", "volume", "base_area")

    @property
    def beta(self) -> np.ndarray:
        """``tau - int (tau - gap)^2 / (2 eta)``: barycenter height above the tilted minimum."""
        return self.depth - self.bary_drop

    @property
    def ulam_conjugate(self) -> np.ndarray:
        """Conjugate of the Ulam floating function at each slope."""
        return -self.tilted_min - self.beta

    @property
    def floating_conjugate(self) -> np.ndarray:
        """Conjugate of the floating function at each slope."""
        return -(self.tilted_min + self.depth)

    @property
    def barycenter_height(self) -> np.ndarray:
        return self.tilted_min + np.sum(self.barycenter_x * self.slopes, axis=1) + self.beta

    @property
    def cut_offset(self) -> np.ndarray:
        """``s`` with the cut ``t = s + <x, y>``."""
        return self.tilted_min + self.depth

    def level(self) -> np.ndarray:
        """Cut levels in theta units, ``theta_last * s``."""
        return self.cut_offset / np.sqrt(1.0 + np.sum(self.slopes**2, axis=1))

    def take(self, idx) -> "CapBatch":
        return CapBatch(
            self.slopes[idx], self.delta[idx], *(getattr(self, f)[idx] for f in self.FIELDS)
        )

    @classmethod
    def empty(cls, nb: int, n: int) -> "CapBatch":
        z1 = lambda: np.full(nb, np.nan)  # noqa: E731
        zn = lambda: np.full((nb, n), np.nan)  # noqa: E731
        return cls(zn(), z1(), zn(), z1(), z1(), z1(), zn(), zn(), z1(), z1())

    def put(self, idx, other: "CapBatch") -> None:
        self.slopes[idx] = other.slopes
        self.delta[idx] = other.delta
        for f in self.FIELDS:
            getattr(self, f)[idx] = getattr(other, f)

    def row(self, i: int) -> list[float]:
        """Flat row of the stored quantities, in :attr:`FIELDS` order."""
        out: list[float] = []
        for f in self.FIELDS:
            out.extend(np.atleast_1d(getattr(self, f)[i]).tolist())
        return out

    @staticmethod
    def from_rows(slopes, delta, rows, n: int) -> "CapBatch":
        rows = np.asarray(rows, dtype=float).reshape(len(slopes), -1)
        vector = ("center", "barycenter_x", "base_centroid")
        cols, k = {}, 0
        for f in CapBatch.FIELDS:
            width = n if f in vector else 1
            block = rows[:, k : k + width]
            cols[f] = block if f in vector else block[:, 0]
            k += width
        return CapBatch(np.asarray(slopes, dtype=float), np.asarray(delta, dtype=float), **cols)


def admissible(psi: ConvexFunction, direction: Direction) -> bool:
    """Whether caps in this direction are certified finite.

    Only supercoercive functions with upward normals qualify; coercive
    functions such as max-affine ones are refused even where some caps
    happen to be finite.
    """
    return bool(psi.supercoercive and direction.theta[-1] > 0)


def _model_depth(det_h: np.ndarray, delta: np.ndarray, n: int) -> np.ndarray:
    """Depth of a cap of volume ``delta`` for the quadratic model with Hessian determinant ``det_h``."""
    coef = unit_ball_volume(n) * 2 ** (n / 2) * 2.0 / (n + 2)
    good = np.isfinite(det_h) & (det_h > 0)
    safe = np.where(good, det_h, 1.0)
    tau = (delta * np.sqrt(safe) / coef) ** (2.0 / (n + 2))
    return np.where(good, tau, delta ** (2.0 / (n + 2)))


def _solve_block(psi: ConvexFunction, ys: np.ndarray, delta: np.ndarray, x0, opts: CapOptions) -> CapBatch:
    nb, n = ys.shape
    c = psi.conjugate_argmin(ys, x0=x0)
    tilted_min = psi.value(c) - np.sum(c * ys, axis=1)
    hess = psi.hessian(c)
    frames = local_frame(hess)
    tau = _model_depth(np.linalg.det(hess), delta, n)
    noise = psi.bregman_noise(c, ys)
    # radius guess in frame units: exact for quadratics
    q = 2.0 / (n + 2)

    def quad_tol(idx, depth):
        # no tighter than the rounding floor of the fiber lengths
        return np.maximum(opts.quad_rel_tol, noise[idx] / depth)

    def evaluate(idx, depth):
        cc, yy = c[idx], ys[idx]

        def boundary(owner, d):
            return psi.bregman_offset(cc[owner], d, yy[owner])

        def integrand(owner, d):
            w = np.maximum(depth[owner] - psi.bregman_offset(cc[owner], d, yy[owner]), 0.0)
            return np.column_stack([w, w * w, d * w[:, None]])

        return star_integrate(
            boundary,
            integrand,
            np.zeros((idx.size, n)),
            depth,
            frames=frames[idx],
            radius_guess=np.sqrt(2.0 * depth),
            rel_tol=quad_tol(idx, depth),
            abs_tol=1e-300,
        )

    out = CapBatch.empty(nb, n)
    out.slopes[:] = ys
    out.delta[:] = delta
    lo = np.zeros(nb)
    hi = np.full(nb, np.inf)
    active = np.arange(nb)
    for _ in range(opts.max_newton):
        if active.size == 0:
            break
        res = evaluate(active, tau[active])
        eta = res.values[:, 0]
        area = res.area
        target = delta[active]
        vol_tol = np.maximum(opts.volume_rel_tol, 4 * quad_tol(active, tau[active]))
        done = np.abs(eta - target) <= vol_tol * target
        done &= res.converged
        if np.any(done):
            i = active[done]
            e = eta[done]
            out.center[i] = c[i]
            out.tilted_min[i] = tilted_min[i]
            out.depth[i] = tau[i]
            out.bary_drop[i] = res.values[done, 1] / (2.0 * e)
            out.barycenter_x[i] = c[i] + res.values[done, 2:] / e[:, None]
            out.base_centroid[i] = c[i] + res.base_moment[done] / area[done][:, None]
            out.volume[i] = e
            out.base_area[i] = area[done]
        t = tau[active]
        below = eta < target
        lo[active] = np.where(below, np.maximum(lo[active], t), lo[active])
        hi[active] = np.where(below, hi[active], np.minimum(hi[active], t))
        # Newton on eta^q, which is nearly linear in the depth
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = q * eta ** (q - 1) * area
            step = (target**q - eta**q) / slope
        new = t + step
        la, ha = lo[active], hi[active]
        bad = ~np.isfinite(new) | (new <= la) | (new >= ha)
        fallback = np.where(np.isfinite(ha), 0.5 * (la + ha), 2.0 * np.maximum(t, la))
        tau[active] = np.where(bad, fallback, new)
        active = active[~done]
    if active.size:
        raise ToleranceNotMet(f"cap volume not resolved for {active.size} slopes", best=out)
    return out


def solve_caps(
    psi: ConvexFunction,
    slopes,
    delta,
    *,
    x0=None,
    options: CapOptions | None = None,
    cache=None,
    threads: int = 1,
    strict: bool = True,
) -> CapBatch:
    """Caps of volume ``delta`` for a batch of slopes.

    Args:
        psi: Supercoercive convex function.
        slopes: ``(B, n)`` slopes.
        delta: Target volume, scalar or ``(B,)``.
        x0: Optional warm starts for the points where ``grad psi = y``.
        cache: Optional object with ``lookup(psi, delta, y)`` and
            ``store(psi, delta, y, row)`` (see :class:`ulamfloat.cache.CapCache`).
        threads: Worker threads; results do not depend on it.
        strict: If false, unresolved caps come back as NaN rows instead
            of raising.

    Raises:
        DomainError: For non-admissible input or ``delta <= 0``.
        ToleranceNotMet: If some cap level cannot be resolved and ``strict`` is set.
    """
    opts = options or CapOptions()
    if not psi.supercoercive:
        raise DomainError("caps are only certified for supercoercive functions")
    ys = np.atleast_2d(np.asarray(slopes, dtype=float))
    nb, n = ys.shape
    if n != psi.dim:
        raise DomainError("slope dimension does not match the function")
    delta = np.broadcast_to(np.asarray(delta, dtype=float), (nb,)).copy()
    if np.any(~(delta > 0)):
        raise DomainError("cap volumes must be positive")
    starts = None if x0 is None else np.broadcast_to(np.asarray(x0, dtype=float), ys.shape)

    out = CapBatch.empty(nb, n)
    todo = np.arange(nb)
    if cache is not None:
        hits = []
        for i in range(nb):
            row = cache.lookup(psi, delta[i], ys[i])
            if row is not None:
                out.put([i], CapBatch.from_rows(ys[i : i + 1], delta[i : i + 1], [row], n))
                hits.append(i)
        todo = np.setdiff1d(todo, hits)

    blocks = [todo[s : s + opts.chunk] for s in range(0, todo.size, opts.chunk)]

    def run(idx):
        try:
            return idx, _solve_block(psi, ys[idx], delta[idx], None if starts is None else starts[idx], opts)
        except ToleranceNotMet as exc:
            if strict:
                raise
            if isinstance(exc.best, CapBatch):
                return idx, exc.best
            # failure below the cap solver (e.g. the conjugate argmin): no partial rows
            part = CapBatch.empty(idx.size, n)
            part.slopes[:] = ys[idx]
            part.delta[:] = delta[idx]
            return idx, part

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, blocks))
    else:
        results = [run(b) for b in blocks]
    for idx, part in results:
        out.put(idx, part)
        if cache is not None:
            for j, i in enumerate(idx):
                if np.isfinite(part.depth[j]):
                    cache.store(psi, delta[i], ys[i], part.row(j))
    return out


def _initial_gain(psi, y, p, delta, kind, hess, warm, options, cache, threads):
    """Inverse of a forward-difference Jacobian of the anchor map ``y -> P(y)``.

    Falls back to the Hessian of ``psi`` where a perturbed cap fails or the
    Jacobian is singular.
    """
    nb, n = y.shape
    jac = np.empty((nb, n, n))
    ok = np.ones(nb, dtype=bool)
    h = 1e-5 * np.maximum(1.0, np.linalg.norm(y, axis=1))
    for i in range(n):
        yi = y.copy()
        yi[:, i] += h
        caps = solve_caps(psi, yi, delta, x0=warm, options=options, cache=cache, threads=threads, strict=False)
        pi = caps.barycenter_x if kind == "ulam" else caps.base_centroid
        jac[:, :, i] = (pi - p) / h[:, None]
        ok &= np.isfinite(caps.depth)
    det = np.linalg.det(jac)
    ok &= np.isfinite(det) & (np.abs(det) > 0)
    gain = hess.copy()
    if np.any(ok):
        gain[ok] = np.linalg.inv(jac[ok])
    return gain


@dataclass
class MatchResult:
    """Caps whose barycenter (or base centroid) sits at requested points."""

    targets: np.ndarray
    caps: CapBatch
    residual: np.ndarray
    iterations: int = 0
    extra: dict = field(default_factory=dict)


def match_slopes(
    psi: ConvexFunction,
    targets,
    delta: float,
    kind: str = "ulam",
    *,
    rel_tol: float = 1e-10,
    max_iter: int = 60,
    options: CapOptions | None = None,
    cache=None,
    threads: int = 1,
) -> MatchResult:
    """Find, for each target ``x``, the slope whose cap is anchored at ``x``.

    ``kind="ulam"`` anchors the cap barycenter, so the supporting plane of
    the Ulam floating function at the barycenter passes over ``x``.
    ``kind="floating"`` anchors the centroid of the cap base, where the
    cutting plane touches the floating function.

    The iteration ``y <- y + K (x - P(y))`` starts from ``y = grad psi(x)``
    and the inverse of a finite-difference Jacobian of ``P`` there, with
    Broyden updates of ``K``. A trial slope
    whose cap fails or whose residual grows is rejected and the step is
    halved. The iteration stops when the quadratic misfit ``r^T K r / 2``
    (and ``r^T H r / 2`` with the Hessian of ``psi``) drops below ``rel_tol``
    times the cap depth; it estimates the error of the supporting-plane
    value at ``x``.
    """
    if kind not in ("ulam", "floating"):
        raise DomainError("kind must be 'ulam' or 'floating'")
    x = np.atleast_2d(np.asarray(targets, dtype=float))
    nb, n = x.shape
    hess = psi.hessian(x)
    gain = hess.copy()
    base = psi.gradient(x)
    trial = base.copy()
    step = np.zeros_like(x)
    base_p = np.full_like(x, np.nan)
    base_norm = np.full(nb, np.inf)
    halvings = np.zeros(nb, dtype=int)
    # trust radius on slope steps; grows on success, shrinks on rejection
    trust = 0.25 * (1.0 + np.linalg.norm(base, axis=1))
    out = CapBatch.empty(nb, n)
    residual = np.full(nb, np.nan)
    warm = x.copy()
    active = np.arange(nb)
    it = 0
    for it in range(1, max_iter + 1):
        caps = solve_caps(
            psi, trial[active], delta, x0=warm[active], options=options, cache=cache, threads=threads, strict=False
        )
        p = caps.barycenter_x if kind == "ulam" else caps.base_centroid
        failed = ~np.isfinite(caps.depth)
        if it == 1 and np.any(failed):
            raise ToleranceNotMet(f"cap at the gradient slope failed for {failed.sum()} targets", best=out)
        if it == 1:
            gain = _initial_gain(psi, trial, p, delta, kind, hess, warm, options, cache, threads)
        r = x[active] - p
        norm = np.linalg.norm(r, axis=1)
        accept = ~failed & (norm < base_norm[active])
        # second-order error of the supporting plane value at x; the gain
        # estimates the curvature of the envelope, the Hessian that of psi
        curv = np.maximum(
            np.abs(np.einsum("bi,bij,bj->b", r, gain[active], r)), np.einsum("bi,bij,bj->b", r, hess[active], r)
        )
        misfit = 0.5 * curv
        done = accept & (misfit <= rel_tol * caps.depth + 1e-300)
        if np.any(done):
            out.put(active[done], caps.take(done))
            residual[active[done]] = misfit[done]
        # secant information from every resolved trial, accepted or not
        known = ~failed & np.all(np.isfinite(base_p[active]), axis=1)
        if np.any(known):
            k = active[known]
            s_ = trial[k] - base[k]
            d = p[known] - base_p[k]
            dd = np.sum(d * d, axis=1)
            ok = dd > 0
            corr = (s_ - np.einsum("bij,bj->bi", gain[k], d)) / np.where(ok, dd, 1.0)[:, None]
            gain[k] += np.where(ok[:, None, None], corr[:, :, None] * d[:, None, :], 0.0)
        acc = active[accept]
        base_prev = base.copy()
        base[acc] = trial[acc]
        base_p[acc] = p[accept]
        base_norm[acc] = norm[accept]
        warm[acc] = caps.center[accept]
        halvings[acc] = 0
        step[acc] = np.einsum("bij,bj->bi", gain[acc], r[accept])
        trust[acc] = np.maximum(trust[acc], 2.0 * np.linalg.norm(trial[acc] - base_prev[acc], axis=1))
        rej = active[~accept]
        halvings[rej] += 1
        step[rej] *= 0.5
        trust[rej] = 0.5 * np.linalg.norm(step[rej], axis=1)
        length = np.linalg.norm(step[active], axis=1)
        over = length > trust[active]
        step[active[over]] *= (trust[active[over]] / length[over])[:, None]
        trial[active] = base[active] + step[active]
        if np.any(halvings > 40):
            break
        active = active[~done]
        if active.size == 0:
            break
    if active.size:
        raise ToleranceNotMet(f"slope matching failed for {active.size} targets", best=out)
    return MatchResult(x, out, residual, it)


# -- scalar path ------------------------------------------------------------------


def _tilted(psi: ConvexFunction, direction: Direction) -> TiltedFn:
    if not admissible(psi, direction):
        raise DomainError("direction is not admissible for this function")
    return TiltedFn(psi, direction.slope)


def cap_volume(psi: ConvexFunction, direction: Direction, a: float, spec: QuadratureSpec | None = None) -> float:
    """Volume of the epigraph cap ``{<z, theta> <= a}``.

    Integrates the vertical fiber length ``(a / theta_last - psi_theta)_+``
    over the sublevel set of the tilted function.
    """
    spec = spec or QuadratureSpec(abs_tol=1e-300, rel_tol=1e-9)
    tilted = _tilted(psi, direction)
    s = a / direction.last
    value, _ = integrate_region(lambda x: np.maximum(s - tilted.value(x), 0.0), tilted, s, spec)
    return value


def cap_level(psi: ConvexFunction, direction: Direction, delta: float, tol: float = 1e-9) -> float:
    """Cut level ``a`` with cap volume ``delta``.

    The lower bracket is ``theta_last * min psi_theta``, the first level with
    a nonempty cap. The residual tolerance is scaled by ``min(1, delta)``
    so that tiny volumes are resolved in relative terms.
    """
    if not delta > 0:
        raise DomainError("delta must be positive")
    tilted = _tilted(psi, direction)
    _, vmin = tilted.argmin()
    lo = direction.last * vmin
    step = direction.last * max(delta, 1e-300) ** (2.0 / (psi.dim + 2))
    return find_monotone_root(
        lambda a: cap_volume(psi, direction, a),
        delta,
        lo,
        tol=tol * min(1.0, delta),
        xtol=1e-15 * max(1.0, abs(lo)),
        step=step,
    )


def cap_barycenter(psi: ConvexFunction, direction: Direction, delta: float, tol: float = 1e-9) -> CapStats:
    """Cap of volume ``delta`` with its barycenter, by integration over vertical fibers."""
    a = cap_level(psi, direction, delta, tol)
    tilted = _tilted(psi, direction)
    spec = QuadratureSpec(abs_tol=1e-300, rel_tol=1e-9)
    s = a / direction.last
    y = direction.slope

    def fiber(x):
        return np.maximum(s - tilted.value(x), 0.0)

    def top(x):
        return s + x @ y

    volume, _ = integrate_region(fiber, tilted, s, spec)
    coords = []
    for i in range(psi.dim):
        v, _ = integrate_region(lambda x, i=i: x[:, i] * fiber(x), tilted, s, spec)
        coords.append(v / volume)
    # (T^2 - psi^2) / 2 = w (T - w / 2) with w the fiber length
    height, _ = integrate_region(lambda x: fiber(x) * (top(x) - 0.5 * fiber(x)), tilted, s, spec)
    bary = np.array(coords + [height / volume])
    xmin, vmin = tilted.argmin()
    return CapStats(direction, a, volume, bary, tilted_min=vmin, depth=s - vmin)


def conjugate_sample(psi: ConvexFunction, delta: float, y) -> float:
    """Conjugate of the Ulam floating function at slope ``y``.

    Equals ``<X, y> - t`` for the barycenter ``(X, t)`` of the cap of volume
    ``delta`` in the direction of ``(-y, 1)``.
    """
    stats = cap_barycenter(psi, Direction.from_slope(y), delta)
    bary = stats.barycenter
    return float(bary[:-1] @ np.atleast_1d(y) - bary[-1])
