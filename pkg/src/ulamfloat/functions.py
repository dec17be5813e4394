"""Convex functions ``psi`` and the log-concave densities ``exp(-psi)``.

Every family evaluates on arrays of points shaped ``(..., n)``. Families
with closed-form derivatives attach them; the rest fall back to central
differences. Besides values and derivatives a family knows

* a coercivity pair ``(a, b)`` with ``psi(x) >= a |x| + b``,
* how to find the point where the gradient equals a given slope
  (:meth:`ConvexFunction.conjugate_argmin`),
* its Bregman gap about such a point, evaluated on offsets so that small
  gaps keep full relative precision.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .core import find_monotone_root, minimize_convex
from .errors import DomainError, NonsmoothPointError, ToleranceNotMet

__all__ = [
    "CallableFn",
    "ComposedFn",
    "ConvexFunction",
    "GridFunction",
    "MaxAffineFn",
    "PNormFn",
    "PointwiseMaxFn",
    "PointwiseMinFn",
    "QuadraticFn",
    "SlopeGrid",
    "SmoothMaxAffineFn",
    "TiltedFn",
    "coercivity_box",
    "conjugate_on_grid",
    "derivatives",
    "epigraph_curvature",
    "epigraph_normal",
    "rolling_bound",
]

_EPS = np.finfo(float).eps
KINK_TOL = 1e-9


def _fmt(arr) -> str:
    return "[" + ",".join(repr(float(v)) for v in np.ravel(arr)) + "]"


class ConvexFunction:
    """Base class: value plus optional derivatives of a convex ``psi`` on ``R^n``.

    Subclasses implement :meth:`_value` and, when available, :meth:`_gradient`
    and :meth:`_hessian` on ``(N, n)`` arrays.
    """

    has_gradient = False
    has_hessian = False

    def __init__(self, dim: int, coercivity: tuple[float, float], supercoercive: bool, minimizer_hint=None):
        if dim < 1:
            raise DomainError("dimension must be >= 1")
        a, b = coercivity
        if not a > 0:
            raise DomainError(f"coercivity slope must be positive, got {a!r}")
        self.dim = int(dim)
        self.coercivity = (float(a), float(b))
        self.supercoercive = bool(supercoercive)
        hint = np.zeros(dim) if minimizer_hint is None else np.asarray(minimizer_hint, dtype=float).reshape(dim)
        self.minimizer_hint = hint
        self._argmin = None

    # -- evaluation ------------------------------------------------------------

    def _points(self, x) -> tuple[np.ndarray, tuple]:
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if arr.shape[-1] != self.dim:
            raise DomainError(f"points must have trailing dimension {self.dim}, got shape {arr.shape}")
        return arr.reshape(-1, self.dim), arr.shape[:-1]

    def value(self, x):
        pts, shape = self._points(x)
        return self._value(pts).reshape(shape)

    __call__ = value

    def gradient(self, x):
        pts, shape = self._points(x)
        g = self._gradient(pts) if self.has_gradient else fd_gradient(self._value, pts)
        return g.reshape(shape + (self.dim,))

    def hessian(self, x):
        pts, shape = self._points(x)
        if self.has_hessian:
            h = self._hessian(pts)
        elif self.has_gradient:
            h = fd_jacobian(self._gradient, pts)
        else:
            h = fd_hessian(self._value, pts)
        h = 0.5 * (h + np.swapaxes(h, -1, -2))
        return h.reshape(shape + (self.dim, self.dim))

    def _value(self, pts):
        raise NotImplementedError

    # -- structure -------------------------------------------------------------

    def key(self) -> str:
        """Canonical parameter serialization; equal keys mean equal functions."""
        raise NotImplementedError

    def hash(self) -> str:
        return hashlib.sha256(self.key().encode()).hexdigest()[:16]

    def argmin(self):
        """Global minimizer and minimum, found once with :func:`minimize_convex`."""
        if self._argmin is None:
            x, fx = minimize_convex(self, self.minimizer_hint, tol=1e-14)
            self._argmin = (x, float(fx))
        return self._argmin

    def bregman_offset(self, centers, offsets, slopes):
        """``psi(c + d) - psi(c) - <y, d>`` for rows of ``(c, d, y)``.

        When ``y`` is the gradient at ``c`` this is the Bregman gap. The
        default subtracts function values; families override it where a
        cancellation-free form exists.
        """
        centers = np.asarray(centers, dtype=float)
        offsets = np.asarray(offsets, dtype=float)
        slopes = np.asarray(slopes, dtype=float)
        return self.value(centers + offsets) - self.value(centers) - np.sum(slopes * offsets, axis=-1)

    bregman_exact = False

    def bregman_noise(self, centers, slopes) -> np.ndarray:
        """Rounding floor of :meth:`bregman_offset` near ``centers``.

        The default form subtracts values of size ``|psi(c)| + |<y, c>|``;
        exact forms only lose a few ulps of the result.
        """
        if self.bregman_exact:
            return np.zeros(np.atleast_2d(centers).shape[0])
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        slopes = np.atleast_2d(np.asarray(slopes, dtype=float))
        size = 1.0 + np.abs(self.value(centers)) + np.abs(np.sum(centers * slopes, axis=1))
        return 16 * np.finfo(float).eps * size

    def conjugate_argmin(self, slopes, x0=None, tol: float = 1e-13, max_iter: int = 200):
        """Points ``c`` with ``grad psi(c) = y`` for each row ``y`` of ``slopes``.

        Damped Newton on ``psi(x) - <x, y>`` with per-row backtracking.
        """
        ys = np.atleast_2d(np.asarray(slopes, dtype=float))
        nb = ys.shape[0]
        if x0 is None:
            x = np.broadcast_to(self.argmin()[0], ys.shape).copy()
        else:
            x = np.broadcast_to(np.asarray(x0, dtype=float), ys.shape).copy()
        active = np.arange(nb)
        for _ in range(max_iter):
            if active.size == 0:
                return x
            xa, ya = x[active], ys[active]
            g = self.gradient(xa) - ya
            gnorm = np.linalg.norm(g, axis=1)
            scale = np.maximum(1.0, np.linalg.norm(ya, axis=1))
            done = gnorm <= tol * scale
            h = self.hessian(xa)
            step = np.empty_like(g)
            for i in range(active.size):
                try:
                    step[i] = -np.linalg.solve(h[i], g[i])
                    if not np.all(np.isfinite(step[i])) or step[i] @ g[i] >= 0:
                        raise np.linalg.LinAlgError
                except np.linalg.LinAlgError:
                    step[i] = -g[i]
            phi0 = self.value(xa) - np.sum(xa * ya, axis=1)
            t = np.ones(active.size)
            pending = np.flatnonzero(~done)
            for _ in range(60):
                if pending.size == 0:
                    break
                trial = xa[pending] + t[pending, None] * step[pending]
                phi = self.value(trial) - np.sum(trial * ya[pending], axis=1)
                slope = np.sum(step[pending] * g[pending], axis=1)
                ok = phi <= phi0[pending] + 1e-4 * t[pending] * slope + 4 * _EPS * np.abs(phi0[pending])
                t[pending[~ok]] *= 0.5
                pending = pending[~ok]
            moved = ~done
            x[active[moved]] = xa[moved] + t[moved, None] * step[moved]
            stalled = moved & (np.linalg.norm(t[:, None] * step, axis=1) <= 4 * _EPS * np.maximum(1, np.linalg.norm(xa, axis=1)))
            active = active[~done & ~stalled]
        if active.size:
            raise ToleranceNotMet("conjugate_argmin did not converge", best=x)
        return x

    def density(self, x):
        """The log-concave function ``exp(-psi(x))``."""
        return np.exp(-self.value(x))

    def __repr__(self):
        return f"{type(self).__name__}({self.key()})"


# -- finite differences -----------------------------------------------------------


def _steps(pts, power):
    return _EPS**power * np.maximum(1.0, np.linalg.norm(pts, axis=1))


def fd_gradient(value, pts):
    """Central-difference gradient with step ``eps^(1/3) * max(1, |x|)``."""
    n = pts.shape[1]
    h = _steps(pts, 1 / 3)
    grad = np.empty_like(pts)
    for i in range(n):
        e = np.zeros_like(pts)
        e[:, i] = h
        grad[:, i] = (value(pts + e) - value(pts - e)) / (2 * h)
    return grad


def fd_jacobian(gradient, pts):
    """Central differences of an analytic gradient."""
    n = pts.shape[1]
    h = _steps(pts, 1 / 3)
    jac = np.empty(pts.shape + (n,))
    for j in range(n):
        e = np.zeros_like(pts)
        e[:, j] = h
        jac[:, :, j] = (gradient(pts + e) - gradient(pts - e)) / (2 * h)[:, None]
    return jac


def fd_hessian(value, pts):
    """Second central differences of values.

    The step is ``eps^(1/4) * max(1, |x|)``, which balances truncation and
    rounding for a second difference quotient.
    """
    n = pts.shape[1]
    h = _steps(pts, 1 / 4)
    f0 = value(pts)
    hess = np.empty(pts.shape + (n,))
    unit = np.eye(n)
    for i in range(n):
        ei = unit[i] * h[:, None]
        hess[:, i, i] = (value(pts + ei) - 2 * f0 + value(pts - ei)) / h**2
        for j in range(i + 1, n):
            ej = unit[j] * h[:, None]
            v = (
                value(pts + ei + ej) - value(pts + ei - ej) - value(pts - ei + ej) + value(pts - ei - ej)
            ) / (4 * h**2)
            hess[:, i, j] = hess[:, j, i] = v
    return hess


# -- families -------------------------------------------------------------------


class QuadraticFn(ConvexFunction):
    """``psi(x) = 1/2 <x, A x> + <b, x> + c`` with ``A`` positive definite."""

    has_gradient = True
    has_hessian = True

    def __init__(self, A, b=None, c: float = 0.0):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise DomainError("A must be square")
        if not np.allclose(A, A.T, rtol=1e-12, atol=1e-12 * np.abs(A).max()):
            raise DomainError("A must be symmetric")
        A = 0.5 * (A + A.T)
        lam = np.linalg.eigvalsh(A)
        if lam[0] <= 0:
            raise DomainError("A must be positive definite")
        self.A = A
        self.b = np.zeros(n) if b is None else np.asarray(b, dtype=float).reshape(n)
        self.c = float(c)
        self._A_inv = np.linalg.inv(A)
        self.eig_min = float(lam[0])
        slope = math.sqrt(self.eig_min)
        offset = self.c - (np.linalg.norm(self.b) + slope) ** 2 / (2 * self.eig_min)
        center = -self._A_inv @ self.b
        super().__init__(n, (slope, offset), True, center)
        self._argmin = (center, float(self.c - 0.5 * self.b @ self._A_inv @ self.b))

    def _value(self, pts):
        return 0.5 * np.einsum("pi,ij,pj->p", pts, self.A, pts) + pts @ self.b + self.c

    def _gradient(self, pts):
        return pts @ self.A + self.b

    def _hessian(self, pts):
        return np.broadcast_to(self.A, (pts.shape[0],) + self.A.shape).copy()

    def conjugate_argmin(self, slopes, x0=None, **kwargs):
        ys = np.atleast_2d(np.asarray(slopes, dtype=float))
        return (ys - self.b) @ self._A_inv

    bregman_exact = True

    def bregman_offset(self, centers, offsets, slopes):
        d = np.asarray(offsets, dtype=float)
        lin = np.asarray(centers, dtype=float) @ self.A + self.b - np.asarray(slopes, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", d, self.A, d) + np.sum(lin * d, axis=-1)

    def key(self):
        return f"quadratic(A={_fmt(self.A)};b={_fmt(self.b)};c={self.c!r})"


class PNormFn(ConvexFunction):
    """``psi(x) = scale * |x|^p / p`` with ``p > 1``."""

    has_gradient = True
    has_hessian = True

    def __init__(self, p: float, scale: float = 1.0, dim: int = 1):
        if not p > 1:
            raise DomainError("PNormFn needs p > 1")
        if not scale > 0:
            raise DomainError("PNormFn needs scale > 0")
        self.p, self.scale = float(p), float(scale)
        offset = -(1 - 1 / self.p) * self.scale ** (-1 / (self.p - 1))
        super().__init__(dim, (1.0, offset), True)
        self._argmin = (np.zeros(dim), 0.0)

    def _value(self, pts):
        return self.scale * np.linalg.norm(pts, axis=1) ** self.p / self.p

    def _gradient(self, pts):
        r = np.linalg.norm(pts, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(r > 0, self.scale * r ** (self.p - 2), 0.0)
        return coef[:, None] * pts

    def _hessian(self, pts):
        n = self.dim
        r = np.linalg.norm(pts, axis=1)
        eye = np.eye(n)
        with np.errstate(divide="ignore", invalid="ignore"):
            radial = self.scale * r ** (self.p - 2)
            u = np.where(r[:, None] > 0, pts / r[:, None], 0.0)
        radial = np.where(r > 0, radial, 0.0 if self.p > 2 else (self.scale if self.p == 2 else np.inf))
        h = radial[:, None, None] * (eye + (self.p - 2) * u[:, :, None] * u[:, None, :])
        return h

    def conjugate_argmin(self, slopes, x0=None, **kwargs):
        ys = np.atleast_2d(np.asarray(slopes, dtype=float))
        r = np.linalg.norm(ys, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(r > 0, (r / self.scale) ** (1 / (self.p - 1)) / r, 0.0)
        return coef[:, None] * ys

    def key(self):
        return f"pnorm(p={self.p!r};scale={self.scale!r};n={self.dim})"


def _hull_distance(slopes: np.ndarray) -> float:
    """Distance from the origin to the boundary of the convex hull of ``slopes``.

    Nonpositive when the origin is not interior, i.e. when the max-affine
    function is not coercive.
    """
    n = slopes.shape[1]
    if n == 1:
        return float(min(slopes.max(), -slopes.min()))
    from scipy.spatial import ConvexHull, QhullError

    try:
        hull = ConvexHull(slopes)
    except QhullError:
        return 0.0
    return float(np.min(-hull.equations[:, -1]))


class MaxAffineFn(ConvexFunction):
    """``psi(x) = max_i (<s_i, x> + o_i)``; coercive but never supercoercive."""

    has_gradient = True
    has_hessian = True

    def __init__(self, slopes, offsets):
        s = np.asarray(slopes, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        o = np.asarray(offsets, dtype=float).reshape(-1)
        if s.shape[0] != o.size:
            raise DomainError("slopes and offsets must have the same length")
        n = s.shape[1]
        if s.shape[0] < n + 1:
            raise DomainError("need at least n + 1 affine pieces")
        dist = _hull_distance(s)
        if dist <= 0:
            raise DomainError("slopes must positively span R^n")
        self.slopes, self.offsets = s, o
        super().__init__(n, (dist, float(o.min())), False)

    def _pieces(self, pts):
        return pts @ self.slopes.T + self.offsets

    def _value(self, pts):
        return self._pieces(pts).max(axis=1)

    def _active(self, pts):
        v = self._pieces(pts)
        top = v.max(axis=1)
        ties = (v >= top[:, None] - KINK_TOL * np.maximum(1.0, np.abs(top))[:, None]).sum(axis=1)
        if np.any(ties > 1):
            raise NonsmoothPointError("point lies on a kink of the max-affine function")
        return v.argmax(axis=1)

    def _gradient(self, pts):
        return self.slopes[self._active(pts)]

    def _hessian(self, pts):
        self._active(pts)
        return np.zeros((pts.shape[0], self.dim, self.dim))

    def key(self):
        return f"maxaffine(slopes={_fmt(self.slopes)};offsets={_fmt(self.offsets)};n={self.dim})"


class SmoothMaxAffineFn(ConvexFunction):
    """Log-sum-exp smoothing of a max-affine function plus ``mu |x|^2 / 2``.

    ``psi(x) = logsumexp(beta * (<s_i, x> + o_i)) / beta + mu |x|^2 / 2``.
    """

    has_gradient = True
    has_hessian = True

    def __init__(self, slopes, offsets, beta: float = 100.0, mu: float = 1e-6):
        s = np.asarray(slopes, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        o = np.asarray(offsets, dtype=float).reshape(-1)
        if s.shape[0] != o.size:
            raise DomainError("slopes and offsets must have the same length")
        if not beta > 0 or mu < 0:
            raise DomainError("need beta > 0 and mu >= 0")
        dist = _hull_distance(s)
        if dist <= 0:
            raise DomainError("slopes must positively span R^n")
        self.slopes, self.offsets = s, o
        self.beta, self.mu = float(beta), float(mu)
        super().__init__(s.shape[1], (dist, float(o.min())), self.mu > 0)

    def _weights(self, pts):
        z = self.beta * (pts @ self.slopes.T + self.offsets)
        lse = logsumexp(z, axis=1)
        return z, lse, np.exp(z - lse[:, None])

    def _value(self, pts):
        _, lse, _ = self._weights(pts)
        return lse / self.beta + 0.5 * self.mu * np.sum(pts**2, axis=1)

    def _gradient(self, pts):
        _, _, w = self._weights(pts)
        return w @ self.slopes + self.mu * pts

    def _hessian(self, pts):
        _, _, w = self._weights(pts)
        # pairwise form of the weighted covariance: no cancellation when one
        # piece dominates
        diff = self.slopes[:, None, :] - self.slopes[None, :, :]
        outer = diff[:, :, :, None] * diff[:, :, None, :]
        cov = 0.5 * np.einsum("pk,pl,klij->pij", w, w, outer)
        return self.beta * cov + self.mu * np.eye(self.dim)

    def key(self):
        return (
            f"smoothmaxaffine(slopes={_fmt(self.slopes)};offsets={_fmt(self.offsets)};"
            f"beta={self.beta!r};mu={self.mu!r};n={self.dim})"
        )


class ComposedFn(ConvexFunction):
    """``x -> psi(T x)`` for an invertible linear map ``T``."""

    def __init__(self, base: ConvexFunction, T):
        T = np.atleast_2d(np.asarray(T, dtype=float))
        n = base.dim
        if T.shape != (n, n):
            raise DomainError(f"T must be {n}x{n}")
        sv = np.linalg.svd(T, compute_uv=False)
        if sv[-1] <= 1e-14 * max(sv[0], 1e-300):
            raise DomainError("T must be invertible")
        self.base, self.T = base, T
        self._T_inv = np.linalg.inv(T)
        self.has_gradient = base.has_gradient
        self.has_hessian = base.has_hessian
        a, b = base.coercivity
        super().__init__(n, (a * float(sv[-1]), b), base.supercoercive, self._T_inv @ base.minimizer_hint)

    def _value(self, pts):
        return self.base._value(pts @ self.T.T)

    def _gradient(self, pts):
        return self.base._gradient(pts @ self.T.T) @ self.T

    def _hessian(self, pts):
        h = self.base._hessian(pts @ self.T.T)
        return np.einsum("ki,pkl,lj->pij", self.T, h, self.T)

    def gradient(self, x):
        pts, shape = self._points(x)
        g = self.base.gradient(pts @ self.T.T) @ self.T
        return g.reshape(shape + (self.dim,))

    def hessian(self, x):
        pts, shape = self._points(x)
        h = self.base.hessian(pts @ self.T.T)
        h = np.einsum("ki,pkl,lj->pij", self.T, h, self.T)
        return h.reshape(shape + (self.dim, self.dim))

    def argmin(self):
        if self._argmin is None:
            x, v = self.base.argmin()
            self._argmin = (self._T_inv @ x, v)
        return self._argmin

    def conjugate_argmin(self, slopes, x0=None, **kwargs):
        ys = np.atleast_2d(np.asarray(slopes, dtype=float))
        base_x0 = None if x0 is None else np.asarray(x0, dtype=float) @ self.T.T
        z = self.base.conjugate_argmin(ys @ self._T_inv, x0=base_x0, **kwargs)
        return z @ self._T_inv.T

    @property
    def bregman_exact(self):
        return self.base.bregman_exact

    def bregman_offset(self, centers, offsets, slopes):
        c = np.asarray(centers, dtype=float) @ self.T.T
        d = np.asarray(offsets, dtype=float) @ self.T.T
        y = np.asarray(slopes, dtype=float) @ self._T_inv
        return self.base.bregman_offset(c, d, y)

    def key(self):
        return f"composed(base={self.base.key()};T={_fmt(self.T)})"


class TiltedFn(ConvexFunction):
    """``x -> psi(x) - <x, y>`` for a fixed slope ``y``."""

    def __init__(self, base: ConvexFunction, slope):
        y = np.asarray(slope, dtype=float).reshape(base.dim)
        if not base.supercoercive:
            raise DomainError("tilting keeps coercivity only for supercoercive functions")
        self.base, self.slope = base, y
        self.has_gradient = base.has_gradient
        self.has_hessian = base.has_hessian
        a, b = base.coercivity
        # psi(x) - <x,y> >= (a - |y|)|x| + b is useless for |y| >= a, so the
        # pair is recomputed from the tilted minimum on a unit sphere shell
        super().__init__(base.dim, (1.0, b), True, base.minimizer_hint)
        x_min, v_min = self.argmin()
        self.coercivity = self._coercivity_from_min(x_min, v_min)

    def _coercivity_from_min(self, x_min, v_min):
        # convexity: psi_y(x) >= v_min + growth*(|x - x_min| - 1) where growth
        # is the least rise on the unit sphere around x_min
        n = self.dim
        dirs = np.eye(n)
        dirs = np.concatenate([dirs, -dirs])
        if n > 1:
            rng = np.random.default_rng(0)
            extra = rng.normal(size=(64, n))
            dirs = np.concatenate([dirs, extra / np.linalg.norm(extra, axis=1, keepdims=True)])
        rise = float(np.min(self.value(x_min + dirs)) - v_min)
        growth = max(0.5 * rise, 1e-12)
        return growth, v_min - growth * (1.0 + float(np.linalg.norm(x_min)))

    def _value(self, pts):
        return self.base._value(pts) - pts @ self.slope

    def _gradient(self, pts):
        return self.base._gradient(pts) - self.slope

    def _hessian(self, pts):
        return self.base._hessian(pts)

    def hessian(self, x):
        return self.base.hessian(x)

    def key(self):
        return f"tilted(base={self.base.key()};y={_fmt(self.slope)})"


class CallableFn(ConvexFunction):
    """A value-only convex function; all derivatives come from finite differences."""

    def __init__(self, fn: Callable, dim: int, coercivity, supercoercive: bool, name: str, minimizer_hint=None):
        self.fn, self.name = fn, name
        super().__init__(dim, coercivity, supercoercive, minimizer_hint)

    def _value(self, pts):
        return np.asarray(self.fn(pts), dtype=float).reshape(pts.shape[0])

    def key(self):
        return f"callable(name={self.name};n={self.dim})"


class _PointwiseFn(ConvexFunction):
    has_gradient = True
    has_hessian = True
    _reduce = None

    def __init__(self, parts: Sequence[ConvexFunction]):
        parts = list(parts)
        if len(parts) < 2 or len({p.dim for p in parts}) != 1:
            raise DomainError("need at least two functions of equal dimension")
        self.parts = parts
        super().__init__(parts[0].dim, self._pair(parts), self._super(parts), parts[0].minimizer_hint)

    def _stack(self, pts):
        return np.stack([p._value(pts) for p in self.parts], axis=1)

    def _active(self, pts):
        v = self._stack(pts)
        idx = self._pick(v)
        top = v[np.arange(len(idx)), idx]
        ties = (np.abs(v - top[:, None]) <= KINK_TOL * np.maximum(1.0, np.abs(top))[:, None]).sum(axis=1)
        if np.any(ties > 1):
            raise NonsmoothPointError("pieces tie at the requested point")
        return idx

    def _value(self, pts):
        return self._reduce(self._stack(pts), axis=1)

    def _by_piece(self, pts, method):
        idx = self._active(pts)
        out = None
        for k, part in enumerate(self.parts):
            sel = idx == k
            if not np.any(sel):
                continue
            vals = getattr(part, method)(pts[sel])
            if out is None:
                out = np.empty((pts.shape[0],) + vals.shape[1:])
            out[sel] = vals
        return out

    def _gradient(self, pts):
        return self._by_piece(pts, "gradient")

    def _hessian(self, pts):
        return self._by_piece(pts, "hessian")

    def key(self):
        inner = ";".join(p.key() for p in self.parts)
        return f"{type(self).__name__.lower()}({inner})"


class PointwiseMinFn(_PointwiseFn):
    """Pointwise minimum; convex only for nested inputs, which the caller ensures."""

    _reduce = staticmethod(np.min)

    @staticmethod
    def _pick(v):
        return v.argmin(axis=1)

    @staticmethod
    def _pair(parts):
        return min(p.coercivity[0] for p in parts), min(p.coercivity[1] for p in parts)

    @staticmethod
    def _super(parts):
        return all(p.supercoercive for p in parts)


class PointwiseMaxFn(_PointwiseFn):
    """Pointwise maximum of convex functions."""

    _reduce = staticmethod(np.max)

    @staticmethod
    def _pick(v):
        return v.argmax(axis=1)

    @staticmethod
    def _pair(parts):
        return max((p.coercivity for p in parts), key=lambda ab: ab[0])

    @staticmethod
    def _super(parts):
        return any(p.supercoercive for p in parts)


# -- epigraph geometry ------------------------------------------------------------


def derivatives(psi: ConvexFunction, x):
    """Gradient and symmetrized Hessian of ``psi`` at a single point ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return psi.gradient(x), psi.hessian(x)


def epigraph_curvature(psi: ConvexFunction, x) -> float:
    """Gauss curvature of the graph at ``(x, psi(x))``.

    ``det(hess) / (1 + |grad|^2)^((n + 2) / 2)``.
    """
    g, h = derivatives(psi, x)
    det = max(float(np.linalg.det(np.atleast_2d(h))), 0.0)
    return det / (1.0 + float(g @ g)) ** ((psi.dim + 2) / 2)


def epigraph_normal(psi: ConvexFunction, x) -> np.ndarray:
    """Outer unit normal ``(grad, -1) / sqrt(1 + |grad|^2)`` of the epigraph."""
    g, _ = derivatives(psi, x)
    v = np.append(g, -1.0)
    return v / np.linalg.norm(v)


def rolling_bound(psi: ConvexFunction, x) -> float:
    """Upper bound ``curvature^(-1/n)`` on the rolling radius; ``inf`` when flat."""
    kappa = epigraph_curvature(psi, x)
    if kappa <= 0:
        return math.inf
    return kappa ** (-1.0 / psi.dim)


def _tail_mass(n: int, a: float, b: float, R: float) -> float:
    """Integral of ``exp(-a|x| - b)`` over ``|x| > R`` in ``R^n``."""
    e = math.exp(-b - a * R)
    if n == 1:
        return 2 * e / a
    if n == 2:
        return 2 * math.pi * e * (R / a + 1 / a**2)
    if n == 3:
        return 4 * math.pi * e * (R**2 / a + 2 * R / a**2 + 2 / a**3)
    raise DomainError("coercivity_box supports n in {1, 2, 3}")


def coercivity_box(psi: ConvexFunction, eps: float) -> float:
    """Radius ``R`` with ``int_{|x| > R} exp(-a|x| - b) dx <= eps``."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    a, b = psi.coercivity
    n = psi.dim
    full = _tail_mass(n, a, b, 0.0)
    if eps >= full:
        return 0.0
    # log of the tail is concave-decreasing in R; solve on its negative
    log_full = math.log(full)
    return find_monotone_root(
        lambda R: log_full - math.log(_tail_mass(n, a, b, R)), log_full - math.log(eps), 0.0, tol=1e-13
    )


# -- slope grids and discrete conjugates --------------------------------------------


@dataclass(frozen=True)
class SlopeGrid:
    """Rectangular lattice of slopes ``y``; the ``axes`` are strictly increasing."""

    axes: tuple

    def __post_init__(self):
        for ax in self.axes:
            ax = np.asarray(ax)
            if ax.ndim != 1 or ax.size == 0 or np.any(np.diff(ax) <= 0):
                raise DomainError("slope grid axes must be nonempty and strictly increasing")

    @classmethod
    def uniform(cls, extent: float, step: float, dim: int) -> "SlopeGrid":
        """Symmetric grid ``step * k`` for ``|step * k| <= extent`` (rounded up), containing 0."""
        if not (extent >= 0 and step > 0):
            raise DomainError("extent must be >= 0 and step > 0")
        k = int(math.ceil(extent / step - 1e-9))
        ax = step * np.arange(-k, k + 1, dtype=float)
        return cls(tuple(ax for _ in range(dim)))

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def coarsened(self) -> "SlopeGrid":
        """Every other slope along each axis, keeping the slope closest to 0."""
        axes = []
        for ax in self.axes:
            ax = np.asarray(ax)
            mid = int(np.argmin(np.abs(ax)))
            axes.append(ax[mid % 2 :: 2])
        return SlopeGrid(tuple(axes))

    def coarse_mask(self) -> np.ndarray:
        """Boolean mask over :attr:`points` selecting :meth:`coarsened`."""
        masks = []
        for ax in self.axes:
            ax = np.asarray(ax)
            mid = int(np.argmin(np.abs(ax)))
            masks.append((np.arange(ax.size) - mid) % 2 == 0)
        mesh = np.meshgrid(*masks, indexing="ij")
        return np.logical_and.reduce([m.ravel() for m in mesh])

    def spacing(self) -> float:
        return float(max(np.max(np.diff(ax)) if len(ax) > 1 else 0.0 for ax in self.axes))


def conjugate_on_grid(slope_points, conj_values, chunk: int = 2_000_000):
    """Evaluator ``x -> max_j (<x, y_j> - v_j)`` over a finite set of slopes.

    The result is convex and, when ``v_j`` are exact conjugate values, a
    lower bound of the biconjugate.
    """
    ys = np.asarray(slope_points, dtype=float)
    if ys.ndim == 1:
        ys = ys[:, None]
    vals = np.asarray(conj_values, dtype=float).reshape(-1)
    if ys.shape[0] == 0 or ys.shape[0] != vals.size:
        raise DomainError("slope grid and values must be nonempty and of equal length")
    if not np.all(np.isfinite(vals)):
        raise DomainError("conjugate values must be finite")
    n = ys.shape[1]

    def evaluate(x):
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        shape = arr.shape[:-1]
        pts = arr.reshape(-1, n)
        out = np.empty(pts.shape[0])
        rows = max(1, chunk // ys.shape[0])
        for s in range(0, pts.shape[0], rows):
            block = pts[s : s + rows]
            out[s : s + rows] = (block @ ys.T - vals).max(axis=1)
        return out.reshape(shape)

    evaluate.slopes = ys
    evaluate.values = vals
    return evaluate


class GridFunction:
    """Values on a rectangular lattice with multilinear interpolation."""

    def __init__(self, axes: Sequence, values):
        self.axes = tuple(np.asarray(a, dtype=float) for a in axes)
        for ax in self.axes:
            if ax.ndim != 1 or np.any(np.diff(ax) <= 0):
                raise DomainError("grid axes must be strictly increasing")
        self.values = np.asarray(values, dtype=float).reshape(tuple(a.size for a in self.axes))
        if not np.all(np.isfinite(self.values)):
            raise DomainError("grid values must be finite")
        from scipy.interpolate import RegularGridInterpolator

        self._interp = RegularGridInterpolator(self.axes, self.values, bounds_error=True)

    @classmethod
    def sample(cls, fn, axes: Sequence) -> "GridFunction":
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        return cls(axes, np.asarray(fn(pts)))

    @property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        shape = arr.shape[:-1]
        return self._interp(arr.reshape(-1, len(self.axes))).reshape(shape)
