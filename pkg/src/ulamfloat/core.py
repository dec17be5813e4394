"""Dimension-generic numeric primitives.

Unit-ball volumes, the two variational constants, monotone root finding,
a small convex minimizer and the power-law extrapolation used to estimate
limits as the cap volume goes to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import least_squares

from .errors import DomainError, SingularFitError, ToleranceNotMet, UnboundedError

__all__ = [
    "PowerLawFit",
    "constant_c",
    "constant_d",
    "find_monotone_root",
    "fit_power_law",
    "minimize_convex",
    "unit_ball_volume",
]


def unit_ball_volume(m: int) -> float:
    """Volume of the Euclidean unit ball in ``R^m``."""
    if int(m) != m or m < 1:
        raise DomainError(f"unit_ball_volume needs an integer m >= 1, got {m!r}")
    return math.pi ** (m / 2) / math.gamma(m / 2 + 1)


def constant_d(m: int) -> float:
    """Floating-body constant for convex sets of ambient dimension ``m``.

    ``d(m) = 1/2 * ((m + 1) / vol_{m-1}(B))^(2/(m+1))``.
    """
    if int(m) != m or m < 2:
        raise DomainError(f"constant_d needs an integer m >= 2, got {m!r}")
    return 0.5 * ((m + 1) / unit_ball_volume(m - 1)) ** (2.0 / (m + 1))


def constant_c(m: int) -> float:
    """Ulam floating-body (metronoid) constant for ambient dimension ``m``.

    Equal to ``constant_d(m) * (m + 1) / (m + 3)``.
    """
    if int(m) != m or m < 2:
        raise DomainError(f"constant_c needs an integer m >= 2, got {m!r}")
    return (m + 1) / (2.0 * (m + 3)) * ((m + 1) / unit_ball_volume(m - 1)) ** (2.0 / (m + 1))


def find_monotone_root(
    g: Callable[[float], float],
    target: float,
    bracket_lo: float,
    tol: float = 1e-12,
    *,
    xtol: float = 0.0,
    step: float = 1.0,
    max_expansions: int = 200,
    max_iter: int = 300,
) -> float:
    """Solve ``g(a) = target`` for a continuous nondecreasing ``g``.

    The upper end of the bracket is found by doubling a step away from
    ``bracket_lo``; the bracket is then shrunk with the Illinois variant of
    regula falsi, falling back to bisection when it stalls.

    Args:
        g: Nondecreasing scalar map.
        target: Value to reach.
        bracket_lo: Point with ``g(bracket_lo) <= target``.
        tol: Residual tolerance, applied as ``tol * max(1, |target|)``.
        xtol: Optional bracket-width tolerance. Callers whose targets span
            many decades pass this so that tiny targets are resolved.
        step: First doubling step.

    Returns:
        ``a`` with ``|g(a) - target| <= tol * max(1, |target|)`` or a bracket
        narrower than ``xtol`` around it.

    Raises:
        DomainError: If ``g(bracket_lo)`` already exceeds the target.
        UnboundedError: If no upper bracket is found.
        ToleranceNotMet: If the iteration budget runs out.
    """
    ftol = tol * max(1.0, abs(target))
    lo = float(bracket_lo)
    f_lo = g(lo) - target
    if f_lo > ftol:
        raise DomainError(f"target {target!r} lies below g(bracket_lo) = {f_lo + target!r}")
    if abs(f_lo) <= ftol:
        return lo

    step = float(step)
    hi = lo + step
    f_hi = g(hi) - target
    expansions = 0
    while f_hi < 0.0:
        if abs(f_hi) <= ftol:
            return hi
        lo, f_lo = hi, f_hi
        step *= 2.0
        hi = lo + step
        f_hi = g(hi) - target
        expansions += 1
        if expansions > max_expansions:
            raise UnboundedError(f"no upper bracket for target {target!r} after {max_expansions} doublings")
    if abs(f_hi) <= ftol:
        return hi

    side = 0
    best, f_best = (lo, f_lo) if abs(f_lo) < abs(f_hi) else (hi, f_hi)
    for _ in range(max_iter):
        if hi - lo <= xtol:
            return best
        if f_hi != f_lo:
            x = hi - f_hi * (hi - lo) / (f_hi - f_lo)
        else:
            x = 0.5 * (lo + hi)
        if not lo < x < hi:
            x = 0.5 * (lo + hi)
        if x == lo or x == hi:
            return best
        fx = g(x) - target
        if abs(fx) < abs(f_best):
            best, f_best = x, fx
        if abs(fx) <= ftol:
            return x
        if fx < 0.0:
            lo, f_lo = x, fx
            if side == -1:
                f_hi *= 0.5
            side = -1
        else:
            hi, f_hi = x, fx
            if side == 1:
                f_lo *= 0.5
            side = 1
    raise ToleranceNotMet(f"root not resolved to {ftol:g} in {max_iter} iterations", best=best)


def _fd_gradient(f, x: np.ndarray) -> np.ndarray:
    h = np.finfo(float).eps ** (1 / 3) * max(1.0, float(np.linalg.norm(x)))
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        grad[i] = (f(x + e) - f(x - e)) / (2 * h)
    return grad


def minimize_convex(psi, x0, tol: float = 1e-12, max_iter: int = 20000):
    """Minimize a convex, supercoercive function by gradient descent.

    Steps use Barzilai-Borwein lengths safeguarded by Armijo backtracking.
    ``psi`` may be a :class:`~ulamfloat.functions.ConvexFunction` (its
    analytic gradient is used when attached) or a plain callable, in which
    case the gradient is taken by central differences.

    Returns:
        ``(argmin, min_value)``.

    Raises:
        ToleranceNotMet: With the best iterate, if ``max_iter`` is exceeded.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    if hasattr(psi, "value"):
        def f(z):
            return float(psi.value(z))

        if getattr(psi, "has_gradient", False):
            def grad(z):
                return np.asarray(psi.gradient(z), dtype=float).reshape(z.shape)
        else:
            def grad(z):
                return _fd_gradient(f, z)
    else:
        def f(z):
            return float(psi(z))

        def grad(z):
            return _fd_gradient(f, z)

    fx = f(x)
    gx = grad(x)
    alpha = 1.0 / max(1.0, float(np.linalg.norm(gx)))
    curvature = 1.0
    for _ in range(max_iter):
        gnorm2 = float(gx @ gx)
        if gnorm2 == 0.0 or gnorm2 / (2.0 * curvature) <= tol:
            return x, fx
        t = alpha
        while True:
            x_new = x - t * gx
            f_new = f(x_new)
            if f_new <= fx - 1e-4 * t * gnorm2 or t < 1e-300:
                break
            t *= 0.5
        g_new = grad(x_new)
        s = x_new - x
        yv = g_new - gx
        sy = float(s @ yv)
        ss = float(s @ s)
        if sy > 0 and ss > 0:
            curvature = sy / ss
            alpha = ss / sy
        else:
            alpha = 2.0 * t
        if f_new >= fx and ss <= (np.finfo(float).eps * max(1.0, float(np.linalg.norm(x)))) ** 2:
            return x, fx
        x, fx, gx = x_new, f_new, g_new
    raise ToleranceNotMet("minimize_convex hit its iteration cap", best=(x, fx))


@dataclass(frozen=True)
class PowerLawFit:
    """Least-squares model ``v(delta) = limit + amplitude * delta**rate_exponent``."""

    limit: float
    rate_exponent: float
    amplitude: float
    residual: float

    def predict(self, delta):
        return self.limit + self.amplitude * np.asarray(delta, dtype=float) ** self.rate_exponent

    def as_dict(self) -> dict:
        return {
            "exponent": self.rate_exponent,
            "amplitude": self.amplitude,
            "residual": self.residual,
        }


def _linear_fit(delta: np.ndarray, values: np.ndarray, beta: float):
    design = np.column_stack([np.ones_like(delta), delta**beta])
    coef, _, rank, _ = np.linalg.lstsq(design, values, rcond=None)
    if rank < 2:
        raise SingularFitError(f"power-law design matrix is rank deficient for exponent {beta!r}")
    resid = design @ coef - values
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid**2)))


def fit_power_law(samples: Sequence[tuple[float, float]], fixed_exponent: float | None = None) -> PowerLawFit:
    """Fit ``v = L + C * delta**beta`` to ``(delta, v)`` samples.

    With ``fixed_exponent`` the fit is linear in ``(L, C)``. Otherwise the
    exponent is seeded from a regression of log successive differences on
    log delta and polished by nonlinear least squares on all three
    parameters, which recovers noise-free models to rounding level.
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[0] < 3 or data.shape[1] != 2:
        raise DomainError("fit_power_law needs at least three (delta, value) samples")
    delta, values = data[:, 0], data[:, 1]
    if np.any(delta <= 0) or np.any(np.diff(delta) >= 0):
        raise DomainError("deltas must be positive and strictly decreasing")

    if fixed_exponent is not None:
        limit, amp, res = _linear_fit(delta, values, float(fixed_exponent))
        return PowerLawFit(limit, float(fixed_exponent), amp, res)

    diffs = values[:-1] - values[1:]
    scale = max(float(np.max(np.abs(values))), 1e-300)
    if np.all(np.abs(diffs) <= 1e-14 * scale):
        mean = float(np.mean(values))
        return PowerLawFit(mean, math.nan, 0.0, float(np.sqrt(np.mean((values - mean) ** 2))))

    usable = np.abs(diffs) > 1e-14 * scale
    if usable.sum() >= 2:
        slope = np.polyfit(np.log(delta[:-1][usable]), np.log(np.abs(diffs[usable])), 1)[0]
        beta0 = float(np.clip(slope, 1e-3, 10.0))
    else:
        beta0 = 1.0
    limit0, amp0, _ = _linear_fit(delta, values, beta0)

    # rescale delta so the exponent Jacobian stays well conditioned
    d0 = float(delta[0])
    u = delta / d0

    def resid(p):
        return p[0] + p[1] * u ** p[2] - values

    def jac(p):
        up = u ** p[2]
        return np.column_stack([np.ones_like(u), up, p[1] * up * np.log(u)])

    sol = least_squares(
        resid, [limit0, amp0 * d0**beta0, beta0], jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15
    )
    limit, amp_u, beta = (float(v) for v in sol.x)
    if not np.all(np.isfinite(sol.x)):
        raise SingularFitError("nonlinear power-law fit diverged")
    amp = amp_u / d0**beta
    res = float(np.sqrt(np.mean(resid(sol.x) ** 2)))
    return PowerLawFit(limit, beta, amp, res)
