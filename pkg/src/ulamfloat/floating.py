"""Ulam floating functions and floating functions.

Two representations are provided.

Lattice envelopes (:func:`build_ulam_function`, :func:`build_floating_function`)
sample the conjugate on a slope lattice and take the maximum of the
supporting affine functions. They under-approximate and carry a measured
grid slack.

Anchored evaluation (:func:`ulam_excess`, :func:`floating_excess`) picks, for
each evaluation point ``x``, the slope whose supporting plane touches the
graph over ``x``. The returned differences to ``psi`` then carry no lattice
error; this is what the convergence sweeps integrate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .caps import CapBatch, CapOptions, match_slopes, solve_caps
from .errors import DomainError
from .functions import ComposedFn, ConvexFunction, SlopeGrid, conjugate_on_grid

__all__ = [
    "FloatingFunctionApprox",
    "SandwichReport",
    "UlamFunctionApprox",
    "affine_precompose",
    "build_floating_function",
    "build_ulam_function",
    "default_slope_grid",
    "floating_excess",
    "sandwich_report",
    "slope_range",
    "ulam_excess",
    "ulam_log_concave",
]


def slope_range(psi: ConvexFunction, probes) -> float:
    """Slope extent covering the supporting planes that bind on ``probes``."""
    g = psi.gradient(np.atleast_2d(np.asarray(probes, dtype=float)))
    return float(np.max(np.abs(g))) + 2.0


def default_slope_grid(psi: ConvexFunction, probes, step: float) -> SlopeGrid:
    return SlopeGrid.uniform(slope_range(psi, probes), step, psi.dim)


@dataclass
class _Envelope:
    psi: ConvexFunction
    delta: float
    slope_grid: SlopeGrid
    conj_values: np.ndarray
    caps: CapBatch
    evaluator: Callable
    grid_slack: float
    probes: np.ndarray

    def __call__(self, x):
        return self.evaluator(x)


class UlamFunctionApprox(_Envelope):
    """Lattice envelope of the Ulam floating function; an under-approximation."""


class FloatingFunctionApprox(_Envelope):
    """Lattice envelope of the floating function; an under-approximation."""

    @property
    def cut_levels(self) -> np.ndarray:
        """Cut levels ``a_j`` in theta units, one per slope."""
        return self.caps.level()


def _probes_for(psi, caps: CapBatch, grid: SlopeGrid, probes):
    if probes is not None:
        return np.atleast_2d(np.asarray(probes, dtype=float))
    extent = np.max(np.abs(grid.points))
    inner = np.all(np.abs(grid.points) <= extent - 2.0 + 1e-12, axis=1)
    if not np.any(inner):
        inner[:] = True
    return caps.center[inner]


def _slack(points, values, grid: SlopeGrid, probes) -> float:
    full = conjugate_on_grid(points, values)
    mask = grid.coarse_mask()
    coarse = conjugate_on_grid(points[mask], values[mask])
    return float(max(0.0, np.max(full(probes) - coarse(probes))))


def _build(cls, psi, delta, slope_grid, probes, step, conj_of, options, cache, threads):
    if not psi.supercoercive:
        raise DomainError("floating constructions need a supercoercive function")
    if not delta > 0:
        raise DomainError("delta must be positive")
    if slope_grid is None:
        if probes is None:
            raise DomainError("pass either a slope grid or probe points")
        slope_grid = default_slope_grid(psi, probes, step)
    pts = slope_grid.points
    caps = solve_caps(psi, pts, delta, options=options, cache=cache, threads=threads)
    conj = conj_of(caps)
    probes = _probes_for(psi, caps, slope_grid, probes)
    evaluator = conjugate_on_grid(pts, conj)
    return cls(psi, float(delta), slope_grid, conj, caps, evaluator, _slack(pts, conj, slope_grid, probes), probes)


def build_ulam_function(
    psi: ConvexFunction,
    delta: float,
    slope_grid: SlopeGrid | None = None,
    *,
    probes=None,
    step: float = 0.01,
    options: CapOptions | None = None,
    cache=None,
    threads: int = 1,
) -> UlamFunctionApprox:
    """Lattice envelope ``x -> max_j (<x, y_j> - conj_j)`` of the Ulam floating function.

    ``conj_j`` is the conjugate sample at slope ``y_j``. The grid slack is
    the largest gain at the probe points from the coarse lattice (every
    other slope) to the full lattice.
    """
    return _build(
        UlamFunctionApprox, psi, delta, slope_grid, probes, step, lambda c: c.ulam_conjugate, options, cache, threads
    )


def build_floating_function(
    psi: ConvexFunction,
    delta: float,
    slope_grid: SlopeGrid | None = None,
    *,
    probes=None,
    step: float = 0.01,
    options: CapOptions | None = None,
    cache=None,
    threads: int = 1,
) -> FloatingFunctionApprox:
    """Halfspace envelope ``x -> max_j (s_j + <x, y_j>)`` of the floating function."""
    return _build(
        FloatingFunctionApprox,
        psi,
        delta,
        slope_grid,
        probes,
        step,
        lambda c: c.floating_conjugate,
        options,
        cache,
        threads,
    )


def ulam_log_concave(psi: ConvexFunction, delta: float, slope_grid: SlopeGrid | None = None, **kwargs):
    """Evaluator of ``exp(-M psi)`` for the Ulam floating function ``M psi``."""
    approx = build_ulam_function(psi, delta, slope_grid, **kwargs)

    def evaluate(x):
        return np.exp(-approx(x))

    evaluate.approx = approx
    return evaluate


def affine_precompose(psi: ConvexFunction, T) -> ConvexFunction:
    """``x -> psi(T x)`` with derivatives and coercivity carried along."""
    return ComposedFn(psi, T)


# -- anchored evaluation --------------------------------------------------------------


def _excess(psi, points, delta, kind, **kwargs):
    x = np.atleast_2d(np.asarray(points, dtype=float))
    match = match_slopes(psi, x, delta, kind, **kwargs)
    caps = match.caps
    gap = psi.bregman_offset(caps.center, x - caps.center, caps.slopes)
    top = caps.beta if kind == "ulam" else caps.depth
    return top - gap, match


def ulam_excess(psi: ConvexFunction, points, delta: float, **kwargs) -> np.ndarray:
    """``M psi(x) - psi(x)`` at each point, from the supporting plane anchored over ``x``."""
    return _excess(psi, points, delta, "ulam", **kwargs)[0]


def floating_excess(psi: ConvexFunction, points, delta: float, **kwargs) -> np.ndarray:
    """``psi_delta(x) - psi(x)`` at each point, from the cut touching over ``x``."""
    return _excess(psi, points, delta, "floating", **kwargs)[0]


# -- ordering checks -------------------------------------------------------------------


@dataclass
class SandwichReport:
    """Largest violations of ``psi <= M psi <= psi_delta`` at the probe points.

    ``lower`` is ``max (psi - M psi)_+``, ``mid`` is ``max (M psi - psi_delta)_+``
    and ``upper`` is ``max (psi - psi_delta)_+``. ``slack`` is the larger of
    the two grid slacks.
    """

    lower: float
    mid: float
    upper: float
    slack: float
    probes: np.ndarray
    psi_values: np.ndarray
    ulam_values: np.ndarray
    floating_values: np.ndarray

    @property
    def holds(self) -> bool:
        tol = self.slack + 1e-12
        return self.lower <= tol and self.mid <= tol and self.upper <= tol

    def as_tuple(self):
        return self.lower, self.mid, self.upper


def sandwich_report(
    psi: ConvexFunction,
    delta: float,
    probes,
    slope_grid: SlopeGrid | None = None,
    *,
    step: float = 0.01,
    options: CapOptions | None = None,
    cache=None,
    threads: int = 1,
) -> SandwichReport:
    """Build both envelopes on one slope grid and measure ordering violations."""
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if slope_grid is None:
        slope_grid = default_slope_grid(psi, probes, step)
    pts = slope_grid.points
    caps = solve_caps(psi, pts, delta, options=options, cache=cache, threads=threads)
    ulam = conjugate_on_grid(pts, caps.ulam_conjugate)
    flo = conjugate_on_grid(pts, caps.floating_conjugate)
    slack = max(_slack(pts, caps.ulam_conjugate, slope_grid, probes), _slack(pts, caps.floating_conjugate, slope_grid, probes))
    pv, uv, fv = psi.value(probes), ulam(probes), flo(probes)
    return SandwichReport(
        lower=float(np.max(np.maximum(pv - uv, 0.0))),
        mid=float(np.max(np.maximum(uv - fv, 0.0))),
        upper=float(np.max(np.maximum(pv - fv, 0.0))),
        slack=slack,
        probes=probes,
        psi_values=pv,
        ulam_values=uv,
        floating_values=fv,
    )
