"""Convergence experiments for the deficit integrals.

For a sweep of cap volumes ``delta`` the integrals

* ``I = int (exp(-psi) - exp(-M psi))`` and ``J = int (M psi - psi) exp(-psi)``
  for the Ulam floating function ``M psi``,
* ``F = int (exp(-psi) - exp(-psi_delta))`` for the floating function,

are scaled by ``delta^(-2/(n+2))`` and extrapolated with a power-law fit.
The limits are compared with ``c_{n+1} as(f)`` and ``d_{n+1} as(f)``.

The outer integrals run over the sublevel set ``{psi <= min psi + L}``
along rays from the minimizer. By default the integrands use anchored
evaluation (see :mod:`ulamfloat.floating`); passing a slope grid switches
to the lattice envelopes.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .asa import asa_density
from .caps import CapOptions
from .core import PowerLawFit, constant_c, constant_d, fit_power_law
from .errors import DomainError, SingularFitError, ToleranceNotMet
from .floating import build_floating_function, build_ulam_function, floating_excess, ulam_excess
from .functions import ConvexFunction, SlopeGrid, SmoothMaxAffineFn
from .quadrature import local_frame, star_integrate

__all__ = [
    "SLIVER_OPTIONS",
    "ConvergenceReport",
    "DeficitIntegrals",
    "deficit_integrals",
    "degenerate_surrogate",
    "degenerate_sweep",
    "floating_sweep",
    "stability_gate",
    "ulam_deficit_sweep",
]

SUBLEVEL_DEPTH = 40.0


@dataclass
class DeficitIntegrals:
    """Deficit integrals at one ``delta``.

    ``clamp_mass`` is the integral of the negative part of the excess that
    was clamped to zero (lattice artifacts only).
    """

    delta: float
    I: float
    J: float
    floating: float
    err: float
    clamp_mass: float


def _outer_integral(psi: ConvexFunction, columns, depth: float, rel_tol: float):
    """Integrate ``columns(x)`` over ``{psi <= min psi + depth}``."""
    center, vmin = psi.argmin()
    frame = local_frame(psi.hessian(center[None, :]))

    def boundary(owner, x):
        return psi.value(x)

    res = star_integrate(
        boundary,
        lambda owner, x: columns(x),
        center[None, :],
        [vmin + depth],
        frames=frame,
        radius_guess=[math.sqrt(2 * depth)],
        rel_tol=rel_tol,
        abs_tol=1e-300,
    )
    if not res.converged[0]:
        raise ToleranceNotMet("outer deficit integral did not converge", best=res.values[0])
    return res.values[0], res.errors[0]


def _excess_fn(psi, delta, kind, slope_grid, cap_kwargs):
    if slope_grid is None:
        fn = ulam_excess if kind == "ulam" else floating_excess

        def excess(x):
            return fn(psi, x, delta, **cap_kwargs)

        return excess
    builder = build_ulam_function if kind == "ulam" else build_floating_function
    approx = builder(psi, delta, slope_grid, probes=psi.argmin()[0][None, :], **cap_kwargs)

    def excess(x):
        return approx(x) - psi.value(x)

    return excess


def deficit_integrals(
    psi: ConvexFunction,
    delta: float,
    slope_grid: SlopeGrid | None = None,
    *,
    floating: bool = False,
    depth: float = SUBLEVEL_DEPTH,
    rel_tol: float = 1e-8,
    options: CapOptions | None = None,
    cache=None,
    threads: int = 1,
) -> DeficitIntegrals:
    """``I`` and ``J`` (and, with ``floating=True``, ``F``) at one ``delta``.

    Negative excess values can only come from lattice error; they are
    clamped to zero and their mass is reported.
    """
    if not psi.supercoercive:
        raise DomainError("deficit integrals need a supercoercive function")
    if psi.dim not in (1, 2):
        raise DomainError("deficit integrals are computed for n in {1, 2}")
    kw = dict(options=options, cache=cache, threads=threads)
    ulam = _excess_fn(psi, delta, "ulam", slope_grid, kw)
    flo = _excess_fn(psi, delta, "floating", slope_grid, kw) if floating else None

    def columns(x):
        weight = np.exp(-psi.value(x))
        d = ulam(x)
        cols = [-weight * np.expm1(-np.maximum(d, 0.0)), np.maximum(d, 0.0) * weight, np.maximum(-d, 0.0) * weight]
        if flo is not None:
            e = flo(x)
            cols += [-weight * np.expm1(-np.maximum(e, 0.0)), np.maximum(-e, 0.0) * weight]
        return np.column_stack(cols)

    vals, errs = _outer_integral(psi, columns, depth, rel_tol)
    clamp = float(vals[2] + (vals[4] if floating else 0.0))
    return DeficitIntegrals(
        float(delta),
        float(vals[0]),
        float(vals[1]),
        float(vals[3]) if floating else math.nan,
        float(np.max(errs)),
        clamp,
    )


@dataclass
class ConvergenceReport:
    """Scaled deficit sequence, its extrapolation and the reference limit."""

    psi_key: str
    quantity: str
    rows: list
    fit: PowerLawFit
    reference: float
    free_fit: PowerLawFit | None = None
    extra: dict = field(default_factory=dict)

    @property
    def limit(self) -> float:
        return self.fit.limit

    @property
    def rel_gap(self) -> float:
        if self.reference == 0:
            return abs(self.limit)
        return abs(self.limit - self.reference) / abs(self.reference)

    def summary(self) -> dict:
        return {
            "quantity": self.quantity,
            "reference": self.reference,
            "limit": self.limit,
            "rel_gap": self.rel_gap,
            "fit": self.fit.as_dict(),
        }


def _check_deltas(deltas, minimum: int = 4):
    deltas = [float(d) for d in deltas]
    if len(deltas) < minimum:
        raise DomainError(f"need at least {minimum} deltas")
    if any(d <= 0 for d in deltas) or any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise DomainError("deltas must be positive and strictly decreasing")
    return deltas


def _report(psi, quantity, deltas, raws, exponent, reference, extra=None):
    rows = [(d, r, r / d**exponent) for d, r in zip(deltas, raws)]
    samples = [(d, s) for d, _, s in rows]
    fit = fit_power_law(samples, fixed_exponent=exponent)
    try:
        free = fit_power_law(samples)
    except (SingularFitError, DomainError, ValueError):
        free = None
    return ConvergenceReport(psi.key(), quantity, rows, fit, reference, free, extra or {})


def _run(psi, deltas, slope_grid, floating, threads, cache, options, rel_tol):
    def one(d):
        return deficit_integrals(
            psi, d, slope_grid, floating=floating, options=options, cache=cache, threads=1, rel_tol=rel_tol
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, deltas))
    return [one(d) for d in deltas]


def ulam_deficit_sweep(
    psi: ConvexFunction,
    deltas,
    slope_grid: SlopeGrid | None = None,
    *,
    threads: int = 1,
    cache=None,
    options: CapOptions | None = None,
    rel_tol: float = 1e-8,
    asa: float | None = None,
) -> tuple[ConvergenceReport, ConvergenceReport]:
    """Extrapolated limits of ``delta^(-2/(n+2)) I`` and ``delta^(-2/(n+2)) J``.

    Both are compared with ``c_{n+1} as(f)``.
    """
    deltas = _check_deltas(deltas)
    n = psi.dim
    expo = 2.0 / (n + 2)
    asa_value = asa if asa is not None else asa_density(psi).value
    ref = constant_c(n + 1) * asa_value
    results = _run(psi, deltas, slope_grid, False, threads, cache, options, rel_tol)
    extra = {"clamp_mass": [r.clamp_mass for r in results], "asa": asa_value}
    rep_i = _report(psi, "I_scaled", deltas, [r.I for r in results], expo, ref, extra)
    rep_j = _report(psi, "J_scaled", deltas, [r.J for r in results], expo, ref, extra)
    return rep_i, rep_j


def floating_sweep(
    psi: ConvexFunction,
    deltas,
    slope_grid: SlopeGrid | None = None,
    *,
    threads: int = 1,
    cache=None,
    options: CapOptions | None = None,
    rel_tol: float = 1e-8,
    asa: float | None = None,
) -> ConvergenceReport:
    """Extrapolated limit of ``delta^(-2/(n+2)) int (exp(-psi) - exp(-psi_delta))``, against ``d_{n+1} as(f)``."""
    deltas = _check_deltas(deltas)
    n = psi.dim
    expo = 2.0 / (n + 2)
    asa_value = asa if asa is not None else asa_density(psi).value
    ref = constant_d(n + 1) * asa_value
    results = _run(psi, deltas, slope_grid, True, threads, cache, options, rel_tol)
    extra = {"clamp_mass": [r.clamp_mass for r in results], "asa": asa_value}
    return _report(psi, "float_scaled", deltas, [r.floating for r in results], expo, ref, extra)


def degenerate_surrogate(beta: float = 100.0, mu: float = 1e-6) -> SmoothMaxAffineFn:
    """Smoothed ``|x|`` in one dimension: ``log(2 cosh(beta x)) / beta + mu x^2 / 2``."""
    return SmoothMaxAffineFn([[-1.0], [1.0]], [0.0, 0.0], beta=beta, mu=mu)


SLIVER_OPTIONS = CapOptions(volume_rel_tol=1e-10, quad_rel_tol=1e-10)


def degenerate_sweep(
    psi: ConvexFunction,
    deltas,
    *,
    threads: int = 1,
    cache=None,
    rel_tol: float = 1e-6,
    options: CapOptions | None = SLIVER_OPTIONS,
) -> ConvergenceReport:
    """Scaled ``J`` sequence for a nearly piecewise-affine surrogate.

    The reference is ``c_{n+1}`` times the surrogate's own affine surface
    area, which shrinks with the smoothing and the quadratic floor.
    Caps over the nearly flat pieces are long slivers whose quadrature
    stalls short of the default tolerance, hence the looser ``options``
    and outer ``rel_tol``.
    """
    deltas = _check_deltas(deltas, minimum=3)
    n = psi.dim
    expo = 2.0 / (n + 2)
    ref = constant_c(n + 1) * asa_density(psi).value
    results = _run(psi, deltas, None, False, threads, cache, options, rel_tol)
    return _report(psi, "J_scaled", deltas, [r.J for r in results], expo, ref)


def stability_gate(psi: ConvexFunction, deltas, tolerance: float, *, floating: bool = False) -> dict:
    """Rerun a sweep with tighter cap and outer tolerances and compare limits.

    The base run uses the default cap options and an outer tolerance of
    ``1e-7``; the tight run divides the cap tolerances by ten and uses
    ``1e-8``. Returns a dict with the two limits, their relative change and
    whether the change stays below ``tolerance``.
    """
    loose = CapOptions()
    tight = CapOptions(volume_rel_tol=loose.volume_rel_tol / 10, quad_rel_tol=loose.quad_rel_tol / 10)
    out = {}
    for name, opts, tol in (("base", loose, 1e-7), ("tight", tight, 1e-8)):
        if floating:
            out[name] = floating_sweep(psi, deltas, options=opts, rel_tol=tol).limit
        else:
            out[name] = ulam_deficit_sweep(psi, deltas, options=opts, rel_tol=tol)[1].limit
    change = abs(out["tight"] - out["base"]) / max(abs(out["base"]), 1e-300)
    out.update(change=change, holds=change < tolerance)
    return out
