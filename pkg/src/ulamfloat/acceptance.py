"""Acceptance criteria as callable checks.

Each ``criterion_k`` returns a :class:`CriterionResult` with the measured
numbers. ``run_suite("quick")`` runs the fast closed-form checks and
``run_suite("full")`` runs all nine.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma

from .asa import asa_boundary, asa_density
from .bodies import Ball, Polygon, ball_cap_profile, body_cut_level, deficit_reference, deficit_sweep
from .bodies import ellipsoid_cap_sandwich_check, metronoid_support
from .caps import Direction, cap_barycenter, cap_volume, solve_caps
from .core import constant_c, constant_d, find_monotone_root, unit_ball_volume
from .floating import build_floating_function, build_ulam_function, floating_excess, sandwich_report, ulam_excess
from .functions import (
    ComposedFn,
    PNormFn,
    PointwiseMaxFn,
    PointwiseMinFn,
    QuadraticFn,
    SlopeGrid,
    TiltedFn,
)
from .harness import floating_sweep, ulam_deficit_sweep

__all__ = ["CriterionResult", "CRITERIA", "QUICK", "run_suite"]

GAUSS_1D_DELTAS = [2.0 / 3.0 * 4.0**-k for k in range(7)]
GAUSS_2D_DELTAS = [10.0**-k for k in range(1, 6)]


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number}: {status}  {self.title}  ({self.seconds:.1f}s)"


def _timed(number, title):
    def wrap(fn):
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            passed, details = fn(*args, **kwargs)
            return CriterionResult(number, title, bool(passed), details, time.perf_counter() - t0)

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return wrap


def _rel(a, b):
    return abs(a - b) / abs(b)


# -- 1 -------------------------------------------------------------------------------


def _direct_c(m: int) -> float:
    # closed form written out independently of ulamfloat.core
    n = m - 1
    omega = math.pi ** (n / 2) / gamma(n / 2 + 1)
    return (n + 2) / (2 * (n + 4)) * ((n + 2) / omega) ** (2 / (n + 2))


def _direct_d(m: int) -> float:
    n = m - 1
    omega = math.pi ** (n / 2) / gamma(n / 2 + 1)
    return 0.5 * ((n + 2) / omega) ** (2 / (n + 2))


@_timed(1, "constants c_2, c_3, d_2, d_3")
def criterion_1():
    expected = {"c2": 0.393111, "c3": 0.376126, "d2": 0.655185, "d3": 0.564190}
    got = {"c2": constant_c(2), "c3": constant_c(3), "d2": constant_d(2), "d3": constant_d(3)}
    direct = {"c2": _direct_c(2), "c3": _direct_c(3), "d2": _direct_d(2), "d3": _direct_d(3)}
    ok = all(abs(got[k] - direct[k]) <= 1e-9 and abs(got[k] - expected[k]) <= 5e-7 for k in got)
    return ok, {"values": got, "direct": direct}


# -- 2 -------------------------------------------------------------------------------


@_timed(2, "parabola identities at x = 0")
def criterion_2():
    psi = QuadraticFn([[1.0]])
    grid = SlopeGrid.uniform(2.0, 0.01, 1)
    rows = []
    ok = True
    for delta in (2.0 / 3.0, 6.7e-4, 6.7e-7):
        ulam_ref = constant_c(2) * delta ** (2 / 3)
        float_ref = constant_d(2) * delta ** (2 / 3)
        origin = np.zeros((1, 1))
        lattice_ulam = float(build_ulam_function(psi, delta, grid, probes=origin)(origin)[0])
        lattice_float = float(build_floating_function(psi, delta, grid, probes=origin)(origin)[0])
        anchored_ulam = float(ulam_excess(psi, origin, delta)[0])
        anchored_float = float(floating_excess(psi, origin, delta)[0])
        errs = [
            _rel(lattice_ulam, ulam_ref),
            _rel(anchored_ulam, ulam_ref),
            _rel(lattice_float, float_ref),
            _rel(anchored_float, float_ref),
        ]
        ok &= max(errs) <= 1e-3
        rows.append({"delta": delta, "rel_errors": errs})
    return ok, {"rows": rows}


# -- 3, 4, 5 -------------------------------------------------------------------------


@_timed(3, "n=1 Gaussian: I and J limits")
def criterion_3():
    rep_i, rep_j = ulam_deficit_sweep(QuadraticFn([[1.0]]), GAUSS_1D_DELTAS)
    literal = 0.98539
    gaps = [rep_i.rel_gap, rep_j.rel_gap, _rel(rep_i.limit, literal), _rel(rep_j.limit, literal)]
    mutual = abs(rep_i.limit - rep_j.limit) / rep_j.reference
    ok = max(gaps) <= 0.03 and mutual <= 0.03
    return ok, {"I": rep_i.summary(), "J": rep_j.summary(), "mutual_gap": mutual}


@_timed(4, "n=2 Gaussian: I and J limits")
def criterion_4():
    rep_i, rep_j = ulam_deficit_sweep(QuadraticFn(np.eye(2)), GAUSS_2D_DELTAS)
    literal = 2.36328
    gaps = [rep_i.rel_gap, rep_j.rel_gap, _rel(rep_i.limit, literal), _rel(rep_j.limit, literal)]
    return max(gaps) <= 0.05, {"I": rep_i.summary(), "J": rep_j.summary()}


@_timed(5, "n=1 Gaussian: floating limit and ratio")
def criterion_5():
    psi = QuadraticFn([[1.0]])
    rep_f = floating_sweep(psi, GAUSS_1D_DELTAS)
    _, rep_j = ulam_deficit_sweep(psi, GAUSS_1D_DELTAS)
    ratio = rep_f.limit / rep_j.limit
    ok = rep_f.rel_gap <= 0.03 and _rel(rep_f.limit, 1.64232) <= 0.03 and _rel(ratio, 5 / 3) <= 0.05
    return ok, {"floating": rep_f.summary(), "ratio": ratio}


# -- 6, 7 ----------------------------------------------------------------------------


@_timed(6, "ball cap profile ratios")
def criterion_6():
    r2 = ball_cap_profile(1.0, 2, 1e-6)[2]
    r3 = ball_cap_profile(1.0, 3, 1e-8)[2]
    ok = abs(r2 - 5 / 3) <= 0.01 and abs(r3 - 1.5) <= 0.01
    return ok, {"m2": r2, "m3": r3}


@_timed(7, "disk deficit limits and square decay")
def criterion_7():
    disk = Ball(1.0, 2)
    deltas = [10.0**-k for k in range(2, 7)]
    out = {}
    ok = True
    for which, literal in (("metronoid", 2.47010), ("floating", 4.11665)):
        _, fit = deficit_sweep(disk, deltas, which)
        ref = deficit_reference(disk, which)
        gap = _rel(fit.limit, ref)
        ok &= gap <= 0.03 and _rel(fit.limit, literal) <= 0.03
        out[f"disk_{which}"] = {"limit": fit.limit, "reference": ref, "rel_gap": gap}
    square = Polygon.square()
    for which in ("metronoid", "floating"):
        rows, _ = deficit_sweep(square, [1e-2, 1e-4, 1e-6], which)
        ratio = rows[-1].scaled / rows[0].scaled
        ok &= ratio <= 0.25
        out[f"square_{which}"] = {"scaled": [r.scaled for r in rows], "ratio": ratio}
    return ok, out


# -- 8 -------------------------------------------------------------------------------


def random_quadratic(rng, n, lo=0.5, hi=2.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = rng.uniform(lo, hi, n)
    A = (q * eig) @ q.T
    return QuadraticFn(0.5 * (A + A.T), rng.uniform(-0.5, 0.5, n))


def random_sl(rng, n, max_cond=10.0):
    while True:
        T = rng.standard_normal((n, n))
        det = np.linalg.det(T)
        if abs(det) < 1e-3:
            continue
        if det < 0:
            T[0] *= -1
        T /= abs(np.linalg.det(T)) ** (1 / n)
        if np.linalg.cond(T) <= max_cond:
            return T


def _suite_sandwich(rng):
    worst = []
    for k in range(20):
        n = 1 if k < 10 else 2
        psi = random_quadratic(rng, n)
        delta = float(10 ** rng.uniform(-3, -1))
        center = psi.argmin()[0]
        probes = center + rng.uniform(-0.5, 0.5, (12, n))
        rep = sandwich_report(psi, delta, probes, step=0.02 if n == 1 else 0.1)
        worst.append(max(rep.as_tuple()) - rep.slack)
        if not rep.holds:
            return False, worst
    return True, worst


def _suite_monotone(rng):
    deltas = [1e-4, 1e-3, 1e-2, 1e-1]
    for k in range(10):
        n = 1 if k < 5 else 2
        psi = random_quadratic(rng, n)
        x = psi.argmin()[0] + rng.uniform(-1, 1, (6, n))
        values = np.array([ulam_excess(psi, x, d) for d in deltas])
        if np.any(np.diff(values, axis=0) < -1e-12):
            return False
    return True


def _suite_equivariance(rng):
    base = [PNormFn(4.0, 1.0, 2), QuadraticFn([[1.0, 0.3], [0.3, 2.0]], [0.2, -0.1])]
    worst = 0.0
    for k in range(20):
        psi = base[k % 2]
        T = random_sl(rng, 2)
        composed = ComposedFn(psi, T)
        x = rng.uniform(-1, 1, (4, 2))
        delta = float(10 ** rng.uniform(-3, -1))
        lhs = ulam_excess(composed, x, delta)
        rhs = ulam_excess(psi, x @ T.T, delta)
        gap = np.max(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-300))
        worst = max(worst, float(gap))
    return worst <= 1e-6, worst


def smooth_families():
    from .harness import degenerate_surrogate

    return {
        "quadratic_1d": QuadraticFn([[1.0]]),
        "quadratic_2d": QuadraticFn([[1.0, 0.4], [0.4, 2.0]], [0.1, -0.2]),
        "pnorm4_1d": PNormFn(4.0, 1.0, 1),
        "pnorm3_2d": PNormFn(3.0, 2.0, 2),
        "composed_2d": ComposedFn(QuadraticFn(np.eye(2)), [[1.0, 0.5], [0.0, 2.0]]),
        "surrogate_1d": degenerate_surrogate(),
    }


def _suite_asa_forms():
    out = {}
    ok = True
    for name, psi in smooth_families().items():
        a, b = asa_density(psi), asa_boundary(psi)
        tol = a.err_estimate + b.err_estimate + 1e-9 * abs(a.value)
        out[name] = (a.value, b.value)
        ok &= abs(a.value - b.value) <= tol
    return ok, out


def _suite_valuation():
    worst = 0.0
    for shift in (0.5, 1.0, 3.0):
        for psi in (QuadraticFn([[1.0]]), QuadraticFn([[2.0, 0.3], [0.3, 1.0]])):
            lifted = QuadraticFn(psi.A, psi.b, psi.c + shift)
            lhs = asa_density(psi).value + asa_density(lifted).value
            # max of the functions is exp(-min psi), min is exp(-max psi)
            rhs = asa_density(PointwiseMinFn([psi, lifted])).value + asa_density(PointwiseMaxFn([psi, lifted])).value
            worst = max(worst, _rel(lhs, rhs))
    return worst <= 1e-6, worst


def _suite_cap_sandwich():
    for m in (2, 3):
        for r in np.linspace(0.5, 2.0, 10):
            for h in np.linspace(0.02, 0.98, 10) * 2 * r:
                if not ellipsoid_cap_sandwich_check(r, h, m)[3]:
                    return False
    return True


def _suite_disk_metronoid():
    disk = Ball(1.0, 2)
    u = np.array([1.0, 0.0])
    for delta in np.geomspace(1e-6, 0.5, 20):
        inner = body_cut_level(disk, u, (1 - 1 / math.e) * delta)
        outer = body_cut_level(disk, u, delta / math.e)
        middle = metronoid_support(disk, u, delta)
        if not inner <= middle <= outer:
            return False
    return True


@_timed(8, "property suites")
def criterion_8(seed: int = 2024):
    rng = np.random.default_rng(seed)
    sandwich_ok, sandwich_worst = _suite_sandwich(rng)
    equiv_ok, equiv_worst = _suite_equivariance(rng)
    asa_ok, asa_values = _suite_asa_forms()
    val_ok, val_worst = _suite_valuation()
    parts = {
        "sandwich": sandwich_ok,
        "monotone": _suite_monotone(rng),
        "equivariance": equiv_ok,
        "asa_forms": asa_ok,
        "valuation": val_ok,
        "cap_sandwich": _suite_cap_sandwich(),
        "disk_metronoid": _suite_disk_metronoid(),
    }
    details = {
        "parts": parts,
        "sandwich_worst_minus_slack": sandwich_worst,
        "equivariance_worst": equiv_worst,
        "asa": asa_values,
        "valuation_worst": val_worst,
    }
    return all(parts.values()), details


# -- 9 -------------------------------------------------------------------------------


def _sublevel_box(tilted: TiltedFn, level: float, n: int):
    """Axis box around ``{tilted <= level}`` from boundary points along many rays."""
    center, vmin = tilted.argmin()
    count = 2 if n == 1 else 720
    if n == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        phi = 2 * np.pi * np.arange(count) / count
        dirs = np.column_stack([np.cos(phi), np.sin(phi)])
    pts = []
    for u in dirs:
        r = find_monotone_root(lambda s: float(tilted.value((center + s * u)[None, :])[0]), level, 0.0, step=0.1)
        pts.append(center + r * u)
    pts = np.array(pts)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def monte_carlo_cap(psi, y, level, samples: int, rng, chunk: int = 200_000):
    """Volume and barycenter of ``{psi(x) <= t <= <x, y> + level}`` by uniform sampling.

    Returns:
        ``(volume, volume_se, barycenter, barycenter_se)``.
    """
    n = psi.dim
    y = np.atleast_1d(np.asarray(y, dtype=float))
    tilted = TiltedFn(psi, y)
    lo, hi = _sublevel_box(tilted, level, n)
    corners = np.array(np.meshgrid(*[[a, b] for a, b in zip(lo, hi)])).reshape(n, -1).T
    t_lo = psi.argmin()[1]
    t_hi = float(np.max(corners @ y)) + level
    box = float(np.prod(hi - lo) * (t_hi - t_lo))
    hits = 0
    s1 = np.zeros(n + 1)
    s2 = np.zeros(n + 1)
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        x = rng.uniform(lo, hi, (m, n))
        t = rng.uniform(t_lo, t_hi, m)
        inside = (psi.value(x) <= t) & (t <= x @ y + level)
        z = np.column_stack([x[inside], t[inside]])
        hits += int(inside.sum())
        s1 += z.sum(axis=0)
        s2 += (z * z).sum(axis=0)
        done += m
    p = hits / samples
    volume = box * p
    volume_se = box * math.sqrt(p * (1 - p) / samples)
    mean = s1 / hits
    var = s2 / hits - mean**2
    return volume, volume_se, mean, np.sqrt(np.maximum(var, 0.0) / hits)


def _random_cap_case(rng, k):
    n = 1 if k % 2 == 0 else 2
    if k % 4 < 2:
        psi = random_quadratic(rng, n)
    else:
        psi = PNormFn(float(rng.uniform(1.5, 4.0)), float(rng.uniform(0.5, 2.0)), n)
    y = rng.uniform(-1.0, 1.0, n)
    delta = float(10 ** rng.uniform(-1.5, 0))
    return psi, y, delta


@_timed(9, "cap oracles against Monte Carlo")
def criterion_9(seed: int = 7, samples: int = 1_000_000):
    rng = np.random.default_rng(seed)
    worst = 0.0
    rows = []
    for k in range(20):
        psi, y, delta = _random_cap_case(rng, k)
        direction = Direction.from_slope(y)
        stats = cap_barycenter(psi, direction, delta)
        level = stats.level / direction.last
        volume = cap_volume(psi, direction, stats.level)
        mc_vol, vol_se, mc_bary, bary_se = monte_carlo_cap(psi, y, level, samples, rng)
        z_vol = abs(volume - mc_vol) / vol_se
        z_bary = np.abs(stats.barycenter - mc_bary) / bary_se
        z = max(z_vol, float(np.max(z_bary)))
        worst = max(worst, z)
        rows.append({"dim": psi.dim, "delta": delta, "z_volume": z_vol, "z_barycenter": z_bary.tolist()})
    return worst <= 3.0, {"worst_z": worst, "rows": rows}


CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
}
QUICK = (1, 2, 6)


def run_suite(suite: str = "quick") -> list[CriterionResult]:
    """Run the quick or full criterion set in order."""
    numbers = QUICK if suite == "quick" else tuple(CRITERIA)
    return [CRITERIA[k]() for k in numbers]
