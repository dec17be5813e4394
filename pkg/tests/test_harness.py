from __future__ import annotations

import numpy as np
import pytest

from ulamfloat.asa import asa_density
from ulamfloat.core import constant_c
from ulamfloat.errors import DomainError
from ulamfloat.functions import MaxAffineFn, PNormFn, QuadraticFn, SlopeGrid
from ulamfloat.harness import (
    SLIVER_OPTIONS,
    deficit_integrals,
    degenerate_surrogate,
    degenerate_sweep,
    floating_sweep,
    stability_gate,
    ulam_deficit_sweep,
)

GAUSS_DELTAS = [2 / 3 * 4.0**-k for k in range(7)]


def test_parabola_deficits_are_exact_powers():
    # the excess of x^2/2 is constant, so I and J have closed forms
    psi = QuadraticFn(np.eye(1))
    delta = 0.01
    excess = constant_c(2) * delta ** (2 / 3)
    res = deficit_integrals(psi, delta)
    mass = np.sqrt(2 * np.pi)
    assert res.J == pytest.approx(excess * mass, rel=1e-7)
    assert res.I == pytest.approx(-np.expm1(-excess) * mass, rel=1e-7)
    assert res.clamp_mass == 0.0


def test_gaussian_sweep_matches_reference():
    rep_i, rep_j = ulam_deficit_sweep(QuadraticFn(np.eye(1)), GAUSS_DELTAS)
    assert rep_i.rel_gap < 0.03 and rep_j.rel_gap < 0.03
    assert len(rep_i.rows) == 7
    summary = rep_j.summary()
    assert set(summary) == {"quantity", "reference", "limit", "rel_gap", "fit"}
    assert set(summary["fit"]) == {"exponent", "amplitude", "residual"}


def test_quartic_sweep_matches_reference():
    psi = PNormFn(4.0, 1.0, 1)
    deltas = [0.1 * 4.0**-k for k in range(5)]
    rep_i, rep_j = ulam_deficit_sweep(psi, deltas)
    ref = constant_c(2) * asa_density(psi).value
    assert rep_j.reference == pytest.approx(ref)
    assert rep_j.rel_gap < 0.03


def test_floating_sweep_ratio():
    psi = QuadraticFn(np.eye(1))
    flo = floating_sweep(psi, GAUSS_DELTAS)
    _, rep_j = ulam_deficit_sweep(psi, GAUSS_DELTAS)
    assert flo.limit / rep_j.limit == pytest.approx(5 / 3, rel=0.01)


def test_lattice_route_clamps_are_small():
    psi = QuadraticFn(np.eye(1))
    grid = SlopeGrid.uniform(9.0, 0.01, 1)
    res = deficit_integrals(psi, 0.1, grid)
    exact = deficit_integrals(psi, 0.1)
    assert res.J == pytest.approx(exact.J, rel=1e-3)
    assert res.clamp_mass < 1e-6


def test_sweep_validation():
    psi = QuadraticFn(np.eye(1))
    with pytest.raises(DomainError):
        ulam_deficit_sweep(psi, [0.1, 0.01, 0.001])
    with pytest.raises(DomainError):
        ulam_deficit_sweep(psi, [0.1, 0.2, 0.01, 0.001])
    with pytest.raises(DomainError):
        deficit_integrals(MaxAffineFn([[-1.0], [1.0]], [0.0, 0.0]), 0.1)
    with pytest.raises(DomainError):
        deficit_integrals(QuadraticFn(np.eye(3)), 0.1)


def test_stability_gate():
    gate = stability_gate(PNormFn(4.0, 1.0, 1), [0.1, 0.025, 0.00625, 0.0015625], 1e-4)
    assert gate["holds"]


def test_threads_do_not_change_results():
    psi = PNormFn(4.0, 1.0, 1)
    deltas = [0.1, 0.025, 0.00625, 0.0015625]
    serial = ulam_deficit_sweep(psi, deltas)[1]
    pooled = ulam_deficit_sweep(psi, deltas, threads=2)[1]
    assert serial.rows == pooled.rows


@pytest.mark.slow
def test_degenerate_surrogate_decays():
    psi = degenerate_surrogate()
    rep = degenerate_sweep(psi, [1e-2, 1e-4, 1e-6], rel_tol=1e-6)
    scaled = [row[2] for row in rep.rows]
    assert scaled[-1] <= 0.5 * scaled[0]
    assert scaled[0] > scaled[1] > scaled[2]
    # a stronger quadratic floor raises the plateau
    floor = deficit_integrals(degenerate_surrogate(mu=1e-4), 1e-6, options=SLIVER_OPTIONS, rel_tol=1e-6)
    assert floor.J / 1e-6 ** (2 / 3) > scaled[2]
