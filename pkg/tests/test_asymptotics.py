import math

import numpy as np
import pytest

from gdyn.asymptotics import (
    collision_law_T,
    collision_micro_law,
    edge_micro_law,
    ginibre_bulk_O,
    ginibre_bulk_deviation,
    macro_O,
    macro_spiric,
    solve_min_saddle,
    spiric_sigma,
)
from gdyn.errors import ValidationError
from gdyn.exact import SourceSpec, ginibre_closed_sum, spiric_boundary


@pytest.mark.parametrize("z", [0.0, 0.3 + 0.4j, 1.7j])
def test_null_source_saddle(z):
    res = solve_min_saddle(0.8, z, SourceSpec.ginibre(5))
    assert res.converged
    assert res.sigma_min == pytest.approx(abs(z) ** 2 - 0.8, abs=1e-12)


@pytest.mark.parametrize("z", [0.0, 0.2 + 0.1j, 0.6, 0.45j])
@pytest.mark.parametrize("tau", [0.1, 0.25, 0.6])
def test_spiric_saddle_closed_form(z, tau):
    a = 0.5
    res = solve_min_saddle(tau, z, SourceSpec.spiric(4, a))
    assert res.sigma_min == pytest.approx(spiric_sigma(tau, a, z), abs=1e-10)


def test_small_tau_saddle_approaches_nearest_source():
    src = SourceSpec.from_values([0.5, -0.5j, 1.0])
    z = 0.4 + 0.1j
    amin = np.min(src.distances(z))
    gaps = [amin - solve_min_saddle(t, z, src).sigma_min for t in (1e-2, 1e-3, 1e-4)]
    assert all(g > 0 for g in gaps)
    assert gaps[1] / gaps[0] == pytest.approx(0.1, rel=0.05)
    assert gaps[2] / gaps[1] == pytest.approx(0.1, rel=0.05)


def test_macro_null_source():
    src = SourceSpec.ginibre(3)
    assert macro_O(0.7, 0.0, src) == pytest.approx(1 / (math.pi * 0.7), rel=1e-12)
    assert macro_O(0.7, 0.9, src) == 0.0
    assert ginibre_bulk_O(0.7, 0.2) == pytest.approx((0.7 - 0.2) / (math.pi * 0.49))


def test_macro_spiric_reductions():
    tau = 0.5
    zs = np.array([0.0, 0.3, 0.2 + 0.5j])
    assert np.allclose(macro_spiric(tau, 0.0, zs), ginibre_bulk_O(tau, np.abs(zs) ** 2), atol=1e-14)
    a = 0.4
    assert macro_spiric(tau, a, 0.0) == pytest.approx((tau - a * a) / (math.pi * tau * tau))


def test_macro_spiric_matches_saddle_solver():
    tau, a = 0.3, 0.5 + 0.1j
    src = SourceSpec.spiric(2, a)
    for x in np.linspace(-1, 1, 9):
        for y in np.linspace(-0.6, 0.6, 7):
            z = x + 1j * y
            assert macro_O(tau, z, src) == pytest.approx(float(macro_spiric(tau, a, z)), abs=1e-10)


def test_macro_support_matches_spiric_boundary():
    tau, a = 0.2, 0.5
    src = SourceSpec.spiric(2, a)
    xs = np.linspace(-1.2, 1.2, 61)
    for x in xs:
        for y in (0.0, 0.1, 0.3):
            z = x + 1j * y
            inside = spiric_boundary(tau, a, z)
            sigma = spiric_sigma(tau, a, z)
            if abs(sigma) > 1e-9:
                assert (macro_O(tau, z, src) > 0) == inside


def test_bulk_deviation_complement_form():
    r2 = np.array([0.0, 0.2, 0.45])
    dev = ginibre_bulk_deviation(50, 1.0, r2)
    direct = ginibre_closed_sum(50, 1.0, r2) / ginibre_bulk_O(1.0, r2) - 1
    assert np.allclose(dev, direct, atol=1e-13)
    with pytest.raises(ValidationError):
        ginibre_bulk_deviation(50, 1.0, 1.0)


def test_edge_law_limits():
    tau = 0.9
    assert edge_micro_law(0.0, tau) == pytest.approx(1 / (math.pi * tau * math.sqrt(2 * math.pi)))
    assert edge_micro_law(8.0, tau) < 1e-20
    d = -6.0
    assert edge_micro_law(d, tau) == pytest.approx(-2 * d / (math.pi * tau ** 1.5), rel=1e-12)


def test_collision_law_limits_and_identity():
    a = 0.3 - 0.4j
    a2 = abs(a) ** 2
    assert collision_law_T(0.0, a2) == pytest.approx(1 / (math.pi * a2 * math.sqrt(2 * math.pi)))
    assert collision_law_T(-50.0, a2) < 1e-30
    deltas = np.linspace(-3, 3, 31)
    for tau in (0.25, 1.0):
        lhs = collision_law_T(-2 * deltas * math.sqrt(tau), tau)
        assert np.max(np.abs(lhs - edge_micro_law(deltas, tau))) < 1e-12
    assert collision_micro_law(0.0, 0.0, a) == pytest.approx(collision_law_T(0.0, a2))
    with pytest.raises(ValidationError):
        collision_micro_law(0.1, 0.0, 0.0)
