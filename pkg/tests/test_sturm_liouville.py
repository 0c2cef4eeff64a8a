import numpy as np
import pytest
from scipy.integrate import trapezoid

from chargedpolymer.charge_model import ChargeModel
from chargedpolymer.errors import ConfigError, DomainError, DomainTooSmallError
from chargedpolymer.sturm_liouville import SLGrid, a_star, chi, chi_value, scaling_constants

A_STAR_1 = 2.188755920595616
CHI_0_1 = -1.4771501255033612


def test_frozen_values():
    assert chi_value(0.0, 1.0) == pytest.approx(CHI_0_1, abs=1e-9)
    assert a_star(1.0) == pytest.approx(A_STAR_1, abs=1e-9)


def test_chi_negative_at_zero():
    assert chi_value(0.0, 1.0) < 0
    assert chi_value(0.0, 0.3) < 0


def test_solution_invariants():
    sol = chi(1.0, 1.0)
    x = sol.grid.x
    assert np.all(sol.eigfun > 0)
    assert trapezoid(sol.eigfun ** 2, x) == pytest.approx(1.0, abs=1e-12)
    tail = x >= sol.grid.x_max - 5 * sol.grid.spacing
    assert trapezoid(sol.eigfun[tail] ** 2, x[tail]) <= 1e-8
    for a in (-2.0, 0.0, 2.0, 3.0):
        s = chi(a, 1.0)
        assert s.refinement_gap <= 1e-5 * max(1.0, abs(s.chi))


def test_increasing_and_convex_in_a():
    grid = np.arange(-2.0, 3.01, 1.0)
    values = np.array([chi_value(a, 1.0) for a in grid])
    assert np.all(np.diff(values) > 0)
    fine = np.linspace(-2.0, 3.0, 11)
    values = np.array([chi_value(a, 1.0) for a in fine])
    assert np.all(values[2:] - 2 * values[1:-1] + values[:-2] > 0)


@pytest.mark.parametrize("a, b", [(1.0, 2.0), (2.0, 0.5)])
def test_scaling_law(a, b):
    assert chi_value(a, b) == pytest.approx(b ** (1 / 3) * chi_value(a * b ** (-2 / 3), 1.0),
                                            abs=1e-4)


def test_a_star():
    a1 = a_star(1.0)
    assert a1 > 0
    assert abs(chi_value(a1, 1.0)) <= 1e-8
    for b in (0.5, 2.0):
        assert a_star(b) == pytest.approx(a1 * b ** (2 / 3), abs=1e-4)


def test_a_star_grid_stability():
    coarse = a_star(1.0, SLGrid(points=2000))
    fine = a_star(1.0, SLGrid(points=4000))
    assert coarse == pytest.approx(fine, rel=1e-3)


def test_scaling_constants():
    c = scaling_constants(ChargeModel.gaussian(), 1.0)
    assert c.A == pytest.approx(A_STAR_1, abs=1e-4)
    assert c.B > 0
    assert c.C == pytest.approx(c.C_scaling_law, rel=1e-3)
    lat = ChargeModel.lattice([-1, 1], [0.5, 0.5])
    rho = np.tanh(0.5)
    assert scaling_constants(lat, 0.5).A == pytest.approx(A_STAR_1 * rho ** (2 / 3), abs=1e-4)


def test_grid_validation():
    with pytest.raises(ConfigError):
        SLGrid(points=499)
    with pytest.raises(ConfigError):
        SLGrid(x_max=60.0, points=1000)
    with pytest.raises(DomainError):
        chi(0.0, 0.0)
    with pytest.raises(DomainError):
        a_star(-1.0)


def test_boundary_extension():
    small = SLGrid(2.0, 500)
    with pytest.raises(DomainTooSmallError):
        chi(1.0, 0.01, small, extend=False)
    sol = chi(1.0, 0.01, small)
    assert sol.grid.x_max > small.x_max
