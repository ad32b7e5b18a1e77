# -*- coding: utf-8 -*-

import numpy as np
import pytest

from sac_actor_lab.errors import ContractViolation, ConvergenceWarning
from sac_actor_lab.quadrature import Grid, integrate, log_integrate


@pytest.mark.parametrize('lower,upper,nodes', [
    (-1.0, 1.0, 4),
    (-1.0, 1.0, 1),
    (1.0, 1.0, 5),
    (2.0, -2.0, 5),
])
def test_grid_invalid(lower, upper, nodes):
    with pytest.raises(ContractViolation):
        print(Grid(lower, upper, nodes))


def test_grid_defaults():
    grid = Grid()
    assert grid == (-12.0, 12.0, 4001)
    assert grid.points[0] == -12.0
    assert grid.points[-1] == 12.0
    assert grid.to_json() == {'lower': -12.0, 'upper': 12.0, 'nodes': 4001}


def test_grid_refined():
    grid = Grid(0.0, 1.0, 5).refined()
    assert grid.nodes == 9
    np.testing.assert_allclose(np.diff(grid.points), 0.125)


def test_grid_covering():
    grid = Grid.covering([-2.0, 3.0], spread=0.5, nodes=11)
    assert grid == (-7.0, 8.0, 11)


def test_integrate_cubic_is_exact(strict_quadrature):
    value = integrate(lambda x: x ** 3, Grid(-1.0, 2.0, 5))
    assert isinstance(value, float)
    assert value == pytest.approx(3.75, abs=1e-14)


def test_integrate_vector_valued(strict_quadrature):
    value = integrate(lambda x: np.stack([x, x * x]), Grid(0.0, 1.0, 3))
    np.testing.assert_allclose(value, [0.5, 1.0 / 3.0], atol=1e-15)


def test_integrate_density(strict_quadrature):
    def density(x):
        return np.exp(-0.5 * (x - 1.0) ** 2) / np.sqrt(2.0 * np.pi)

    assert integrate(density, Grid()) == pytest.approx(1.0, abs=1e-10)


def test_integrate_coarse_grid_warns():
    def density(x):
        return np.exp(-0.5 * x ** 2 / 0.01)

    with pytest.warns(ConvergenceWarning):
        integrate(density, Grid(-12.0, 12.0, 5))


def test_integrate_unchecked_is_silent(recwarn):
    integrate(lambda x: np.exp(-50.0 * x ** 2), Grid(-12.0, 12.0, 5),
              check=False)
    assert len(recwarn) == 0


def test_log_integrate_shifts(strict_quadrature):
    value = log_integrate(lambda x: 1000.0 - 0.5 * x ** 2, Grid())
    assert value == pytest.approx(1000.0 + 0.5 * np.log(2.0 * np.pi),
                                  abs=1e-10)
