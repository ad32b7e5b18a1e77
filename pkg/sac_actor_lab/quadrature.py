# -*- coding: utf-8 -*-

"""Composite Simpson quadrature on uniform 1-D grids."""

import numpy as np
import warnings

from collections import namedtuple
from scipy.integrate import simpson

from .errors import ContractViolation, ConvergenceWarning

TOLERANCE = 1e-8
"""Largest change under refinement doubling still considered converged."""


class Grid(namedtuple('Grid', ['lower', 'upper', 'nodes'])):
    """Uniform grid of an odd number of nodes on ``[lower, upper]``."""

    __slots__ = ()

    def __new__(cls, lower=-12.0, upper=12.0, nodes=4001):
        lower, upper, nodes = float(lower), float(upper), int(nodes)
        if nodes < 3 or nodes % 2 == 0:
            raise ContractViolation(
                'Simpson grid needs an odd node count >= 3, got %d.' % nodes
            )
        if not upper > lower:
            raise ContractViolation(
                'Empty grid [%r, %r].' % (lower, upper)
            )
        return super().__new__(cls, lower, upper, nodes)

    @classmethod
    def covering(cls, centers, spread, nodes=4001, width=10.0):
        """Grid spanning ``width`` spreads beyond the extreme centers."""
        centers = np.asarray(centers, dtype=float)
        return cls(centers.min() - width * spread,
                   centers.max() + width * spread, nodes)

    @property
    def points(self):
        return np.linspace(self.lower, self.upper, self.nodes)

    def refined(self):
        """Same interval, step halved."""
        return Grid(self.lower, self.upper, 2 * self.nodes - 1)

    def to_json(self):
        return {'lower': self.lower, 'upper': self.upper, 'nodes': self.nodes}


def integrate(func, grid, check=True):
    """Composite Simpson estimate of the integral of ``func`` over ``grid``.

    ``func`` maps the array of nodes to values along its last axis, so
    vector-valued integrands return shape ``(..., nodes)``.  With ``check``,
    the estimate is recomputed on the refined grid and a
    ``ConvergenceWarning`` is issued if any coordinate moves by more than
    ``TOLERANCE``.  The value on ``grid`` itself is returned.
    """
    points = grid.points
    value = simpson(func(points), x=points, axis=-1)
    if check:
        finer = grid.refined().points
        delta = np.max(np.abs(simpson(func(finer), x=finer, axis=-1) - value))
        if not delta <= TOLERANCE:
            warnings.warn(ConvergenceWarning(
                'Simpson estimate moved by %.3g under refinement of %r.' % (
                    delta, grid,
                )
            ), stacklevel=2)
    if np.ndim(value) == 0:
        return float(value)
    return value


def log_integrate(log_func, grid, check=True):
    """Log of the integral of ``exp(log_func)``, shifted by the grid peak."""
    shift = float(np.max(log_func(grid.points)))

    def shifted(points):
        return np.exp(log_func(points) - shift)

    return shift + float(np.log(integrate(shifted, grid, check=check)))
