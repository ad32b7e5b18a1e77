# -*- coding: utf-8 -*-

"""Toy soft Q-functions whose Boltzmann density ``exp(Q) / Z`` is known."""

import numpy as np
import warnings

from scipy.special import logsumexp

from .errors import ContractViolation, ConvergenceWarning
from .quadrature import log_integrate

HALF_LOG_2PI = 0.5 * float(np.log(2.0 * np.pi))
CROSS_CHECK = 1e-10
"""Largest gap between quadrature and closed-form ``ln Z`` left silent."""


def _array(value, ndim, name):
    array = np.array(value, dtype=np.float64)
    if array.ndim != ndim or not np.all(np.isfinite(array)):
        raise ContractViolation(
            '%s must be a finite %d-D array, got %r.' % (name, ndim, value)
        )
    array.setflags(write=False)
    return array


def _actions(q, a):
    X = np.asarray(a, dtype=np.float64)
    if X.ndim not in (1, 2) or X.shape[-1] != q.action_dim:
        raise ContractViolation(
            'Actions must have trailing dimension %d, got shape %r.' % (
                q.action_dim, X.shape,
            )
        )
    return np.atleast_2d(X), X.ndim == 1


def _align(q, s, a):
    """Broadcast states against actions; returns (S, X, single).

    Targets that ignore the state (``state_dim is None``) accept ``None``.
    """
    X, single_x = _actions(q, a)
    if s is None:
        return None, X, single_x
    S = np.asarray(s, dtype=np.float64)
    if S.ndim not in (1, 2) or (q.state_dim is not None and
                                S.shape[-1] != q.state_dim):
        raise ContractViolation(
            'States must have trailing dimension %s, got shape %r.' % (
                q.state_dim, S.shape,
            )
        )
    single_s = S.ndim == 1
    S = np.atleast_2d(S)
    if len(S) != len(X):
        if len(S) == 1:
            S = np.broadcast_to(S, (len(X), S.shape[1]))
        elif len(X) == 1:
            X = np.broadcast_to(X, (len(S), X.shape[1]))
        else:
            raise ContractViolation(
                'Batch sizes differ: %d states, %d actions.' % (
                    len(S), len(X),
                )
            )
    return S, X, (single_s and single_x)


class QuadraticQ(object):
    """``Q(s, a) = -scale * |a - (M s + c)|^2 / 2``."""

    kind = 'quadratic'

    def __init__(self, M, c, scale=1.0):
        self._M = _array(M, 2, 'M')
        self._c = _array(c, 1, 'c')
        self._scale = float(scale)
        if self._c.shape != (self._M.shape[0],):
            raise ContractViolation(
                'Peak bias c%r does not match M%r.' % (
                    self._c.shape, self._M.shape,
                )
            )
        if not self._scale > 0.0:
            raise ContractViolation('scale must be positive, got %r.' % scale)

    @property
    def M(self):
        return self._M

    @property
    def c(self):
        return self._c

    @property
    def scale(self):
        return self._scale

    @property
    def action_dim(self):
        return self._M.shape[0]

    @property
    def state_dim(self):
        return self._M.shape[1]

    def peak(self, s):
        S = np.asarray(s, dtype=np.float64)
        if S.ndim not in (1, 2) or S.shape[-1] != self.state_dim:
            raise ContractViolation(
                'States must have trailing dimension %d, got shape %r.' % (
                    self.state_dim, S.shape,
                )
            )
        return S @ self._M.T + self._c

    def _eval(self, s, X):
        delta = X - np.atleast_2d(self.peak(s))
        return -0.5 * self._scale * np.sum(delta * delta, axis=-1)

    def _grad(self, s, X):
        return -self._scale * (X - np.atleast_2d(self.peak(s)))

    def closed_log_partition(self, s):
        return 0.5 * self.action_dim * float(np.log(2.0 * np.pi / self._scale))

    def to_json(self):
        return {
            'kind': self.kind,
            'M': self._M.tolist(),
            'c': self._c.tolist(),
            'scale': self._scale,
        }


class MixtureLogQ(object):
    """Log-density of an isotropic Gaussian mixture; ``Z = 1`` for every state.

    The state is accepted for interface symmetry and ignored.
    """

    kind = 'log_mixture'
    state_dim = None

    def __init__(self, centers, stds, weights):
        centers = np.array(centers, dtype=np.float64)
        if centers.ndim == 1:
            centers = centers[:, None]
        self._centers = _array(centers, 2, 'centers')
        self._stds = _array(stds, 1, 'stds')
        self._weights = _array(weights, 1, 'weights')
        size = len(self._centers)
        if self._stds.shape != (size,) or self._weights.shape != (size,):
            raise ContractViolation(
                '%d centers need as many stds and weights.' % size
            )
        if np.any(self._stds <= 0.0):
            raise ContractViolation('stds must be positive.')
        if (np.any(self._weights <= 0.0) or
                abs(np.sum(self._weights) - 1.0) > 1e-12):
            raise ContractViolation('weights must lie on the simplex.')

    @property
    def centers(self):
        return self._centers

    @property
    def stds(self):
        return self._stds

    @property
    def weights(self):
        return self._weights

    @property
    def action_dim(self):
        return self._centers.shape[1]

    def _joint(self, X):
        z = (X[:, None, :] - self._centers) / self._stds[:, None]
        log_n = np.sum(
            -HALF_LOG_2PI - np.log(self._stds)[:, None] - 0.5 * z * z,
            axis=-1,
        )
        return log_n + np.log(self._weights)

    def _eval(self, s, X):
        return logsumexp(self._joint(X), axis=-1)

    def _grad(self, s, X):
        joint = self._joint(X)
        r = np.exp(joint - logsumexp(joint, axis=-1)[:, None])
        pull = -(X[:, None, :] - self._centers) / (self._stds ** 2)[:, None]
        return np.sum(r[:, :, None] * pull, axis=1)

    def closed_log_partition(self, s):
        return 0.0

    def to_json(self):
        return {
            'kind': self.kind,
            'centers': self._centers.tolist(),
            'stds': self._stds.tolist(),
            'weights': self._weights.tolist(),
        }


def canonical_bimodal_target():
    """Equal mixture of unit Gaussians centred at -2 and 2."""
    return MixtureLogQ(centers=[-2.0, 2.0], stds=[1.0, 1.0],
                       weights=[0.5, 0.5])


def q_eval(q, s, a):
    S, X, single = _align(q, s, a)
    values = q._eval(S, X)
    return values[0] if single else values


def grad_q_action(q, s, a):
    S, X, single = _align(q, s, a)
    grads = q._grad(S, X)
    return grads[0] if single else grads


def log_partition(q, s, grid=None):
    """``ln Z(s)``: closed form without a grid, Simpson quadrature with one.

    Quadrature is 1-D only and warns when the grid is too coarse or when it
    misses the closed form by more than ``CROSS_CHECK``.
    """
    closed = q.closed_log_partition(s)
    if grid is None:
        return closed
    if q.action_dim != 1:
        raise ContractViolation('Quadrature needs a 1-D action space.')
    value = log_integrate(lambda points: q._eval(s, points[:, None]), grid)
    if not abs(value - closed) <= CROSS_CHECK:
        warnings.warn(
            'Quadrature gives ln Z = %r on %r, closed form %r.' % (
                value, grid, closed,
            ),
            ConvergenceWarning,
        )
    return value


def target_from_json(doc):
    try:
        kind = doc['kind']
        if kind == 'quadratic':
            return QuadraticQ(doc['M'], doc['c'], doc.get('scale', 1.0))
        if kind == 'log_mixture':
            return MixtureLogQ(doc['centers'], doc['stds'], doc['weights'])
    except KeyError as error:
        raise ContractViolation('Target document lacks %s.' % error)
    raise ContractViolation('Unknown target kind %r.' % (kind,))


def target_to_json(q):
    return q.to_json()
