# -*- coding: utf-8 -*-

"""Actor loss ``E_s E_a[log pi(a|s) - Q(s, a)]`` and its gradient estimators.

Two unbiased single-draw estimators of the loss gradient are provided:

- the reparameterized one, which differentiates through
  ``a = f(eps; s) = mu(s) + eps * sigma(s)`` (total derivative), and
- the score-function ("nabla log") one, which only needs
  ``grad_phi log pi(a|s)`` at a sampled action and so also covers mixtures.

Batches are means of independent single draws, processed in fixed-size
chunks so memory stays bounded; draws are taken chunk by chunk (state
indices first, then noise) so results only depend on the seed.
"""

import numpy as np

from dataclasses import dataclass
from typing import Optional

from .errors import ContractViolation, UnsupportedReparameterization
from .policies import GaussianPolicy, _align, _unbatch
from .quadrature import integrate
from .targets import log_partition

REPARAM = 'reparam'
SCOREFN = 'scorefn'
ESTIMATORS = (REPARAM, SCOREFN)

CHUNK = 1 << 16


@dataclass(frozen=True)
class GradEstimate:
    """Parameter-gradient estimate in the policy's flattening order.

    ``stderr`` is the per-coordinate standard error of the averaged
    single-draw estimates; it is ``None`` for a single draw.
    """

    g: np.ndarray
    estimator: str
    n_samples: int
    seed: Optional[int] = None
    stderr: Optional[np.ndarray] = None

    def to_json(self):
        return {
            'g': self.g.tolist(),
            'estimator': self.estimator,
            'n_samples': self.n_samples,
            'seed': self.seed,
            'stderr': None if self.stderr is None else self.stderr.tolist(),
        }


@dataclass(frozen=True)
class LossEstimate:
    value: float
    n_samples: int
    standard_error: float

    def to_json(self):
        return {
            'value': self.value,
            'n_samples': self.n_samples,
            'standard_error': self.standard_error,
        }


class RunningMoments(object):
    """Mean and sum of squared deviations merged chunk by chunk."""

    def __init__(self, width):
        self.count = 0
        self.mean = np.zeros(width)
        self.m2 = np.zeros(width)

    def add(self, rows):
        size = len(rows)
        mean = np.mean(rows, axis=0)
        m2 = np.sum((rows - mean) ** 2, axis=0)
        if self.count == 0:
            self.count, self.mean, self.m2 = size, mean, m2
            return
        total = self.count + size
        delta = mean - self.mean
        self.mean = self.mean + delta * (size / total)
        self.m2 = self.m2 + m2 + delta ** 2 * (self.count * size / total)
        self.count = total

    @property
    def stderr(self):
        if self.count < 2:
            return None
        return np.sqrt(self.m2 / (self.count - 1) / self.count)


def _require_count(n):
    if int(n) != n or n < 1:
        raise ContractViolation('Sample count must be >= 1, got %r.' % (n,))
    return int(n)


def _require_gaussian(policy, operation):
    if not isinstance(policy, GaussianPolicy):
        raise UnsupportedReparameterization(operation)


def _chunks(n):
    while n > 0:
        size = min(CHUNK, n)
        yield size
        n -= size


def _reparam_rows(policy, q, S, E):
    X = policy._reparameterize(S, E)
    _, score = policy._log_prob_and_score(S, X)
    pull = policy._grad_action(S, X) - q._grad(S, X)
    return score + np.einsum('ni,nip->np', pull, policy._jacobian(S, E))


def _scorefn_rows(policy, q, S, X):
    logp, score = policy._log_prob_and_score(S, X)
    return (1.0 + logp - q._eval(S, X))[:, None] * score


def loss_mc(policy, q, buffer, n, rng):
    """Reparameterized Monte Carlo estimate of the actor loss."""
    _require_gaussian(policy, 'loss_mc')
    n = _require_count(n)
    moments = RunningMoments(1)
    for size in _chunks(n):
        S = buffer.states[buffer.draw(rng, size)]
        E = rng.standard_normal((size, policy.action_dim))
        X = policy._reparameterize(S, E)
        logp, _ = policy._log_prob_and_score(S, X)
        moments.add((logp - q._eval(S, X))[:, None])
    stderr = moments.stderr
    return LossEstimate(
        value=float(moments.mean[0]),
        n_samples=n,
        standard_error=0.0 if stderr is None else float(stderr[0]),
    )


def loss_sampled(policy, q, buffer, n, rng):
    """Monte Carlo estimate of the actor loss with actions drawn from the
    policy directly; works for any policy, mixtures included."""
    n = _require_count(n)
    moments = RunningMoments(1)
    for size in _chunks(n):
        S = buffer.states[buffer.draw(rng, size)]
        X = policy._sample(S, rng, single=False)
        logp, _ = policy._log_prob_and_score(S, X)
        moments.add((logp - q._eval(S, X))[:, None])
    stderr = moments.stderr
    return LossEstimate(
        value=float(moments.mean[0]),
        n_samples=n,
        standard_error=0.0 if stderr is None else float(stderr[0]),
    )


def _require_scalar_action(policy):
    if policy.action_dim != 1:
        raise ContractViolation('Quadrature needs a 1-D action space.')


def exact_loss(policy, q, s, grid):
    """Quadrature of ``int pi(a|s) (log pi(a|s) - Q(s, a)) da`` (1-D actions).

    Adding ``log_partition`` yields the reverse KL divergence.
    """
    _require_scalar_action(policy)
    s = np.asarray(s, dtype=np.float64)

    def integrand(points):
        S, X, _ = _align(policy, s, points[:, None])
        logp, _ = policy._log_prob_and_score(S, X)
        return np.exp(logp) * (logp - q._eval(S, X))

    return integrate(integrand, grid)


def reverse_kl(policy, q, s, grid):
    """``KL(pi(.|s) || exp(Q(s, .)) / Z(s))`` by quadrature."""
    return exact_loss(policy, q, s, grid) + log_partition(q, s, grid)


def reverse_kl_gradient(policy, q, s, grid):
    """Quadrature of the expected score-function estimate (1-D actions)."""
    _require_scalar_action(policy)
    s = np.asarray(s, dtype=np.float64)

    def integrand(points):
        S, X, _ = _align(policy, s, points[:, None])
        logp, score = policy._log_prob_and_score(S, X)
        weight = np.exp(logp) * (1.0 + logp - q._eval(S, X))
        return (weight[:, None] * score).T

    return integrate(integrand, grid)


def reparam_grad_single(policy, q, s, eps):
    """One-draw reparameterized gradient::

        grad_phi log pi(a|s)
            + (grad_a log pi(a|s) - grad_a Q(s, a)) . grad_phi f(eps; s)

    with ``a = f(eps; s)``; the first term holds ``a`` fixed.
    """
    _require_gaussian(policy, 'reparam_grad_single')
    S, E, single = _align(policy, s, eps, name='eps')
    rows = _reparam_rows(policy, q, S, E)
    return GradEstimate(g=_unbatch(rows, single), estimator=REPARAM,
                        n_samples=1)


def scorefn_grad_single(policy, q, s, a):
    """One-draw score-function gradient
    ``(1 + log pi(a|s) - Q(s, a)) * grad_phi log pi(a|s)``.

    Unbiased only when ``a`` was sampled from ``policy`` at ``s``.
    """
    S, X, single = _align(policy, s, a)
    rows = _scorefn_rows(policy, q, S, X)
    return GradEstimate(g=_unbatch(rows, single), estimator=SCOREFN,
                        n_samples=1)


def grad_batch(kind, policy, q, buffer, n, rng, states_rng=None, seed=None):
    """Mean of ``n`` independent single-draw estimates.

    State indices come from ``states_rng`` when given (common random numbers
    across estimators), else from ``rng``.
    """
    if kind not in ESTIMATORS:
        raise ContractViolation('Unknown estimator %r.' % (kind,))
    if kind == REPARAM:
        _require_gaussian(policy, 'grad_batch(reparam)')
    if buffer.state_dim != policy.state_dim:
        raise ContractViolation(
            'Buffer states have dimension %d, policy expects %d.' % (
                buffer.state_dim, policy.state_dim,
            )
        )
    n = _require_count(n)
    states_rng = states_rng or rng
    moments = RunningMoments(policy.param_dim)
    for size in _chunks(n):
        S = buffer.states[buffer.draw(states_rng, size)]
        if kind == REPARAM:
            E = rng.standard_normal((size, policy.action_dim))
            moments.add(_reparam_rows(policy, q, S, E))
        else:
            X = policy._sample(S, rng, single=False)
            moments.add(_scorefn_rows(policy, q, S, X))
    return GradEstimate(
        g=moments.mean,
        estimator=kind,
        n_samples=n,
        seed=seed,
        stderr=moments.stderr,
    )
