# -*- coding: utf-8 -*-

"""Action distributions: diagonal Gaussian and mixture of diagonal Gaussians.

Every operation accepts either a single state/action (1-D arrays) or a batch
(2-D arrays with samples on the leading axis).  A single state may be paired
with a batch of actions, which is how densities are tabulated on quadrature
grids.

Parameter vectors are flattened in a fixed order: ``A`` row-major, ``b``,
``C`` row-major, ``d``.  Mixtures concatenate their components in order and
then append the weight logits.
"""

import numpy as np

from scipy.special import logsumexp, softmax

from .errors import ContractViolation, UnsupportedReparameterization

SIGMA_FLOOR = 1e-6
LOG_SIGMA_FLOOR = float(np.log(SIGMA_FLOOR))
HALF_LOG_2PI = 0.5 * float(np.log(2.0 * np.pi))


def _frozen(value, ndim, name):
    array = np.array(value, dtype=np.float64)
    if array.ndim != ndim:
        raise ContractViolation(
            '%s must have %d dimension(s), got shape %r.' % (
                name, ndim, array.shape,
            )
        )
    if not np.all(np.isfinite(array)):
        raise ContractViolation('%s has non-finite entries.' % name)
    array.setflags(write=False)
    return array


def _rows(value, width, name):
    """Coerce to a (n, width) float array; report whether input was 1-D."""
    array = np.asarray(value, dtype=np.float64)
    if array.ndim not in (1, 2) or array.shape[-1] != width:
        raise ContractViolation(
            '%s must have trailing dimension %d, got shape %r.' % (
                name, width, array.shape,
            )
        )
    return np.atleast_2d(array), array.ndim == 1


def _align(policy, s, x, name='a'):
    """Broadcast states against actions (or noise); returns (S, X, single)."""
    S, single_s = _rows(s, policy.state_dim, 's')
    X, single_x = _rows(x, policy.action_dim, name)
    if len(S) != len(X):
        if len(S) == 1:
            S = np.broadcast_to(S, (len(X), S.shape[1]))
        elif len(X) == 1:
            X = np.broadcast_to(X, (len(S), X.shape[1]))
        else:
            raise ContractViolation(
                'Batch sizes differ: %d states, %d rows of %s.' % (
                    len(S), len(X), name,
                )
            )
    return S, X, (single_s and single_x)


def _unbatch(value, single):
    return value[0] if single else value


def _affine_gradient(dmu, dlogsig, S):
    """Chain seeds through ``mu = A s + b`` and ``log sigma = C s + d``.

    ``dmu`` and ``dlogsig`` have shape ``(n, ..., action_dim)``; the result
    has shape ``(n, ..., param_dim)`` in flattening order.
    """
    lead = dmu.shape[:-1]
    s = S.reshape((S.shape[0],) + (1,) * (dmu.ndim - 1) + (S.shape[1],))
    gA = (dmu[..., None] * s).reshape(lead + (-1,))
    gC = (dlogsig[..., None] * s).reshape(lead + (-1,))
    return np.concatenate([gA, dmu, gC, dlogsig], axis=-1)


class GaussianPolicy(object):
    """Diagonal Gaussian ``N(A s + b, diag(exp(C s + d))^2)``.

    The standard deviation is floored at ``SIGMA_FLOOR``; below the floor the
    log-std no longer depends on ``C`` and ``d`` and their gradients vanish.
    """

    kind = 'gaussian'

    def __init__(self, A, b, C, d):
        self._A = _frozen(A, 2, 'A')
        self._b = _frozen(b, 1, 'b')
        self._C = _frozen(C, 2, 'C')
        self._d = _frozen(d, 1, 'd')
        action_dim, state_dim = self._A.shape
        if (self._b.shape != (action_dim,) or
                self._C.shape != (action_dim, state_dim) or
                self._d.shape != (action_dim,)):
            raise ContractViolation(
                'Inconsistent shapes A%r b%r C%r d%r.' % (
                    self._A.shape, self._b.shape,
                    self._C.shape, self._d.shape,
                )
            )
        if action_dim < 1 or state_dim < 1:
            raise ContractViolation('Empty action or state space.')

    @classmethod
    def constant(cls, mean, log_std, state_dim=1):
        """State-independent policy (``A = C = 0``)."""
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        log_std = np.broadcast_to(
            np.asarray(log_std, dtype=np.float64), mean.shape,
        )
        zeros = np.zeros((len(mean), state_dim))
        return cls(zeros, mean, zeros, log_std)

    @property
    def A(self):
        return self._A

    @property
    def b(self):
        return self._b

    @property
    def C(self):
        return self._C

    @property
    def d(self):
        return self._d

    @property
    def action_dim(self):
        return self._A.shape[0]

    @property
    def state_dim(self):
        return self._A.shape[1]

    @property
    def param_dim(self):
        return 2 * self.action_dim * (self.state_dim + 1)

    @property
    def params(self):
        return np.concatenate([
            self._A.ravel(), self._b, self._C.ravel(), self._d,
        ])

    def with_params(self, params):
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.param_dim,):
            raise ContractViolation(
                'Expected %d parameters, got shape %r.' % (
                    self.param_dim, params.shape,
                )
            )
        m, p = self.action_dim, self.state_dim
        cuts = np.cumsum([m * p, m, m * p])
        A, b, C, d = np.split(params, cuts)
        return GaussianPolicy(A.reshape(m, p), b, C.reshape(m, p), d)

    def _moments(self, S):
        mu = S @ self._A.T + self._b
        raw = S @ self._C.T + self._d
        active = raw > LOG_SIGMA_FLOOR
        log_sigma = np.maximum(raw, LOG_SIGMA_FLOOR)
        return mu, log_sigma, np.exp(log_sigma), active

    def mean(self, s):
        S, single = _rows(s, self.state_dim, 's')
        return _unbatch(self._moments(S)[0], single)

    def std(self, s):
        S, single = _rows(s, self.state_dim, 's')
        return _unbatch(self._moments(S)[2], single)

    def _log_prob_and_score(self, S, X):
        mu, log_sigma, sigma, active = self._moments(S)
        z = (X - mu) / sigma
        logp = np.sum(-HALF_LOG_2PI - log_sigma - 0.5 * z * z, axis=-1)
        score = _affine_gradient(
            z / sigma, (z * z - 1.0) * active,
            np.broadcast_to(S, (len(X), S.shape[1])),
        )
        return logp, score

    def _grad_action(self, S, X):
        mu, _, sigma, _ = self._moments(S)
        return -(X - mu) / sigma ** 2

    def _reparameterize(self, S, E):
        mu, _, sigma, _ = self._moments(S)
        return mu + E * sigma

    def _jacobian(self, S, E):
        _, _, sigma, active = self._moments(S)
        n, m = len(E), self.action_dim
        eye = np.broadcast_to(np.eye(m), (n, m, m))
        scale = (sigma * E * active)[:, :, None]
        return _affine_gradient(eye, eye * scale,
                                np.broadcast_to(S, (n, S.shape[1])))

    def _sample(self, S, rng, single):
        shape = (self.action_dim,) if single else (len(S), self.action_dim)
        E = np.atleast_2d(rng.standard_normal(shape))
        return self._reparameterize(S, E)

    def to_json(self):
        return {
            'kind': self.kind,
            'A': self._A.tolist(),
            'b': self._b.tolist(),
            'C': self._C.tolist(),
            'd': self._d.tolist(),
        }


class MixturePolicy(object):
    """Mixture of diagonal Gaussians with state-independent softmax weights."""

    kind = 'mixture'

    def __init__(self, components, logits):
        components = tuple(components)
        if not components:
            raise ContractViolation('A mixture needs at least one component.')
        for component in components:
            if not isinstance(component, GaussianPolicy):
                raise ContractViolation(
                    'Mixture components must be Gaussian policies.'
                )
            if (component.state_dim != components[0].state_dim or
                    component.action_dim != components[0].action_dim):
                raise ContractViolation(
                    'Mixture components disagree on dimensions.'
                )
        self._components = components
        self._logits = _frozen(logits, 1, 'logits')
        if self._logits.shape != (len(components),):
            raise ContractViolation(
                '%d logits for %d components.' % (
                    len(self._logits), len(components),
                )
            )
        self._weights = softmax(self._logits)
        self._weights.setflags(write=False)

    @property
    def components(self):
        return self._components

    @property
    def logits(self):
        return self._logits

    @property
    def weights(self):
        return self._weights

    @property
    def size(self):
        return len(self._components)

    @property
    def action_dim(self):
        return self._components[0].action_dim

    @property
    def state_dim(self):
        return self._components[0].state_dim

    @property
    def param_dim(self):
        return sum(c.param_dim for c in self._components) + self.size

    @property
    def params(self):
        return np.concatenate(
            [c.params for c in self._components] + [self._logits]
        )

    def with_params(self, params):
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.param_dim,):
            raise ContractViolation(
                'Expected %d parameters, got shape %r.' % (
                    self.param_dim, params.shape,
                )
            )
        components, offset = [], 0
        for component in self._components:
            block = params[offset:offset + component.param_dim]
            components.append(component.with_params(block))
            offset += component.param_dim
        return MixturePolicy(components, params[offset:])

    def _joint(self, S, X):
        """Per-component ``log w_k + log N_k`` and scores."""
        parts = [c._log_prob_and_score(S, X) for c in self._components]
        log_weights = self._logits - logsumexp(self._logits)
        joint = np.stack([p[0] for p in parts], axis=-1) + log_weights
        return joint, [p[1] for p in parts]

    def _posterior(self, S, X):
        """Log-density, responsibilities and per-component scores."""
        joint, scores = self._joint(S, X)
        logp = logsumexp(joint, axis=-1)
        return logp, np.exp(joint - logp[:, None]), scores

    def responsibilities(self, s, a):
        S, X, single = _align(self, s, a)
        return _unbatch(self._posterior(S, X)[1], single)

    def _log_prob_and_score(self, S, X):
        logp, r, scores = self._posterior(S, X)
        blocks = [r[:, k, None] * score for k, score in enumerate(scores)]
        blocks.append(r - self._weights)
        return logp, np.concatenate(blocks, axis=-1)

    def _grad_action(self, S, X):
        r = self._posterior(S, X)[1]
        grads = [c._grad_action(S, X) for c in self._components]
        return sum(r[:, k, None] * g for k, g in enumerate(grads))

    def _reparameterize(self, S, E):
        raise UnsupportedReparameterization('reparameterize')

    def _jacobian(self, S, E):
        raise UnsupportedReparameterization('grad_f_params')

    def _sample(self, S, rng, single):
        if single:
            k = np.atleast_1d(rng.choice(self.size, p=self._weights))
        else:
            k = rng.choice(self.size, size=len(S), p=self._weights)
        E = np.atleast_2d(rng.standard_normal(
            (len(k), self.action_dim)
        ))
        S = np.broadcast_to(S, (len(k), S.shape[1]))
        out = np.empty_like(E)
        for index, component in enumerate(self._components):
            chosen = k == index
            if np.any(chosen):
                out[chosen] = component._reparameterize(S[chosen], E[chosen])
        return out

    def to_json(self):
        return {
            'kind': self.kind,
            'components': [c.to_json() for c in self._components],
            'logits': self._logits.tolist(),
        }


def reparameterize(policy, s, eps):
    """``a = mu(s) + eps * sigma(s)``, componentwise."""
    S, E, single = _align(policy, s, eps, name='eps')
    if not np.all(np.isfinite(E)):
        raise ContractViolation('Noise has non-finite entries.')
    return _unbatch(policy._reparameterize(S, E), single)


def log_prob_and_score(policy, s, a):
    """Log-density and its parameter gradient (action held fixed)."""
    S, X, single = _align(policy, s, a)
    logp, score = policy._log_prob_and_score(S, X)
    return _unbatch(logp, single), _unbatch(score, single)


def log_prob(policy, s, a):
    return log_prob_and_score(policy, s, a)[0]


def grad_logprob_params(policy, s, a):
    """Partial derivative of ``log_prob`` in the parameters, ``a`` fixed."""
    return log_prob_and_score(policy, s, a)[1]


def grad_logprob_action(policy, s, a):
    S, X, single = _align(policy, s, a)
    return _unbatch(policy._grad_action(S, X), single)


def grad_f_params(policy, s, eps):
    """Jacobian of ``reparameterize`` in the parameters.

    Shape ``(action_dim, param_dim)``, or batched with a leading axis.
    """
    if isinstance(policy, MixturePolicy):
        raise UnsupportedReparameterization('grad_f_params')
    S, E, single = _align(policy, s, eps, name='eps')
    return _unbatch(policy._jacobian(S, E), single)


def sample(policy, s, rng):
    """Draw one action per state (single state in, single action out)."""
    S, single = _rows(s, policy.state_dim, 's')
    return _unbatch(policy._sample(S, rng, single), single)


def policy_from_json(doc):
    """Build a policy from its JSON document (row-major matrices)."""
    try:
        kind = doc['kind']
        if kind == 'gaussian':
            return GaussianPolicy(doc['A'], doc['b'], doc['C'], doc['d'])
        if kind == 'mixture':
            return MixturePolicy(
                [policy_from_json(dict(c, kind='gaussian'))
                 for c in doc['components']],
                doc['logits'],
            )
    except KeyError as error:
        raise ContractViolation('Policy document lacks %s.' % error)
    raise ContractViolation('Unknown policy kind %r.' % (kind,))


def policy_to_json(policy):
    return policy.to_json()


class StateBuffer(object):
    """Finite replay set of states, sampled uniformly with replacement."""

    def __init__(self, states):
        self._states = _frozen(states, 2, 'states')
        if len(self._states) == 0:
            raise ContractViolation('State buffer is empty.')

    @classmethod
    def unit(cls, state_dim=1):
        """Single all-zero state."""
        return cls(np.zeros((1, state_dim)))

    @property
    def states(self):
        return self._states

    @property
    def state_dim(self):
        return self._states.shape[1]

    def __len__(self):
        return len(self._states)

    def draw(self, rng, n):
        """Indices of ``n`` states drawn uniformly with replacement."""
        return rng.integers(0, len(self._states), size=n)

    def to_json(self):
        return {'states': self._states.tolist()}
