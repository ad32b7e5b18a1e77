# -*- coding: utf-8 -*-

"""Oracles and studies around the actor-loss gradient estimators.

- finite-difference oracles for every analytic derivative,
- the bimodal example: a unit-variance Gaussian fitted to an equal mixture of
  unit Gaussians at -2 and 2, under forward or reverse KL,
- the estimator variance study and its two-estimator comparison,
- the mixture-size sweep, and plain batch-gradient descent.

Replicas run on pre-split seed substreams and are reduced in job order, so
results never depend on the worker count.
"""

import asyncio
import concurrent.futures
import numpy as np
import structlog

from dataclasses import dataclass, field
from typing import Optional

from .errors import (
    ContractViolation,
    DivergenceError,
    UnsupportedReparameterization,
)
from .estimators import (
    ESTIMATORS,
    REPARAM,
    SCOREFN,
    exact_loss,
    grad_batch,
    loss_sampled,
    reparam_grad_single,
    reverse_kl,
    reverse_kl_gradient,
)
from .policies import (
    GaussianPolicy,
    MixturePolicy,
    StateBuffer,
    grad_f_params,
    grad_logprob_action,
    grad_logprob_params,
    log_prob,
    log_prob_and_score,
    reparameterize,
    sample,
)
from .quadrature import Grid, integrate
from .targets import (
    MixtureLogQ,
    QuadraticQ,
    canonical_bimodal_target,
    grad_q_action,
    q_eval,
)

DEFAULT_GRID = Grid(-12.0, 12.0, 4001)
FD_STEP = 1e-5
DIVERGENCE_BOUND = 1e3
AGREEMENT_BANDS = 4.0

# Seed substreams; one per consumer so no two share draws by accident.
NOISE_STREAMS = {REPARAM: 0, SCOREFN: 1}
STREAM_STATES = 2
STREAM_SWEEP = 3
STREAM_CHECK = 4
STREAM_OBJECTIVE = 5
STREAM_REPORT = 6

TOLERANCES = {
    'grad_logprob_params': 1e-6,
    'grad_logprob_action': 1e-6,
    'grad_f_params': 1e-6,
    'grad_q_action': 1e-6,
    'reparam_total_derivative': 1e-5,
}


@dataclass(frozen=True)
class EstimatorStats:
    mean: np.ndarray
    variance: np.ndarray
    cov_trace: float
    stderr: np.ndarray
    replicas: int
    estimates: tuple = field(default=(), repr=False, compare=False)

    @classmethod
    def from_estimates(cls, estimates):
        samples = np.stack([e.g for e in estimates])
        if len(samples) < 2:
            raise ContractViolation('Statistics need at least 2 replicas.')
        variance = np.var(samples, axis=0, ddof=1)
        return cls(
            mean=np.mean(samples, axis=0),
            variance=variance,
            cov_trace=float(np.sum(variance)),
            stderr=np.sqrt(variance / len(samples)),
            replicas=len(samples),
            estimates=tuple(estimates),
        )

    def to_json(self):
        return {
            'mean': self.mean.tolist(),
            'variance': self.variance.tolist(),
            'cov_trace': self.cov_trace,
            'stderr': self.stderr.tolist(),
            'replicas': self.replicas,
        }


@dataclass(frozen=True)
class OptimTrace:
    """Iterates ``(step, params, objective)``, starting at step 0."""

    iterates: list
    config: dict

    @property
    def final_params(self):
        return self.iterates[-1][1]

    @property
    def final_objective(self):
        return self.iterates[-1][2]


@dataclass(frozen=True)
class SweepBudget:
    lr: float = 0.01
    steps: int = 20000
    batch: int = 64


@dataclass(frozen=True)
class SweepEntry:
    K: int
    status: str
    reverse_kl: float
    policy: Optional[MixturePolicy] = field(default=None, repr=False)


def replica_seeds(seed, count, stream=0):
    """``count`` independent 64-bit seeds derived from ``(seed, stream)``."""
    parent = np.random.SeedSequence(seed, spawn_key=(stream,))
    return [int(child.generate_state(1, np.uint64)[0])
            for child in parent.spawn(count)]


async def gather_replicas(func, jobs, workers, loop=None):
    loop = loop or asyncio.get_event_loop()
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        return await asyncio.gather(*[
            loop.run_in_executor(pool, func, job) for job in jobs
        ])


def fan_out(func, jobs, workers=1):
    """``[func(job) for job in jobs]``, optionally on a pool of workers."""
    jobs = list(jobs)
    if workers <= 1:
        return [func(job) for job in jobs]
    loop = asyncio.new_event_loop()
    try:
        return list(loop.run_until_complete(
            gather_replicas(func, jobs, workers, loop=loop)
        ))
    finally:
        loop.close()


def relative_error(actual, expected):
    """Largest absolute deviation, relative to the expected scale (>= 1)."""
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    scale = max(1.0, float(np.max(np.abs(expected))))
    return float(np.max(np.abs(actual - expected))) / scale


def finite_difference(func, x, step=FD_STEP):
    """Central differences of ``func`` at ``x``; last axis indexes ``x``."""
    if not step > 0.0:
        raise ContractViolation('Step must be positive, got %r.' % (step,))
    x = np.asarray(x, dtype=np.float64)
    columns = []
    for i in range(len(x)):
        delta = np.zeros_like(x)
        delta[i] = step
        columns.append(
            (np.asarray(func(x + delta)) - np.asarray(func(x - delta))) /
            (2.0 * step)
        )
    return np.stack(columns, axis=-1)


def buffer_loss(policy, q, buffer, grid=DEFAULT_GRID):
    """Mean over the buffer of the quadrature actor loss."""
    return float(np.mean([
        exact_loss(policy, q, s, grid) for s in buffer.states
    ]))


def fd_loss_gradient(policy, q, buffer, step=FD_STEP, grid=DEFAULT_GRID):
    """Finite-difference oracle for the loss gradient (1-D actions)."""
    return finite_difference(
        lambda params: buffer_loss(policy.with_params(params), q, buffer,
                                   grid),
        policy.params, step,
    )


def _origin(policy, s):
    if s is None:
        return np.zeros(policy.state_dim)
    return np.asarray(s, dtype=np.float64)


def _require_scalar_action(*things):
    for thing in things:
        if thing.action_dim != 1:
            raise ContractViolation('Quadrature needs a 1-D action space.')


def kl_forward(h, policy, grid=None, s=None):
    """``KL(h || pi(.|s))`` by quadrature, with ``h = exp(Q)`` normalized."""
    _require_scalar_action(h, policy)
    if grid is None:
        grid = covering_grid(h)
    s = _origin(policy, s)

    def integrand(points):
        X = points[:, None]
        log_h = q_eval(h, s, X)
        return np.exp(log_h) * (log_h - log_prob(policy, s, X))

    return integrate(integrand, grid)


def kl_forward_gradient(h, policy, grid=None, s=None):
    """Parameter gradient of ``kl_forward``: ``-E_h[grad log pi]``."""
    _require_scalar_action(h, policy)
    if grid is None:
        grid = covering_grid(h)
    s = _origin(policy, s)

    def integrand(points):
        X = points[:, None]
        _, score = log_prob_and_score(policy, s, X)
        return -(np.exp(q_eval(h, s, X))[:, None] * score).T

    return integrate(integrand, grid)


def covering_grid(h, nodes=4001):
    """Grid reaching ten of the widest component's deviations past the
    outermost centers of a 1-D log-mixture target."""
    return Grid.covering(h.centers, float(np.max(h.stds)), nodes)


def _check_iterate(params, step, iterates, config):
    if (not np.all(np.isfinite(params)) or
            np.max(np.abs(params)) > DIVERGENCE_BOUND):
        raise DivergenceError(
            'Iterate left [-%g, %g] at step %d.' % (
                DIVERGENCE_BOUND, DIVERGENCE_BOUND, step,
            ),
            OptimTrace(iterates=iterates, config=config),
        )


def kl_example(lr=0.5, iters=50, phi0=3.0, direction='forward',
               grid=None, event_log=None):
    """Gradient descent of a unit-variance Gaussian's mean against the
    canonical bimodal target.

    ``direction='forward'`` minimizes ``KL(h || pi)`` (gradient is exactly
    ``phi`` here, minimum at 0); ``'reverse'`` minimizes the actor-loss
    direction ``KL(pi || h)``, which settles on one of the modes.
    """
    event_log = event_log or structlog.get_logger()
    if direction not in ('forward', 'reverse'):
        raise ContractViolation('Unknown KL direction %r.' % (direction,))
    h = canonical_bimodal_target()
    if grid is None:
        grid = covering_grid(h)
    s = np.zeros(1)
    config = {'lr': lr, 'iters': iters, 'phi0': phi0,
              'direction': direction}

    def policy_at(phi):
        return GaussianPolicy.constant(phi, 0.0)

    if direction == 'forward':
        def objective(policy):
            return kl_forward(h, policy, grid, s)

        def gradient(policy):
            return kl_forward_gradient(h, policy, grid, s)
    else:
        def objective(policy):
            return reverse_kl(policy, h, s, grid)

        def gradient(policy):
            return reverse_kl_gradient(policy, h, s, grid)

    phi = float(phi0)
    policy = policy_at(phi)
    iterates = [(0, np.array([phi]), objective(policy))]
    for step in range(1, iters + 1):
        # Only the mean bias (flat index 1) is free.
        phi = phi - lr * gradient(policy)[1]
        _check_iterate(np.array([phi]), step, iterates, config)
        policy = policy_at(phi)
        iterates.append((step, np.array([phi]), objective(policy)))
        event_log.info('kl_example.step', step=step, phi=phi,
                       objective=iterates[-1][2], direction=direction)
    return OptimTrace(iterates=iterates, config=config)


def variance_study(kind, policy, q, buffer, n, M, seed, workers=1,
                   common_states=False, event_log=None):
    """``M`` independent ``n``-sample batch estimates and their statistics.

    With ``common_states`` the state draws come from a stream shared by both
    estimator kinds (common random numbers).
    """
    event_log = event_log or structlog.get_logger()
    if kind not in ESTIMATORS:
        raise ContractViolation('Unknown estimator %r.' % (kind,))
    if kind == REPARAM and not isinstance(policy, GaussianPolicy):
        raise UnsupportedReparameterization('variance_study(reparam)')
    if M < 2:
        raise ContractViolation('Need at least 2 replicas, got %r.' % (M,))
    noise = replica_seeds(seed, M, stream=NOISE_STREAMS[kind])
    states = replica_seeds(seed, M, stream=STREAM_STATES) \
        if common_states else [None] * M

    def replica(job):
        noise_seed, states_seed = job
        states_rng = None
        if states_seed is not None:
            states_rng = np.random.default_rng(states_seed)
        return grad_batch(kind, policy, q, buffer, n,
                          np.random.default_rng(noise_seed),
                          states_rng=states_rng, seed=noise_seed)

    stats = EstimatorStats.from_estimates(
        fan_out(replica, zip(noise, states), workers)
    )
    event_log.info('variance.study', estimator=kind, n=n, replicas=M,
                   cov_trace=stats.cov_trace)
    return stats


def agree(left, right, bands=AGREEMENT_BANDS):
    """Means agree coordinate-wise within combined standard-error bands."""
    spread = bands * np.sqrt(left.stderr ** 2 + right.stderr ** 2)
    return bool(np.all(np.abs(left.mean - right.mean) <= spread))


def variance_ratio(numerator, denominator):
    """Per-coordinate variance ratio; NaN where the denominator vanishes."""
    ratio = np.full_like(numerator.variance, np.nan)
    np.divide(numerator.variance, denominator.variance, out=ratio,
              where=denominator.variance > 0.0)
    return ratio


def compare_estimators(policy, q, buffer, n, M, seed, workers=1,
                       common_states=False, event_log=None):
    """Both variance studies on one configuration."""
    event_log = event_log or structlog.get_logger()
    studies = {
        kind: variance_study(kind, policy, q, buffer, n, M, seed,
                             workers=workers, common_states=common_states,
                             event_log=event_log)
        for kind in ESTIMATORS
    }
    passed = agree(studies[REPARAM], studies[SCOREFN])
    event_log.info('variance.compare', agree=passed)
    return {
        'studies': studies,
        'variance_ratio': variance_ratio(studies[SCOREFN], studies[REPARAM]),
        'agree': passed,
    }


def initial_mixture(K, rng, state_dim=1, spread=3.0, jitter=0.1):
    """Means evenly spaced on ``[-spread, spread]`` plus seeded jitter,
    unit standard deviations, uniform weights."""
    if K < 1:
        raise ContractViolation('Mixture size must be >= 1, got %r.' % (K,))
    means = -spread + 2.0 * spread * (np.arange(K) + 0.5) / K
    means = means + jitter * rng.standard_normal(K)
    return MixturePolicy(
        [GaussianPolicy.constant(mean, 0.0, state_dim) for mean in means],
        np.zeros(K),
    )


def fit_mixture(K, target, budget, rng, buffer):
    """Score-function SGD from ``initial_mixture``.

    No objective is tracked while fitting, so a divergence trace carries only
    the last finite iterate with objective ``None``.
    """
    policy = initial_mixture(K, rng, buffer.state_dim)
    params = policy.params
    last = (0, params, None)
    config = {'K': K, 'lr': budget.lr, 'steps': budget.steps,
              'batch': budget.batch}
    for step in range(1, budget.steps + 1):
        g = grad_batch(SCOREFN, policy, target, buffer, budget.batch, rng).g
        params = params - budget.lr * g
        _check_iterate(params, step, [last], config)
        last = (step, params, None)
        policy = policy.with_params(params)
    return policy


def mixture_sweep(K_list, target, budget=SweepBudget(), seed=42,
                  grid=None, buffer=None, workers=1, event_log=None):
    """Fit a K-component mixture per entry by score-function SGD and report
    the attained reverse KL; divergent entries are recorded, not raised."""
    event_log = event_log or structlog.get_logger()
    K_list = [int(K) for K in K_list]
    if not K_list or min(K_list) < 1:
        raise ContractViolation('K_list must hold counts >= 1.')
    if not isinstance(target, MixtureLogQ) or target.action_dim != 1:
        raise ContractViolation('The sweep needs a 1-D log-mixture target.')
    if grid is None:
        grid = covering_grid(target)
    buffer = buffer or StateBuffer.unit()
    seeds = replica_seeds(seed, len(K_list), stream=STREAM_SWEEP)

    def entry(job):
        K, entry_seed = job
        rng = np.random.default_rng(entry_seed)
        try:
            policy = fit_mixture(K, target, budget, rng, buffer)
        except DivergenceError as error:
            event_log.info('sweep.divergence', K=K, reason=str(error))
            return SweepEntry(K=K, status='diverged', reverse_kl=np.nan)
        kl = float(np.mean([
            reverse_kl(policy, target, s, grid) for s in buffer.states
        ]))
        event_log.info('sweep.entry', K=K, reverse_kl=kl)
        return SweepEntry(K=K, status='ok', reverse_kl=kl, policy=policy)

    return fan_out(entry, zip(K_list, seeds), workers)


def default_estimator(policy):
    return REPARAM if isinstance(policy, GaussianPolicy) else SCOREFN


def optimize(policy, q, buffer, kind=None, lr=0.01, iters=100, n=64,
             seed=42, grid=DEFAULT_GRID, event_log=None):
    """Plain batch-gradient descent on the actor loss.

    The objective is the quadrature loss for 1-D actions, else a sampled
    estimate on its own seed stream.
    """
    event_log = event_log or structlog.get_logger()
    kind = kind or default_estimator(policy)
    rng = np.random.default_rng(
        replica_seeds(seed, 1, stream=NOISE_STREAMS[kind])[0]
    )
    objective_rng = np.random.default_rng(
        replica_seeds(seed, 1, stream=STREAM_OBJECTIVE)[0]
    )

    def objective(policy):
        if policy.action_dim == 1:
            return buffer_loss(policy, q, buffer, grid)
        return loss_sampled(policy, q, buffer, n, objective_rng).value

    config = {'estimator': kind, 'lr': lr, 'iters': iters, 'n': n,
              'seed': seed}
    params = policy.params
    iterates = [(0, params, objective(policy))]
    for step in range(1, iters + 1):
        g = grad_batch(kind, policy, q, buffer, n, rng).g
        params = params - lr * g
        _check_iterate(params, step, iterates, config)
        policy = policy.with_params(params)
        iterates.append((step, params, objective(policy)))
        event_log.info('optimize.step', step=step,
                       objective=iterates[-1][2])
    return OptimTrace(iterates=iterates, config=config)


def report_estimates(policy, q, buffer, kind, n, seed):
    """Fresh ``n``-sample gradient and sampled-loss estimates at ``policy``,
    drawn on their own seed stream."""
    report_seed = replica_seeds(seed, 1, stream=STREAM_REPORT)[0]
    rng = np.random.default_rng(report_seed)
    gradient = grad_batch(kind, policy, q, buffer, n, rng, seed=report_seed)
    return gradient, loss_sampled(policy, q, buffer, n, rng)


def random_gaussian_policy(rng, state_dim=1, action_dim=1, scale=0.5):
    def draw(*shape):
        return scale * rng.standard_normal(shape)
    return GaussianPolicy(draw(action_dim, state_dim), draw(action_dim),
                          draw(action_dim, state_dim), draw(action_dim))


def random_mixture_policy(rng, K=2, state_dim=1, action_dim=1):
    components = [random_gaussian_policy(rng, state_dim, action_dim)
                  for _ in range(K)]
    return MixturePolicy(components, rng.standard_normal(K))


def random_quadratic_target(rng, state_dim=1, action_dim=1):
    return QuadraticQ(0.5 * rng.standard_normal((action_dim, state_dim)),
                      rng.standard_normal(action_dim),
                      rng.uniform(0.5, 2.0))


def random_mixture_target(rng, K=2, action_dim=1):
    return MixtureLogQ(2.0 * rng.standard_normal((K, action_dim)),
                       rng.uniform(0.5, 1.5, size=K),
                       rng.dirichlet(np.ones(K)))


class _WorstErrors(dict):

    def record(self, operation, actual, expected):
        self[operation] = max(self.get(operation, 0.0),
                              relative_error(actual, expected))


def _check_point(errors, policy, q, s, a, eps, step):
    """Analytic-versus-finite-difference comparisons at one point."""
    params = policy.params
    errors.record(
        'grad_logprob_params',
        grad_logprob_params(policy, s, a),
        finite_difference(
            lambda p: log_prob(policy.with_params(p), s, a), params, step,
        ),
    )
    errors.record(
        'grad_logprob_action',
        grad_logprob_action(policy, s, a),
        finite_difference(lambda x: log_prob(policy, s, x), a, step),
    )
    errors.record(
        'grad_q_action',
        grad_q_action(q, s, a),
        finite_difference(lambda x: q_eval(q, s, x), a, step),
    )
    if not isinstance(policy, GaussianPolicy):
        return
    errors.record(
        'grad_f_params',
        grad_f_params(policy, s, eps),
        finite_difference(
            lambda p: reparameterize(policy.with_params(p), s, eps),
            params, step,
        ),
    )

    def integrand(p):
        moved = policy.with_params(p)
        action = reparameterize(moved, s, eps)
        return log_prob(moved, s, action) - q_eval(q, s, action)

    errors.record(
        'reparam_total_derivative',
        reparam_grad_single(policy, q, s, eps).g,
        finite_difference(integrand, params, step),
    )


def gradient_check_suite(instances=100, seed=42, step=FD_STEP, policy=None,
                         q=None, buffer=None, event_log=None):
    """Worst relative error per analytic derivative.

    Covers ``instances`` seeded random 1-D configurations (Gaussian and
    two-component mixture policies, quadratic and log-mixture targets) and,
    when given, the configured policy/target at every buffer state.
    """
    event_log = event_log or structlog.get_logger()
    errors = _WorstErrors()
    for index, instance_seed in enumerate(
            replica_seeds(seed, instances, stream=STREAM_CHECK)):
        rng = np.random.default_rng(instance_seed)
        if index % 2:
            target = random_mixture_target(rng)
        else:
            target = random_quadratic_target(rng)
        for candidate in (random_gaussian_policy(rng),
                          random_mixture_policy(rng)):
            s = rng.standard_normal(1)
            a = sample(candidate, s, rng)
            eps = rng.standard_normal(1)
            _check_point(errors, candidate, target, s, a, eps, step)
    if policy is not None:
        rng = np.random.default_rng(
            replica_seeds(seed, 1, stream=STREAM_OBJECTIVE)[0]
        )
        for s in buffer.states:
            a = sample(policy, s, rng)
            eps = rng.standard_normal(policy.action_dim)
            _check_point(errors, policy, q, s, a, eps, step)
    for operation, worst in sorted(errors.items()):
        event_log.info('check_grad.operation', operation=operation,
                       worst_relative_error=worst,
                       tolerance=TOLERANCES[operation])
    return dict(errors)
