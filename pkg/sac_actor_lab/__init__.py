# -*- coding: utf-8 -*-

import argparse
import csv
import hashlib
import importlib.resources
import json
import math
import numpy as np
import os
import os.path
import structlog
import sys

from voluptuous import (
    All,
    Any,
    Coerce,
    In,
    Length,
    MultipleInvalid,
    Optional,
    Range,
    Required,
    Schema,
)

from .errors import (
    ContractViolation,
    DivergenceError,
    UnsupportedReparameterization,
)
from .estimators import ESTIMATORS, REPARAM, SCOREFN
from .events import configure_logging, resolve_endpoint
from .experiments import (
    TOLERANCES,
    SweepBudget,
    compare_estimators,
    default_estimator,
    gradient_check_suite,
    kl_example,
    mixture_sweep,
    optimize,
    report_estimates,
)
from .policies import StateBuffer, policy_from_json
from .quadrature import Grid
from .targets import (
    MixtureLogQ,
    QuadraticQ,
    canonical_bimodal_target,
    target_from_json,
)

version = importlib.resources.files('sac_actor_lab') \
    .joinpath('version.txt').read_text(encoding='utf-8').strip()
"""Package version (as a dotted string)."""

KL_EXAMPLE_TOLERANCE = 0.02


class ConfigError(ValueError):
    """Configuration file or flags are unusable."""


Real = Coerce(float)
Positive = All(Coerce(float), Range(min=0.0, min_included=False))
Count = All(int, Range(min=1))
Vector = All([Real], Length(min=1))
Matrix = All([Vector], Length(min=1))

GaussianDoc = Schema({
    Optional('kind'): 'gaussian',
    Required('A'): Matrix,
    Required('b'): Vector,
    Required('C'): Matrix,
    Required('d'): Vector,
})

PolicyDoc = Any(
    GaussianDoc.extend({Required('kind'): 'gaussian'}),
    Schema({
        Required('kind'): 'mixture',
        Required('components'): All([GaussianDoc], Length(min=1)),
        Required('logits'): Vector,
    }),
)

TargetDoc = Any(
    Schema({
        Required('kind'): 'quadratic',
        Required('M'): Matrix,
        Required('c'): Vector,
        Optional('scale', default=1.0): Positive,
    }),
    Schema({
        Required('kind'): 'log_mixture',
        Required('centers'): Any(Vector, Matrix),
        Required('stds'): All([Positive], Length(min=1)),
        Required('weights'): All([Positive], Length(min=1)),
    }),
)

BufferDoc = Any('unit', Schema({
    Required('states'): Matrix,
}))

GridDoc = Schema({
    Optional('lower', default=-12.0): Real,
    Optional('upper', default=12.0): Real,
    Optional('nodes', default=4001): All(int, Range(min=3)),
})

ExperimentDoc = Schema({
    Optional('n', default=10): Count,
    Optional('M', default=1000): All(int, Range(min=2)),
    Optional('lr', default=0.5): Positive,
    Optional('iters', default=50): All(int, Range(min=0)),
    Optional('phi0', default=3.0): Real,
    Optional('direction', default='forward'): In(['forward', 'reverse']),
    Optional('K_list', default=lambda: [1, 2, 3]): All([Count],
                                                       Length(min=1)),
    Optional('steps', default=20000): Count,
    Optional('batch', default=64): Count,
    Optional('sweep_lr', default=0.01): Positive,
    Optional('estimator', default=None): Any(None, In(ESTIMATORS)),
    Optional('common_states', default=False): bool,
    Optional('workers', default=1): Count,
    Optional('instances', default=100): All(int, Range(min=0)),
    Optional('step', default=1e-5): Positive,
    Optional('grid', default=dict): GridDoc,
})


def default_policy():
    """1-D state, 1-D action Gaussian with every parameter at 0."""
    return {'kind': 'gaussian', 'A': [[0.0]], 'b': [0.0],
            'C': [[0.0]], 'd': [0.0]}


RunConfig = Schema({
    Optional('seed', default=42): All(int, Range(min=0, max=2 ** 64 - 1)),
    Optional('policy', default=default_policy): PolicyDoc,
    Optional('target',
             default=lambda: canonical_bimodal_target().to_json()): TargetDoc,
    Optional('buffer', default='unit'): BufferDoc,
    Optional('experiment', default=dict): ExperimentDoc,
    Optional('out', default='.'): str,
})


def load_config(path=None, seed=None, out=None):
    """Resolve the run configuration: flags > file > defaults."""
    document = {}
    if path is not None:
        try:
            with open(path, 'r', encoding='utf-8') as stream:
                document = json.load(stream)
        except (OSError, ValueError) as error:
            raise ConfigError('Cannot read config "%s": %s' % (path, error))
        if not isinstance(document, dict):
            raise ConfigError('Config "%s" is not a JSON object.' % path)
    if seed is not None:
        document['seed'] = seed
    if out is not None:
        document['out'] = out
    try:
        return RunConfig(document)
    except MultipleInvalid as error:
        raise ConfigError('Invalid config: %s' % error)


class Setup(object):
    """Validated domain objects built from a resolved configuration."""

    def __init__(self, config):
        try:
            self.policy = policy_from_json(config['policy'])
            self.target = target_from_json(config['target'])
            self.grid = Grid(**config['experiment']['grid'])
            if config['buffer'] == 'unit':
                self.buffer = StateBuffer.unit(self.policy.state_dim)
            else:
                self.buffer = StateBuffer(config['buffer']['states'])
        except ContractViolation as error:
            raise ConfigError('Invalid config: %s' % error)
        if self.buffer.state_dim != self.policy.state_dim:
            raise ConfigError(
                'Buffer states have dimension %d, policy expects %d.' % (
                    self.buffer.state_dim, self.policy.state_dim,
                )
            )
        if self.target.action_dim != self.policy.action_dim:
            raise ConfigError(
                'Target acts on %d-D actions, policy on %d-D.' % (
                    self.target.action_dim, self.policy.action_dim,
                )
            )
        if (isinstance(self.target, QuadraticQ) and
                self.target.state_dim != self.policy.state_dim):
            raise ConfigError(
                'Target expects %d-D states, policy %d-D.' % (
                    self.target.state_dim, self.policy.state_dim,
                )
            )


def recorded(config):
    """The configuration as written to outputs; the output folder is left
    out so a run reproduces byte for byte anywhere."""
    return {k: v for k, v in config.items() if k != 'out'}


def _canonical(config):
    return json.dumps(recorded(config), sort_keys=True, separators=(',', ':'))


def run_id(config):
    """Content hash of the resolved configuration."""
    return hashlib.sha1(_canonical(config).encode('utf-8')).hexdigest()


def _finite(value):
    """JSON-safe number: NaN and infinities become ``None``."""
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_finite(v) for v in value]
    value = float(value)
    return value if math.isfinite(value) else None


def _output_path(config, command, extension):
    folder = config['out']
    if not os.path.isdir(folder):
        os.makedirs(folder)
    return os.path.join(folder, '%s.%s' % (command, extension))


def write_csv(config, command, header, rows):
    """CSV with a leading ``# run_id=... seed=... config=...`` line."""
    path = _output_path(config, command, 'csv')
    with open(path, 'w', encoding='utf-8', newline='') as stream:
        stream.write('# run_id=%s seed=%d config=%s\n' % (
            run_id(config), config['seed'], _canonical(config),
        ))
        writer = csv.writer(stream, lineterminator='\n')
        writer.writerow(header)
        writer.writerows(rows)
    return path


def write_summary(config, command, results):
    path = _output_path(config, command, 'json')
    with open(path, 'w', encoding='utf-8', newline='\n') as stream:
        json.dump({
            'config': recorded(config),
            'run_id': run_id(config),
            'seed': config['seed'],
            'results': results,
        }, stream, sort_keys=True, indent=2, allow_nan=False)
        stream.write('\n')
    return path


def _trace_rows(trace):
    for step, params, objective in trace.iterates:
        yield [step, objective] + [float(p) for p in params]


def _write_trace(config, command, trace, size):
    header = ['step', 'objective'] + ['p%d' % i for i in range(size)]
    return write_csv(config, command, header, _trace_rows(trace))


def cmd_check_grad(config, event_log=None):
    """Analytic derivatives against central finite differences."""
    event_log = event_log or structlog.get_logger()
    setup = Setup(config)
    experiment = config['experiment']
    errors = gradient_check_suite(
        instances=experiment['instances'],
        seed=config['seed'],
        step=experiment['step'],
        policy=setup.policy,
        q=setup.target,
        buffer=setup.buffer,
        event_log=event_log,
    )
    rows, breaches = [], 0
    for operation, worst in sorted(errors.items()):
        passed = worst < TOLERANCES[operation]
        breaches += not passed
        rows.append([operation, worst, TOLERANCES[operation],
                     'PASS' if passed else 'FAIL'])
        print('%-26s %.3e < %.0e %s' % tuple(rows[-1]))
    write_csv(config, 'check-grad',
              ['operation', 'worst_relative_error', 'tolerance', 'status'],
              rows)
    write_summary(config, 'check-grad', {
        'worst_relative_error': {k: _finite(v) for k, v in errors.items()},
        'status': 'FAIL' if breaches else 'PASS',
    })
    return 1 if breaches else 0


def cmd_kl_example(config, event_log=None):
    """Gradient descent of ``N(phi, 1)`` against the bimodal target.

    Forward KL passes when the final ``|phi|`` is below 0.02; reverse KL
    passes when it does not diverge.
    """
    event_log = event_log or structlog.get_logger()
    Setup(config)
    experiment = config['experiment']
    direction = experiment['direction']
    try:
        trace = kl_example(
            lr=experiment['lr'],
            iters=experiment['iters'],
            phi0=experiment['phi0'],
            direction=direction,
            grid=Grid(**experiment['grid']),
            event_log=event_log,
        )
        status = 'converged'
    except DivergenceError as error:
        trace, status = error.trace, 'diverged'
        event_log.info('kl_example.divergence', reason=str(error))
    phi = float(trace.final_params[0])
    if status == 'converged' and direction == 'forward':
        if abs(phi) >= KL_EXAMPLE_TOLERANCE:
            status = 'not converged'
    write_csv(config, 'kl-example', ['step', 'phi', 'objective'], [
        [step, float(params[0]), objective]
        for step, params, objective in trace.iterates
    ])
    write_summary(config, 'kl-example', {
        'direction': direction,
        'final_phi': phi,
        'final_objective': _finite(trace.final_objective),
        'status': status,
    })
    return 0 if status == 'converged' else 1


def cmd_variance(config, event_log=None):
    """Variance study of both estimators on the configured problem."""
    event_log = event_log or structlog.get_logger()
    setup = Setup(config)
    experiment = config['experiment']
    comparison = compare_estimators(
        setup.policy, setup.target, setup.buffer,
        n=experiment['n'],
        M=experiment['M'],
        seed=config['seed'],
        workers=experiment['workers'],
        common_states=experiment['common_states'],
        event_log=event_log,
    )
    studies = comparison['studies']
    size = setup.policy.param_dim
    rows = [
        [estimate.seed, kind, estimate.n_samples] + estimate.g.tolist()
        for kind in ESTIMATORS
        for estimate in studies[kind].estimates
    ]
    write_csv(config, 'variance',
              ['seed', 'estimator', 'n'] + ['g%d' % i for i in range(size)],
              rows)
    agreement = 'PASS' if comparison['agree'] else 'FAIL'
    write_summary(config, 'variance', {
        REPARAM: studies[REPARAM].to_json(),
        SCOREFN: studies[SCOREFN].to_json(),
        'variance_ratio': _finite(comparison['variance_ratio']),
        'agreement': agreement,
    })
    return 0 if comparison['agree'] else 1


def cmd_mixture_sweep(config, event_log=None):
    """Reverse KL attained by K-component mixtures, per K."""
    event_log = event_log or structlog.get_logger()
    setup = Setup(config)
    if not isinstance(setup.target, MixtureLogQ):
        raise ConfigError('mixture-sweep needs a log_mixture target.')
    experiment = config['experiment']
    entries = mixture_sweep(
        experiment['K_list'], setup.target,
        budget=SweepBudget(lr=experiment['sweep_lr'],
                           steps=experiment['steps'],
                           batch=experiment['batch']),
        seed=config['seed'],
        grid=setup.grid,
        buffer=setup.buffer,
        workers=experiment['workers'],
        event_log=event_log,
    )
    write_csv(config, 'mixture-sweep', ['K', 'status', 'reverse_kl'], [
        [entry.K, entry.status, entry.reverse_kl] for entry in entries
    ])
    write_summary(config, 'mixture-sweep', {
        'entries': [
            {'K': e.K, 'status': e.status, 'reverse_kl': _finite(e.reverse_kl)}
            for e in entries
        ],
    })
    return 0 if any(e.status == 'ok' for e in entries) else 1


def cmd_optimize(config, event_log=None):
    """Batch-gradient descent on the actor loss."""
    event_log = event_log or structlog.get_logger()
    setup = Setup(config)
    experiment = config['experiment']
    kind = experiment['estimator'] or default_estimator(setup.policy)
    try:
        trace = optimize(
            setup.policy, setup.target, setup.buffer,
            kind=kind,
            lr=experiment['lr'],
            iters=experiment['iters'],
            n=experiment['n'],
            seed=config['seed'],
            grid=setup.grid,
            event_log=event_log,
        )
        status = 'ok'
    except DivergenceError as error:
        trace, status = error.trace, 'diverged'
        event_log.info('optimize.divergence', reason=str(error))
    _write_trace(config, 'optimize', trace, setup.policy.param_dim)
    results = {
        'estimator': kind,
        'final_objective': _finite(trace.final_objective),
        'final_params': _finite(trace.final_params),
        'status': status,
    }
    if status == 'ok':
        gradient, loss = report_estimates(
            setup.policy.with_params(trace.final_params),
            setup.target, setup.buffer, kind,
            n=experiment['n'],
            seed=config['seed'],
        )
        results['final_gradient'] = gradient.to_json()
        results['final_loss'] = loss.to_json()
    write_summary(config, 'optimize', results)
    return 0 if status == 'ok' else 1


COMMANDS = {
    'check-grad': cmd_check_grad,
    'kl-example': cmd_kl_example,
    'variance': cmd_variance,
    'mixture-sweep': cmd_mixture_sweep,
    'optimize': cmd_optimize,
}

options = argparse.ArgumentParser(add_help=False)
options.add_argument('--config', action='store', dest='config',
                     default=None, help="JSON run configuration.")
options.add_argument('--seed', action='store', dest='seed',
                     type=int, default=None)
options.add_argument('--out', action='store', dest='out',
                     type=str, default=None,
                     help="Folder receiving the CSV and JSON outputs.")

cli = argparse.ArgumentParser(
    prog='sac-actor-lab',
    description="Study the soft actor-critic actor loss and its gradients.",
)
cli.add_argument('--version', action='version', version=version,
                 help="Print version and exit.")
cli.add_argument('--log-format', action='store', dest='log_format',
                 type=str, choices={'kv', 'json'}, default='kv')
cli.add_argument('--utc', action='store_true', dest='utc_timestamps',
                 default=False)
cli.add_argument('--logging-endpoint', action='store', dest='logging_endpoint',
                 default=None)
commands = cli.add_subparsers(dest='command', metavar='command')
commands.required = True
for name, command in COMMANDS.items():
    commands.add_parser(name, parents=[options],
                        help=command.__doc__.splitlines()[0])


def main(arguments=None):
    """Command-line entry point.

    :param arguments: List of strings that contain the command-line arguments.
       When ``None``, the command-line arguments are looked up in ``sys.argv``
       (``sys.argv[0]`` is ignored).
    :return: Exit status: 0 on success, 1 when the experiment fails, 2 when
       the configuration is unusable.
    :raise SystemExit: The command-line arguments are invalid.
    """

    # Parse command-line arguments.
    if arguments is None:
        arguments = sys.argv[1:]
    arguments = cli.parse_args(arguments)

    # Initialize logger.
    configure_logging(
        log_format=arguments.log_format,
        utc=arguments.utc_timestamps,
        endpoint=resolve_endpoint(arguments.logging_endpoint),
    )
    event_log = structlog.get_logger()

    # Resolve configuration, then run.
    try:
        config = load_config(arguments.config,
                             seed=arguments.seed, out=arguments.out)
        event_log.info('run.start', command=arguments.command,
                       run_id=run_id(config), seed=config['seed'])
        status = COMMANDS[arguments.command](config, event_log=event_log)
    except (ConfigError, ContractViolation) as error:
        sys.stderr.write(cli.format_usage())
        sys.stderr.write('%s: error: %s\n' % (cli.prog, error))
        return 2
    except UnsupportedReparameterization as error:
        sys.stderr.write('%s: error: %s\n' % (cli.prog, error))
        event_log.info('run.failed', reason=str(error))
        return 1
    event_log.info('run.done', command=arguments.command, status=status)
    return status


if __name__ == '__main__':  # pragma: no cover
    sys.exit(main(sys.argv[1:]))
