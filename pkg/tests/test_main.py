# -*- coding: utf-8 -*-

import csv
import json
import os
import pytest
import structlog
import testfixtures

from contextlib import contextmanager
from datetime import datetime
from freezegun import freeze_time
from itertools import chain
from sac_actor_lab import (
    main,
    run_id,
    version,
)
from sac_actor_lab.events import (
    FluentLoggerFactory,
    configure_logging,
)
from unittest import mock


@contextmanager
def setenv(env):
    old_env = os.environ
    new_env = dict(chain(os.environ.items(), env.items()))
    os.environ = new_env
    try:
        yield
    finally:
        os.environ = old_env


def test_configure_logging_stdout(capsys):
    with freeze_time("2016-05-08 21:19:00"):
        configure_logging(
            log_format='kv',
            utc=False,
            endpoint='file:///dev/stdout',
        )
        log = structlog.get_logger()
        log.info('teh.event', a=1)
    out, err = capsys.readouterr()
    assert err == ""
    assert out == "@timestamp='2016-05-08T21:19:00' event='teh.event' a=1\n"


def test_configure_logging_stderr(capsys):
    with freeze_time("2016-05-08 21:19:00"):
        configure_logging(
            log_format='kv',
            utc=False,
            endpoint='file:///dev/stderr',
        )
        log = structlog.get_logger()
        log.info('teh.event', a=1)
    out, err = capsys.readouterr()
    assert out == ""
    assert err == "@timestamp='2016-05-08T21:19:00' event='teh.event' a=1\n"


def test_configure_logging_file(capsys, tempdir):
    with freeze_time("2016-05-08 21:19:00"):
        configure_logging(
            log_format='kv',
            utc=False,
            endpoint='file://./sac-actor-lab.log',
        )
        log = structlog.get_logger()
        log.info('teh.event', a=1)
    out, err = capsys.readouterr()
    assert out == ""
    assert err == ""
    with open('./sac-actor-lab.log', 'r') as stream:
        logs = stream.read()
    assert logs == "@timestamp='2016-05-08T21:19:00' event='teh.event' a=1\n"


def test_configure_logging_unknown_scheme(capsys, tempdir):
    with pytest.raises(ValueError) as error:
        configure_logging(
            log_format='kv',
            utc=False,
            endpoint='flume://127.0.0.1:44444',
        )
    assert str(error.value) == \
        'Invalid logging endpoint "flume://127.0.0.1:44444".'


@pytest.mark.parametrize('log_format,expected', [
    ('kv', "@timestamp='2016-05-08T21:19:00' event='teh.event' a=1 b=2"),
    ('json', ('{"@timestamp": "2016-05-08T21:19:00"'
              ', "a": 1, "b": 2, "event": "teh.event"}')),
])
def test_log_format(log_format, expected):
    with freeze_time("2016-05-08 21:19:00"):
        with testfixtures.OutputCapture() as capture:
            configure_logging(
                log_format=log_format,
                utc=False,
                endpoint='file:///dev/stderr',
            )
            log = structlog.get_logger()
            log.info('teh.event', a=1, b=2)
        capture.compare(expected)


@pytest.mark.parametrize('url,host,port,tag', [
    ('fluent://127.0.0.1:24224/the-lab', '127.0.0.1', 24224, 'the-lab'),
    ('fluent://127.0.0.1/the-lab', '127.0.0.1', 24224, 'the-lab'),
    ('fluent://127.0.0.1/', '127.0.0.1', 24224, ''),
])
def test_fluent_url_parser(url, host, port, tag):
    factory = FluentLoggerFactory.from_url(url)
    assert factory.host == host
    assert factory.port == port
    assert factory.tag == tag


@pytest.mark.parametrize('url', [
    'fluent://127.0.0.1:abcd/the-lab',
    'fluentd://127.0.0.1:abcd/the-lab',  # typo in scheme.
    'fluent://127.0.0.1:24224/the-lab?hello=1',  # query strings not allowed.
])
def test_fluent_url_parser_invalid_url(url):
    with pytest.raises(ValueError) as error:
        print(FluentLoggerFactory.from_url(url))
    assert str(error.value) == \
        'Invalid URL: "%s".' % (url,)


@pytest.mark.parametrize('logging_endpoint,utc,expected_timestamp', [
    ('fluent://127.0.0.1:24224/the-lab', True, '2016-05-08T21:19:00+00:00'),
    ('fluent://127.0.0.1:24224/the-lab', False, '2016-05-08T21:19:00'),
])
@mock.patch('fluent.sender.FluentSender.emit')
def test_logging_fluentd(emit, logging_endpoint, utc, expected_timestamp):
    with freeze_time("2016-05-08 21:19:00"):
        configure_logging(
            log_format='kv',  # Ignored!
            utc=utc,
            endpoint=logging_endpoint,
        )
        log = structlog.get_logger()
        with testfixtures.OutputCapture() as capture:
            log.info('teh.event', a=1, b=2)
        capture.compare('')
        emit.assert_called_once_with('teh.event', {
            'a': 1,
            'b': 2,
            '@timestamp': expected_timestamp,
        })


@pytest.mark.parametrize('timestamp,expected_timestamp', [
    ('2016-05-08T21:19:00', '2016-05-08T21:19:00'),
    (datetime(2016, 5, 8, 21, 19, 0), '2016-05-08T21:19:00'),
])
@mock.patch('fluent.sender.FluentSender.emit')
def test_logging_fluentd_override_timestamp(emit, timestamp,
                                            expected_timestamp):
    with freeze_time("2016-05-08 21:19:00"):
        configure_logging(
            log_format='kv',  # Ignored!
            utc=False,
            endpoint='fluent://127.0.0.1:24224/the-lab',
        )
        log = structlog.get_logger()
        with testfixtures.OutputCapture() as capture:
            log.info('teh.event', a=1, b=2, **{'@timestamp': timestamp})
        capture.compare('')
        emit.assert_called_once_with('teh.event', {
            'a': 1,
            'b': 2,
            '@timestamp': expected_timestamp,
        })


@mock.patch('sys.argv', ['sac-actor-lab', '--version'])
def test_main_sys_argv(capsys):
    with pytest.raises(SystemExit) as error:
        main()
    assert error.value.args[0] == 0
    stdout, _ = capsys.readouterr()
    assert stdout.strip() == version


def test_main_explicit_args(capsys):
    with pytest.raises(SystemExit) as error:
        main(['--version'])
    assert error.value.args[0] == 0
    stdout, _ = capsys.readouterr()
    assert stdout.strip() == version


def write_config(document, path='run.json'):
    with open(path, 'w', encoding='utf-8') as stream:
        json.dump(document, stream)
    return path


def read_csv(path):
    with open(path, 'r', encoding='utf-8', newline='') as stream:
        comment = stream.readline()
        return comment, list(csv.reader(stream))


def read_summary(path):
    with open(path, 'r', encoding='utf-8') as stream:
        return json.load(stream)


def read_bytes(path):
    with open(path, 'rb') as stream:
        return stream.read()


def test_main_kl_example(capsys, tempdir):
    event_log = mock.MagicMock()
    with mock.patch('structlog.get_logger') as get_logger:
        get_logger.return_value = event_log
        assert main(['kl-example', '--out=out']) == 0
    comment, rows = read_csv('out/kl-example.csv')
    summary = read_summary('out/kl-example.json')
    assert comment.startswith('# run_id=%s seed=42 config={' % (
        summary['run_id'],
    ))
    assert comment.endswith('}\n')
    assert rows[0] == ['step', 'phi', 'objective']
    assert len(rows) == 1 + 51
    assert rows[1][:2] == ['0', '3.0']
    assert summary['seed'] == 42
    assert summary['results']['status'] == 'converged'
    assert abs(summary['results']['final_phi']) < 0.02
    assert 'out' not in summary['config']
    assert summary['run_id'] == run_id(summary['config'])
    calls = event_log.info.call_args_list
    assert calls[0] == mock.call('run.start', command='kl-example',
                                 run_id=summary['run_id'], seed=42)
    assert calls[-1] == mock.call('run.done', command='kl-example',
                                  status=0)
    assert len(calls) == 2 + 50


def test_main_kl_example_fixed_point(capsys, tempdir):
    write_config({'experiment': {'phi0': 0.0, 'iters': 5}})
    assert main(['kl-example', '--config=run.json']) == 0
    _, rows = read_csv('kl-example.csv')
    assert len(rows) == 1 + 6
    assert all(abs(float(row[1])) < 1e-12 for row in rows[1:])


def test_main_kl_example_divergence(capsys, tempdir):
    write_config({'experiment': {'lr': 10.0}})
    assert main(['kl-example', '--config=run.json']) == 1
    _, rows = read_csv('kl-example.csv')
    assert [row[0] for row in rows[1:]] == ['0', '1', '2']
    summary = read_summary('kl-example.json')
    assert summary['results']['status'] == 'diverged'


def test_main_kl_example_reverse(capsys, tempdir):
    write_config({'experiment': {'direction': 'reverse'}})
    assert main(['kl-example', '--config=run.json']) == 0
    summary = read_summary('kl-example.json')
    assert summary['results']['direction'] == 'reverse'
    assert 1.5 < summary['results']['final_phi'] < 2.1


def test_main_check_grad(capsys, tempdir):
    assert main(['check-grad']) == 0
    stdout, _ = capsys.readouterr()
    assert 'grad_logprob_params' in stdout
    assert 'FAIL' not in stdout
    _, rows = read_csv('check-grad.csv')
    assert rows[0] == [
        'operation', 'worst_relative_error', 'tolerance', 'status',
    ]
    assert len(rows) == 1 + 5
    assert all(row[3] == 'PASS' for row in rows[1:])
    assert read_summary('check-grad.json')['results']['status'] == 'PASS'


def test_main_check_grad_sigma_floor(capsys, tempdir):
    write_config({
        'policy': {'kind': 'gaussian', 'A': [[0.0]], 'b': [0.0],
                   'C': [[0.0]], 'd': [-40.0]},
        'experiment': {'instances': 10},
    })
    assert main(['check-grad', '--config=run.json']) == 0
    summary = read_summary('check-grad.json')
    assert summary['results']['status'] == 'PASS'
    assert all(value is not None for value in
               summary['results']['worst_relative_error'].values())


def test_main_check_grad_tolerance_breach(capsys, tempdir):
    write_config({'experiment': {'instances': 4, 'step': 0.5}})
    assert main(['check-grad', '--config=run.json']) == 1
    assert read_summary('check-grad.json')['results']['status'] == 'FAIL'


@pytest.mark.parametrize('content', [
    '{"experiment": ',
    '{"experiment": {"K_list": []}}',
    '{"buffer": {"states": [[0.0, 0.0]]}}',
])
def test_main_invalid_config(content, capsys, tempdir):
    with open('run.json', 'w') as stream:
        stream.write(content)
    assert main(['mixture-sweep', '--config=run.json']) == 2
    _, stderr = capsys.readouterr()
    assert 'error: ' in stderr
    assert not os.path.exists('mixture-sweep.csv')


def test_main_mixture_sweep_needs_log_mixture(capsys, tempdir):
    write_config({'target': {'kind': 'quadratic', 'M': [[0.0]], 'c': [0.0]}})
    assert main(['mixture-sweep', '--config=run.json']) == 2


def test_main_mixture_sweep(capsys, tempdir):
    write_config({'experiment': {'K_list': [1, 2], 'steps': 200}})
    assert main(['mixture-sweep', '--config=run.json']) == 0
    _, rows = read_csv('mixture-sweep.csv')
    assert rows[0] == ['K', 'status', 'reverse_kl']
    assert [row[:2] for row in rows[1:]] == [['1', 'ok'], ['2', 'ok']]
    entries = read_summary('mixture-sweep.json')['results']['entries']
    assert [entry['K'] for entry in entries] == [1, 2]


def test_main_mixture_sweep_all_diverged(capsys, tempdir):
    write_config({'experiment': {'K_list': [1], 'steps': 5,
                                 'sweep_lr': 1e6}})
    assert main(['mixture-sweep', '--config=run.json']) == 1
    _, rows = read_csv('mixture-sweep.csv')
    assert rows[1] == ['1', 'diverged', 'nan']
    entries = read_summary('mixture-sweep.json')['results']['entries']
    assert entries == [{'K': 1, 'status': 'diverged', 'reverse_kl': None}]


def test_main_variance(capsys, tempdir):
    write_config({
        'policy': {'kind': 'gaussian', 'A': [[0.2]], 'b': [0.5],
                   'C': [[0.1]], 'd': [0.0]},
        'buffer': {'states': [[0.0], [1.0], [-1.0]]},
        'experiment': {'n': 10, 'M': 200},
    })
    assert main(['variance', '--config=run.json']) == 0
    _, rows = read_csv('variance.csv')
    assert rows[0] == ['seed', 'estimator', 'n', 'g0', 'g1', 'g2', 'g3']
    assert len(rows) == 1 + 2 * 200
    assert {row[1] for row in rows[1:]} == {'reparam', 'scorefn'}
    results = read_summary('variance.json')['results']
    assert results['agreement'] == 'PASS'
    assert len(results['variance_ratio']) == 4
    assert results['reparam']['replicas'] == 200


def test_main_variance_is_byte_identical(capsys, tempdir):
    write_config({'experiment': {'n': 5, 'M': 20, 'workers': 2}})
    first = main(['variance', '--config=run.json', '--out=first'])
    second = main(['variance', '--config=run.json', '--out=second'])
    assert first == second
    for name in ('variance.csv', 'variance.json'):
        assert read_bytes(os.path.join('first', name)) == \
            read_bytes(os.path.join('second', name))
    assert b'\r\n' not in read_bytes(os.path.join('first', 'variance.csv'))


def test_main_variance_mixture_policy(capsys, tempdir):
    component = {'A': [[0.0]], 'b': [1.0], 'C': [[0.0]], 'd': [0.0]}
    write_config({'policy': {'kind': 'mixture',
                             'components': [component, component],
                             'logits': [0.0, 0.0]}})
    assert main(['variance', '--config=run.json']) == 1
    _, stderr = capsys.readouterr()
    assert 'score-function' in stderr


def test_main_optimize(capsys, tempdir):
    write_config({
        'target': {'kind': 'quadratic', 'M': [[0.0]], 'c': [1.0]},
        'experiment': {'lr': 0.1, 'iters': 20, 'n': 32},
    })
    assert main(['optimize', '--config=run.json', '--seed=3']) == 0
    _, rows = read_csv('optimize.csv')
    assert rows[0] == ['step', 'objective', 'p0', 'p1', 'p2', 'p3']
    assert len(rows) == 1 + 21
    summary = read_summary('optimize.json')
    assert summary['seed'] == 3
    assert summary['results']['estimator'] == 'reparam'
    assert summary['results']['status'] == 'ok'
    assert summary['results']['final_loss']['n_samples'] == 32
    gradient = summary['results']['final_gradient']
    assert gradient['estimator'] == 'reparam'
    assert gradient['n_samples'] == 32
    assert len(gradient['g']) == 4
    assert len(gradient['stderr']) == 4


def test_main_optimize_divergence(capsys, tempdir):
    write_config({'experiment': {'lr': 1e6, 'iters': 5,
                                 'estimator': 'scorefn'}})
    assert main(['optimize', '--config=run.json']) == 1
    results = read_summary('optimize.json')['results']
    assert results['status'] == 'diverged'
    assert results['estimator'] == 'scorefn'


@mock.patch('fluent.sender.FluentSender.emit')
def test_main_fluent_logging_endpoint_env(emit, capsys, tempdir):
    env = {
        'SAC_ACTOR_LAB_LOGGING_ENDPOINT': 'fluent://127.0.0.1:24224/lab',
    }
    write_config({'experiment': {'iters': 3}})
    with setenv(env):
        assert main(['kl-example', '--config=run.json']) == 1
    stdout, stderr = capsys.readouterr()
    assert stderr.strip() == ''
    # Three steps from 3.0 only reach 0.375.
    summary = read_summary('kl-example.json')
    assert summary['results']['status'] == 'not converged'
    emit.assert_any_call('kl_example.step', {
        'step': 3,
        'phi': mock.ANY,
        'objective': mock.ANY,
        'direction': 'forward',
        '@timestamp': mock.ANY,
    })
