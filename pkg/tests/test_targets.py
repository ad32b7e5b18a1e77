# -*- coding: utf-8 -*-

import numpy as np
import pytest

from sac_actor_lab.errors import ContractViolation, ConvergenceWarning
from sac_actor_lab.quadrature import Grid, integrate
from sac_actor_lab.targets import (
    MixtureLogQ,
    QuadraticQ,
    canonical_bimodal_target,
    grad_q_action,
    log_partition,
    q_eval,
    target_from_json,
    target_to_json,
)

HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def test_quadratic_eval():
    q = QuadraticQ(M=[[2.0]], c=[1.0])
    s = np.array([1.0])
    np.testing.assert_allclose(q.peak(s), [3.0])
    assert q_eval(q, s, [3.0]) == 0.0
    assert q_eval(q, s, [1.0]) == -2.0
    np.testing.assert_allclose(grad_q_action(q, s, [1.0]), [2.0])


def test_quadratic_batch():
    q = QuadraticQ(M=[[1.0], [0.0]], c=[0.0, 1.0], scale=2.0)
    states = np.array([[0.0], [1.0]])
    actions = np.array([[0.0, 1.0], [0.0, 1.0]])
    np.testing.assert_allclose(q_eval(q, states, actions), [0.0, -1.0])
    np.testing.assert_allclose(grad_q_action(q, states, actions),
                               [[0.0, 0.0], [2.0, 0.0]])


def test_quadratic_broadcasts_states_against_one_action():
    q = QuadraticQ(M=[[1.0]], c=[0.0])
    states = [[0.0], [1.0], [2.0]]
    np.testing.assert_allclose(q_eval(q, states, [0.0]), [0.0, -0.5, -2.0])
    np.testing.assert_allclose(grad_q_action(q, states, [0.0]),
                               [[0.0], [1.0], [2.0]])
    np.testing.assert_allclose(q_eval(q, [1.0], [[0.0], [1.0]]),
                               [-0.5, 0.0])
    with pytest.raises(ContractViolation):
        print(q_eval(q, states, [[0.0], [1.0]]))
    with pytest.raises(ContractViolation):
        print(grad_q_action(q, [[0.0, 1.0]], [0.0]))


@pytest.mark.parametrize('scale', [0.5, 1.0, 2.0])
def test_quadratic_log_partition(scale, strict_quadrature):
    q = QuadraticQ(M=[[0.5]], c=[0.25], scale=scale)
    s = np.array([1.5])
    closed = log_partition(q, s)
    assert closed == pytest.approx(0.5 * np.log(2.0 * np.pi / scale))
    assert log_partition(q, s, Grid()) == pytest.approx(closed, abs=1e-10)


def test_quadratic_log_partition_multivariate():
    q = QuadraticQ(M=np.zeros((2, 1)), c=[0.0, 0.0], scale=2.0)
    assert log_partition(q, [0.0]) == pytest.approx(np.log(np.pi))
    with pytest.raises(ContractViolation):
        print(log_partition(q, [0.0], Grid()))


def test_log_partition_warns_on_truncated_grid():
    q = QuadraticQ(M=[[0.0]], c=[0.0])
    with pytest.warns(ConvergenceWarning, match='closed form'):
        value = log_partition(q, [0.0], Grid(-3.0, 3.0, 101))
    assert value < q.closed_log_partition([0.0])


def test_mixture_log_partition_by_quadrature(strict_quadrature):
    h = canonical_bimodal_target()
    assert log_partition(h, None, Grid()) == pytest.approx(0.0, abs=1e-10)


def test_quadratic_invalid_shapes():
    with pytest.raises(ContractViolation):
        print(QuadraticQ(M=[[1.0, 2.0]], c=[0.0, 1.0]))
    with pytest.raises(ContractViolation):
        print(QuadraticQ(M=[[1.0]], c=[0.0], scale=0.0))
    with pytest.raises(ContractViolation):
        print(q_eval(QuadraticQ([[1.0]], [0.0]), [0.0], [0.0, 1.0]))


def test_canonical_bimodal_target():
    h = canonical_bimodal_target()
    assert h.action_dim == 1
    assert q_eval(h, None, [0.0]) == pytest.approx(-HALF_LOG_2PI - 2.0)
    assert grad_q_action(h, None, [0.0]) == pytest.approx([0.0])
    # Between the modes the pull points at the nearer one.
    assert grad_q_action(h, None, [1.0])[0] > 0.0
    assert grad_q_action(h, None, [-1.0])[0] < 0.0


def test_mixture_is_normalized(strict_quadrature):
    h = MixtureLogQ(centers=[-1.0, 0.5, 3.0], stds=[0.5, 1.0, 2.0],
                    weights=[0.2, 0.5, 0.3])
    total = integrate(lambda x: np.exp(q_eval(h, None, x[:, None])),
                      Grid(-30.0, 30.0, 8001))
    assert total == pytest.approx(1.0, abs=1e-8)
    assert log_partition(h, None) == 0.0


def test_mixture_gradient_single_component():
    h = MixtureLogQ(centers=[[1.0, -1.0]], stds=[2.0], weights=[1.0])
    np.testing.assert_allclose(grad_q_action(h, None, [3.0, 3.0]),
                               [-0.5, -1.0])


@pytest.mark.parametrize('stds,weights', [
    ([1.0, -1.0], [0.5, 0.5]),
    ([1.0, 1.0], [0.6, 0.6]),
    ([1.0, 1.0], [1.0, 0.0]),
    ([1.0], [0.5, 0.5]),
])
def test_mixture_invalid(stds, weights):
    with pytest.raises(ContractViolation):
        print(MixtureLogQ(centers=[-1.0, 1.0], stds=stds, weights=weights))


def test_target_json():
    h = canonical_bimodal_target()
    doc = target_to_json(h)
    assert doc == {
        'kind': 'log_mixture',
        'centers': [[-2.0], [2.0]],
        'stds': [1.0, 1.0],
        'weights': [0.5, 0.5],
    }
    assert target_to_json(target_from_json(doc)) == doc
    q = target_from_json({'kind': 'quadratic', 'M': [[1.0]], 'c': [2.0]})
    assert q.scale == 1.0


@pytest.mark.parametrize('doc', [
    {'kind': 'banana'},
    {'kind': 'quadratic', 'M': [[1.0]]},
    {'M': [[1.0]], 'c': [0.0]},
])
def test_target_json_invalid(doc):
    with pytest.raises(ContractViolation):
        print(target_from_json(doc))
