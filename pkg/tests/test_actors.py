"""Policies: counts, distribution properties, and gradient oracles."""

import numpy as np
import pytest

from eqmarl import oracles
from eqmarl.actors import ClassicalActor, PolicyOutput, QuantumActor
from eqmarl.nn import actor_loss
from eqmarl.vqc import Squash, VqcParams


def _toy_actor(rng, num_actions=3, qubits=2, layers=1, **kw):
    return QuantumActor(num_actions, rng, num_qubits=qubits,
                        num_layers=layers, **kw)


def test_quantum_actor_counts():
    rng = np.random.default_rng(0)
    # Observation-matrix input, 4 actions: 132 VQC + 4 weights.
    assert QuantumActor(4, rng).count_parameters() == 136
    # Encoded 27-feature input with fixed scalings: 336 + 72 + 4.
    assert QuantumActor(4, rng, obs_dim=27, encoded_input=True,
                        lambda_trainable=False).count_parameters() == 412
    # Two-action variant: 132 + 2.
    assert QuantumActor(2, rng).count_parameters() == 134


def test_classical_actor_count():
    rng = np.random.default_rng(1)
    actor = ClassicalActor(147, 3, rng, hidden=100)
    assert actor.count_parameters() == 100 * 148 + 3 * 101


def test_zero_everything_is_uniform():
    rng = np.random.default_rng(2)
    actor = _toy_actor(rng, num_actions=4, qubits=2)
    actor.params.theta[:] = 0.0
    actor.action_weights[:] = 0.0
    probs, _ = actor.probabilities(rng.normal(size=(1, 2, 3)))
    np.testing.assert_allclose(probs[0], np.full(4, 0.25), atol=1e-12)


def test_beta_zero_is_uniform():
    rng = np.random.default_rng(3)
    actor = _toy_actor(rng, num_actions=3, qubits=2, beta=0.0)
    probs, _ = actor.probabilities(rng.normal(size=(1, 2, 3)))
    np.testing.assert_allclose(probs[0], np.full(3, 1 / 3), atol=1e-12)


def test_probabilities_normalized_many_draws():
    rng = np.random.default_rng(4)
    actor = _toy_actor(rng, num_actions=4, qubits=2, layers=2)
    obs = rng.normal(size=(1000, 2, 3))
    probs, _ = actor.probabilities(obs)
    np.testing.assert_allclose(probs.sum(axis=-1), np.ones(1000), atol=1e-9)
    assert np.all(probs >= 0)


def test_sampling_reproducible():
    rng = np.random.default_rng(5)
    actor = _toy_actor(rng, num_actions=4, qubits=2)
    obs = rng.normal(size=(2, 3))
    outs1 = [actor.policy_forward(obs, np.random.default_rng(99))
             for _ in range(1)]
    outs2 = [actor.policy_forward(obs, np.random.default_rng(99))
             for _ in range(1)]
    assert outs1[0].action == outs2[0].action
    assert outs1[0].log_prob == outs2[0].log_prob
    # And a longer stream with one shared generator is bit-stable.
    g1, g2 = np.random.default_rng(7), np.random.default_rng(7)
    seq1 = [actor.policy_forward(obs, g1).action for _ in range(50)]
    seq2 = [actor.policy_forward(obs, g2).action for _ in range(50)]
    assert seq1 == seq2


def test_policy_output_consistency():
    rng = np.random.default_rng(6)
    actor = _toy_actor(rng, num_actions=3, qubits=2)
    out = actor.policy_forward(rng.normal(size=(2, 3)),
                               np.random.default_rng(0))
    assert isinstance(out, PolicyOutput)
    assert 0 <= out.action < 3
    assert out.log_prob == pytest.approx(np.log(out.probs[out.action]))


def _actor_loss_of(actor, obs, actions, adv, alpha):
    probs, _ = actor.probabilities(obs)
    p_c = probs[np.arange(len(actions)), actions]
    return actor_loss(adv, p_c, alpha)


def test_quantum_gradients_match_fd():
    rng = np.random.default_rng(7)
    actor = _toy_actor(rng, num_actions=3, qubits=2, layers=1)
    obs = rng.normal(size=(4, 2, 3))
    actions = rng.integers(0, 3, size=4)
    adv = rng.normal(size=4)
    alpha = 0.01
    grads = actor.backward(obs, actions, adv, alpha)

    def f_theta(theta):
        saved = actor.params.theta.copy()
        actor.params.theta[:] = theta
        try:
            return _actor_loss_of(actor, obs, actions, adv, alpha)
        finally:
            actor.params.theta[:] = saved

    fd = oracles.central_difference(f_theta, actor.params.theta)
    np.testing.assert_allclose(grads["theta"][0], fd, atol=1e-6, rtol=1e-4)

    def f_lam(lam):
        saved = actor.params.lam.copy()
        actor.params.lam[:] = lam
        try:
            return _actor_loss_of(actor, obs, actions, adv, alpha)
        finally:
            actor.params.lam[:] = saved

    fd = oracles.central_difference(f_lam, actor.params.lam)
    np.testing.assert_allclose(grads["lam"][0], fd, atol=1e-6, rtol=1e-4)

    def f_w(w):
        saved = actor.action_weights.copy()
        actor.action_weights[:] = w
        try:
            return _actor_loss_of(actor, obs, actions, adv, alpha)
        finally:
            actor.action_weights[:] = saved

    fd = oracles.central_difference(f_w, actor.action_weights)
    np.testing.assert_allclose(grads["w"][0], fd, atol=1e-6, rtol=1e-4)


def test_quantum_encoder_gradients_match_fd():
    rng = np.random.default_rng(8)
    actor = _toy_actor(rng, num_actions=3, qubits=2, layers=1, obs_dim=5,
                       encoded_input=True, lambda_trainable=False)
    obs = rng.normal(size=(3, 5))
    actions = rng.integers(0, 3, size=3)
    adv = rng.normal(size=3)
    grads = actor.backward(obs, actions, adv, 0.01)

    def f_enc(w):
        saved = actor.encoder.weights.copy()
        actor.encoder.weights[:] = w
        try:
            return _actor_loss_of(actor, obs, actions, adv, 0.01)
        finally:
            actor.encoder.weights[:] = saved

    fd = oracles.central_difference(f_enc, actor.encoder.weights)
    np.testing.assert_allclose(grads["encoder"][0], fd, atol=1e-6, rtol=1e-4)


def test_classical_gradients_match_fd():
    rng = np.random.default_rng(9)
    actor = ClassicalActor(6, 3, rng, hidden=5)
    obs = rng.normal(size=(4, 6))
    actions = rng.integers(0, 3, size=4)
    adv = rng.normal(size=4)
    grads = actor.backward(obs, actions, adv, 0.01)

    def f_w1(w):
        saved = actor.l1.weights.copy()
        actor.l1.weights[:] = w
        try:
            return _actor_loss_of(actor, obs, actions, adv, 0.01)
        finally:
            actor.l1.weights[:] = saved

    fd = oracles.central_difference(f_w1, actor.l1.weights)
    np.testing.assert_allclose(grads["net"][0], fd, atol=1e-6, rtol=1e-4)


def test_zero_advantage_zero_alpha_zero_gradient():
    rng = np.random.default_rng(10)
    actor = _toy_actor(rng, num_actions=3, qubits=2)
    obs = rng.normal(size=(4, 2, 3))
    actions = rng.integers(0, 3, size=4)
    grads = actor.backward(obs, actions, np.zeros(4), 0.0)
    for group in grads.values():
        for g in group:
            np.testing.assert_allclose(g, np.zeros_like(g), atol=1e-15)


def test_policy_sharing_permutation_invariance():
    """Accumulated gradients are a batch sum, so agent order is irrelevant."""
    rng = np.random.default_rng(11)
    actor = _toy_actor(rng, num_actions=3, qubits=2)
    obs = rng.normal(size=(6, 2, 3))
    actions = rng.integers(0, 3, size=6)
    adv = rng.normal(size=6)
    perm = np.random.default_rng(0).permutation(6)
    g1 = actor.backward(obs, actions, adv, 0.01)
    g2 = actor.backward(obs[perm], actions[perm], adv[perm], 0.01)
    for name in g1:
        for a, b in zip(g1[name], g2[name]):
            np.testing.assert_allclose(a, b, atol=1e-12)
