"""Critic frameworks: values, parameter counts, split-gradient equivalence."""

import numpy as np
import pytest

from eqmarl import nn, oracles, vqc
from eqmarl.critics import CriticFramework, CriticKind, ValueEstimate
from eqmarl.entangle import EntanglementStyle
from eqmarl.nn import DenseLayer, huber_loss, huber_loss_grad
from eqmarl.vqc import JointCircuitSpec, Squash, VqcParams, joint_expectation


def _make(kind, rng, **kw):
    return CriticFramework(kind, rng=rng, **kw)


# -- parameter counts (exact integers, published table cells) ---------------

COUNT_CASES = [
    # (kind, kwargs, per_agent, central, total)
    (CriticKind.EQMARL, dict(num_agents=2, obs_dim=36), 132, 1, 265),
    (CriticKind.QFCTDE, dict(num_agents=2, obs_dim=36), 132, 1, 265),
    (CriticKind.EQMARL, dict(num_agents=2, obs_dim=27, encoded_input=True,
                             lambda_trainable=False), 408, 1, 817),
    (CriticKind.QFCTDE, dict(num_agents=2, obs_dim=27, encoded_input=True,
                             lambda_trainable=False), 408, 1, 817),
    (CriticKind.FCTDE, dict(num_agents=2, obs_dim=36), 0, 889, 889),
    (CriticKind.FCTDE, dict(num_agents=2, obs_dim=27), 0, 673, 673),
    (CriticKind.SCTDE, dict(num_agents=2, obs_dim=36), 444, 25, 913),
    (CriticKind.SCTDE, dict(num_agents=2, obs_dim=27), 336, 25, 697),
    # MiniGrid: 7x7x3 observations, h=100 for the classical nets.
    (CriticKind.EQMARL, dict(num_agents=2, obs_dim=147, encoded_input=True,
                             lambda_trainable=False), 1848, 1, 3697),
    (CriticKind.FCTDE, dict(num_agents=2, obs_dim=147, hidden=100),
     0, 29601, 29601),
    (CriticKind.SCTDE, dict(num_agents=2, obs_dim=147, hidden=100),
     14800, 201, 29801),
]


@pytest.mark.parametrize("kind,kw,per_agent,central,total", COUNT_CASES)
def test_parameter_counts(kind, kw, per_agent, central, total):
    critic = _make(kind, np.random.default_rng(0), **kw)
    counts = critic.count_parameters()
    assert counts == {"per_agent": per_agent, "central": central,
                      "total": total}
    # The tally matches the tensors actually exposed to the optimizer.
    live = sum(t.size for g in critic.param_groups().values() for t in g)
    assert live == total


# -- forward values ---------------------------------------------------------

def _zero_quantum(kind, style=EntanglementStyle.NONE, num_qubits=1,
                  num_layers=1):
    critic = CriticFramework(kind, num_agents=2, obs_dim=3,
                             rng=np.random.default_rng(0), style=style,
                             num_qubits=num_qubits, num_layers=num_layers)
    for p in critic.params:
        p.theta[:] = 0.0
    return critic


def test_quantum_value_zero_params_no_entanglement():
    critic = _zero_quantum(CriticKind.EQMARL)
    obs = [np.zeros((1, 1, 3)), np.zeros((1, 1, 3))]
    est = critic.estimate_joint_value(obs)
    # |0...0> is a +1 eigenstate of Z...Z, so V = w(1+1)/2 = 1.
    assert est.x_split[0] == pytest.approx(1.0, abs=1e-12)
    assert est.value[0] == pytest.approx(1.0, abs=1e-12)


def test_quantum_value_psi_plus_parity():
    critic = _zero_quantum(CriticKind.EQMARL, style=EntanglementStyle.PSI_PLUS)
    obs = [np.zeros((1, 1, 3)), np.zeros((1, 1, 3))]
    est = critic.estimate_joint_value(obs)
    # Psi+ has odd parity: <ZZ> = -1, so V = 0.
    assert est.x_split[0] == pytest.approx(-1.0, abs=1e-12)
    assert est.value[0] == pytest.approx(0.0, abs=1e-12)


def test_quantum_value_range():
    rng = np.random.default_rng(1)
    critic = CriticFramework(CriticKind.EQMARL, num_agents=2, obs_dim=36,
                             rng=rng, style=EntanglementStyle.PHI_MINUS,
                             num_qubits=2, num_layers=2)
    obs = [rng.normal(size=(20, 2, 3)) for _ in range(2)]
    est = critic.estimate_joint_value(obs)
    assert np.all(est.x_split >= -1.0 - 1e-12)
    assert np.all(est.x_split <= 1.0 + 1e-12)
    assert np.all(est.value >= -1e-12)
    assert np.all(est.value <= float(critic.w) + 1e-12)


def test_eqmarl_none_matches_qfctde_bitwise():
    rng = np.random.default_rng(2)
    a = CriticFramework(CriticKind.EQMARL, num_agents=2, obs_dim=36,
                        rng=np.random.default_rng(7),
                        style=EntanglementStyle.NONE, num_qubits=3,
                        num_layers=2)
    b = CriticFramework(CriticKind.QFCTDE, num_agents=2, obs_dim=36,
                        rng=np.random.default_rng(7),
                        style=EntanglementStyle.PHI_PLUS, num_qubits=3,
                        num_layers=2)
    # QFCTDE ignores the style argument entirely.
    assert b.style is EntanglementStyle.NONE
    obs = [rng.normal(size=(4, 3, 3)) for _ in range(2)]
    va = a.estimate_joint_value(obs).value
    vb = b.estimate_joint_value(obs).value
    np.testing.assert_array_equal(va, vb)


def test_obs_count_validated():
    critic = _zero_quantum(CriticKind.EQMARL)
    with pytest.raises(ValueError):
        critic.estimate_joint_value([np.zeros((1, 1, 3))])


# -- split-gradient equivalence ---------------------------------------------

def _loss_pieces(critic, obs, q):
    est = critic.estimate_joint_value(obs)
    loss = huber_loss(est.value, q)
    grads = critic.critic_backward(est, q)
    return est, loss, grads


def test_quantum_split_gradient_matches_monolithic():
    """Two-factor form vs direct per-angle parameter-shift of the full loss."""
    rng = np.random.default_rng(3)
    critic = CriticFramework(CriticKind.EQMARL, num_agents=2, obs_dim=36,
                             rng=rng, style=EntanglementStyle.PSI_PLUS,
                             num_qubits=2, num_layers=2)
    obs = [rng.normal(size=(2, 2, 3)) for _ in range(2)]
    q = rng.normal(size=2)
    est, _, grads = _loss_pieces(critic, obs, q)
    dv = huber_loss_grad(est.value, q)
    spec = JointCircuitSpec(critic.style, critic.layout, critic.phi)

    w = float(critic.w)
    for agent in range(2):
        p = critic.params[agent]
        mono = np.zeros_like(p.theta)
        for idx in np.ndindex(*p.theta.shape):
            for sign in (1.0, -1.0):
                shifted = p.theta.copy()
                shifted[idx] += sign * np.pi / 2
                mod = [VqcParams(shifted if a == agent else critic.params[a].theta,
                                 critic.params[a].lam)
                       for a in range(2)]
                xs = joint_expectation(spec, mod, obs)
                mono[idx] += sign * np.sum(dv * w / 2.0 * xs) / 2.0
        np.testing.assert_allclose(grads.groups["theta"][agent], mono,
                                   atol=1e-8)


def test_quantum_lambda_and_w_gradients_match_fd():
    rng = np.random.default_rng(4)
    critic = CriticFramework(CriticKind.EQMARL, num_agents=2, obs_dim=36,
                             rng=rng, style=EntanglementStyle.PHI_PLUS,
                             num_qubits=2, num_layers=2)
    obs = [rng.normal(size=(3, 2, 3)) for _ in range(2)]
    q = rng.normal(size=3)
    est, _, grads = _loss_pieces(critic, obs, q)

    def loss_lam(lam, agent=0):
        saved = critic.params[agent].lam.copy()
        critic.params[agent].lam[:] = lam
        try:
            return huber_loss(critic.estimate_joint_value(obs).value, q)
        finally:
            critic.params[agent].lam[:] = saved

    fd = oracles.central_difference(loss_lam, critic.params[0].lam)
    np.testing.assert_allclose(grads.groups["lam"][0], fd, atol=1e-6,
                               rtol=1e-4)

    def loss_w(wv):
        saved = critic.w.copy()
        critic.w[...] = wv
        try:
            return huber_loss(critic.estimate_joint_value(obs).value, q)
        finally:
            critic.w[...] = saved

    fd_w = oracles.central_difference(loss_w, critic.w)
    np.testing.assert_allclose(grads.groups["w"][0], fd_w, atol=1e-8)


def test_encoder_gradients_match_fd():
    rng = np.random.default_rng(5)
    critic = CriticFramework(CriticKind.EQMARL, num_agents=2, obs_dim=5,
                             rng=rng, style=EntanglementStyle.PSI_MINUS,
                             num_qubits=2, num_layers=1, encoded_input=True,
                             lambda_trainable=False)
    obs = [rng.normal(size=(2, 5)) for _ in range(2)]
    q = rng.normal(size=2)
    _, _, grads = _loss_pieces(critic, obs, q)

    def loss_enc_w(wmat, agent=0):
        saved = critic.encoders[agent].weights.copy()
        critic.encoders[agent].weights[:] = wmat
        try:
            return huber_loss(critic.estimate_joint_value(obs).value, q)
        finally:
            critic.encoders[agent].weights[:] = saved

    fd = oracles.central_difference(loss_enc_w, critic.encoders[0].weights)
    np.testing.assert_allclose(grads.groups["encoder"][0], fd, atol=1e-6,
                               rtol=1e-4)


def test_sctde_split_gradient_matches_monolithic_backprop():
    """Branch grads equal full backprop through an equivalent fused net."""
    rng = np.random.default_rng(6)
    n, obs_dim, h = 2, 6, 4
    critic = CriticFramework(CriticKind.SCTDE, num_agents=n, obs_dim=obs_dim,
                             rng=rng, hidden=h)
    obs = [rng.normal(size=(3, obs_dim)) for _ in range(n)]
    q = rng.normal(size=3)
    est, _, grads = _loss_pieces(critic, obs, q)

    # Fused monolithic network: block-diagonal first layer, same head.
    w1 = np.zeros((n * h, n * obs_dim))
    b1 = np.zeros(n * h)
    for a in range(n):
        w1[a * h:(a + 1) * h, a * obs_dim:(a + 1) * obs_dim] = \
            critic.branches[a].weights
        b1[a * h:(a + 1) * h] = critic.branches[a].bias
    fused1 = DenseLayer(w1, b1, "relu")
    head = critic.head
    x = np.concatenate(obs, axis=-1)
    h1, c1 = fused1.forward(x)
    v, c2 = head.forward(h1)
    dv = huber_loss_grad(v[:, 0], q)
    dwh, dbh, dh1 = head.backward(c2, dv[:, None])
    dw1, db1, _ = fused1.backward(c1, dh1)

    np.testing.assert_allclose(est.value, v[:, 0], atol=1e-12)
    for a in range(n):
        np.testing.assert_allclose(
            grads.groups["net"][2 * a],
            dw1[a * h:(a + 1) * h, a * obs_dim:(a + 1) * obs_dim], atol=1e-10)
        np.testing.assert_allclose(grads.groups["net"][2 * a + 1],
                                   db1[a * h:(a + 1) * h], atol=1e-10)
    np.testing.assert_allclose(grads.groups["net"][2 * n], dwh, atol=1e-10)
    np.testing.assert_allclose(grads.groups["net"][2 * n + 1], dbh, atol=1e-10)


def test_fctde_gradients_match_fd():
    rng = np.random.default_rng(7)
    critic = CriticFramework(CriticKind.FCTDE, num_agents=2, obs_dim=4,
                             rng=rng, hidden=5)
    obs = [rng.normal(size=(3, 4)) for _ in range(2)]
    q = rng.normal(size=3)
    _, _, grads = _loss_pieces(critic, obs, q)

    def loss_at(w1):
        saved = critic.l1.weights.copy()
        critic.l1.weights[:] = w1
        try:
            return huber_loss(critic.estimate_joint_value(obs).value, q)
        finally:
            critic.l1.weights[:] = saved

    fd = oracles.central_difference(loss_at, critic.l1.weights)
    np.testing.assert_allclose(grads.groups["net"][0], fd, atol=1e-6,
                               rtol=1e-4)


def test_perfect_prediction_zero_gradients():
    rng = np.random.default_rng(8)
    critic = CriticFramework(CriticKind.SCTDE, num_agents=2, obs_dim=4,
                             rng=rng, hidden=3)
    obs = [rng.normal(size=(2, 4)) for _ in range(2)]
    est = critic.estimate_joint_value(obs)
    grads = critic.critic_backward(est, est.value.copy())
    for g in grads.groups["net"]:
        np.testing.assert_array_equal(g, np.zeros_like(g))
