"""Agent policies under policy sharing: one parameter set serves all agents.

The quantum actor runs a single-agent variational block (no input
entanglement), measures single-qubit Z expectations, and forms logits
logit_a = beta * weight_a * <Z on qubit (a mod D)>.  The classical actor is
a two-layer dense softmax network.  Both expose the same forward/backward
surface so the trainer does not branch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import qsim, vqc
from .nn import DenseLayer, actor_loss_grad_logits, softmax
from .vqc import Squash, VqcParams, build_block_gates


@dataclass
class PolicyOutput:
    """Distribution, sampled action, and its log-probability."""

    probs: np.ndarray
    action: int
    log_prob: float


def sample_from(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF sample; reproducible given the generator state."""
    u = rng.random()
    return int(np.searchsorted(np.cumsum(probs), u, side="right")
               .clip(0, probs.shape[-1] - 1))


class QuantumActor:
    """Softmax policy over per-qubit Z measurements of a VQC block."""

    def __init__(self, num_actions: int, rng: np.random.Generator,
                 num_qubits: int = 4, num_layers: int = 5, beta: float = 1.0,
                 obs_dim: int | None = None, encoded_input: bool = False,
                 lambda_trainable: bool = True, phi: Squash = Squash.ARCTAN):
        self.num_actions = num_actions
        self.num_qubits = num_qubits
        self.beta = beta
        self.phi = phi
        self.params = VqcParams.random(num_layers, num_qubits, rng,
                                       lambda_trainable=lambda_trainable)
        self.action_weights = np.ones(num_actions)
        self.encoder = None
        if encoded_input:
            if obs_dim is None:
                raise ValueError("encoded_input requires obs_dim")
            self.encoder = DenseLayer.init(obs_dim, 3 * num_qubits, "linear",
                                           rng)
        # Per-qubit parity diagonals, rows indexed by qubit.
        self._parities = np.stack(
            [qsim.z_parity(num_qubits, (q,)) for q in range(num_qubits)])
        self._var_cache: tuple[bytes, list[np.ndarray]] | None = None

    def _variational_unitaries(self) -> list[np.ndarray]:
        """Layer unitaries, rebuilt only when theta changes."""
        key = self.params.theta.tobytes()
        if self._var_cache is None or self._var_cache[0] != key:
            self._var_cache = (key, vqc.variational_unitaries(self.params))
        return self._var_cache[1]

    def param_groups(self) -> dict[str, list[np.ndarray]]:
        groups = {"theta": [self.params.theta]}
        if self.params.lambda_trainable:
            groups["lam"] = [self.params.lam]
        if self.encoder is not None:
            groups["encoder"] = [self.encoder.weights, self.encoder.bias]
        groups["w"] = [self.action_weights]
        return groups

    def count_parameters(self) -> int:
        count = self.params.trainable_count() + self.num_actions
        if self.encoder is not None:
            count += self.encoder.param_count()
        return count

    def _obs_matrix(self, obs: np.ndarray) -> tuple[np.ndarray, dict | None]:
        obs = np.asarray(obs, dtype=float)
        if self.encoder is not None:
            obs2 = np.atleast_2d(obs)
            feats, cache = self.encoder.forward(obs2)
            return feats.reshape(obs2.shape[0], self.num_qubits, 3), cache
        mat = obs[None] if obs.ndim == 2 else obs
        if mat.shape[-2:] != (self.num_qubits, 3):
            raise ValueError(
                f"expected (B, {self.num_qubits}, 3) observation, got {obs.shape}")
        return mat, None

    def probabilities(self, obs: np.ndarray) -> tuple[np.ndarray, dict]:
        """Batched action distributions plus the backward-pass cache."""
        mat, enc_cache = self._obs_matrix(obs)
        psi = vqc.fast_block_states(self.params, mat, self.phi,
                                    var_cache=self._variational_unitaries())
        prob_basis = np.abs(psi) ** 2
        z = prob_basis @ self._parities.T            # (B, D) per-qubit <Z>
        qubit_of = np.arange(self.num_actions) % self.num_qubits
        logits = self.beta * self.action_weights * z[:, qubit_of]
        if not np.all(np.isfinite(logits)):
            raise ValueError("non-finite policy logits")
        probs = softmax(logits)
        cache = {"mat": mat, "z": z, "qubit_of": qubit_of, "enc": enc_cache}
        return probs, cache

    def policy_forward(self, obs: np.ndarray,
                       rng: np.random.Generator) -> PolicyOutput:
        """Single-observation distribution and sampled action."""
        probs, _ = self.probabilities(obs)
        p = probs[0]
        action = sample_from(p, rng)
        return PolicyOutput(p, action, float(np.log(max(p[action], 1e-300))))

    def backward(self, obs: np.ndarray, actions: np.ndarray,
                 advantages: np.ndarray, alpha: float,
                 full_entropy: bool = False) -> dict[str, list[np.ndarray]]:
        """Gradients of the entropy-regularized policy loss.

        obs stacks every agent-step pair of the episode along the batch
        axis, so accumulation across agents (policy sharing) is a sum over
        the batch.
        """
        actions = np.asarray(actions)
        probs, cache = self.probabilities(obs)
        dlogits = actor_loss_grad_logits(np.asarray(advantages, float), probs,
                                         actions, alpha,
                                         full_entropy=full_entropy)
        z = cache["z"]
        qubit_of = cache["qubit_of"]
        dweights = self.beta * np.sum(dlogits * z[:, qubit_of], axis=0)
        # d(loss)/d<Z_q>, combined into one effective diagonal observable.
        dz = np.zeros_like(z)
        for a in range(self.num_actions):
            dz[:, qubit_of[a]] += dlogits[:, a] * self.beta \
                * self.action_weights[a]
        diag_eff = dz @ self._parities                # (B, dim)
        dim = 1 << self.num_qubits
        rho0 = np.zeros((diag_eff.shape[0], dim, dim), dtype=np.complex128)
        rho0[:, 0, 0] = 1.0
        gates = build_block_gates(self.params, cache["mat"], self.phi)
        bg = vqc.block_gradients(gates, self.params, rho0, diag_eff)
        groups = {"theta": [bg.theta]}
        if self.params.lambda_trainable:
            groups["lam"] = [bg.lam]
        if self.encoder is not None:
            dout = bg.obs.reshape(bg.obs.shape[0], -1)
            dwe, dbe, _ = self.encoder.backward(cache["enc"], dout)
            groups["encoder"] = [dwe, dbe]
        groups["w"] = [dweights]
        return groups


class ClassicalActor:
    """Dense softmax policy: hidden ReLU layer then an action layer."""

    def __init__(self, obs_dim: int, num_actions: int,
                 rng: np.random.Generator, hidden: int = 100):
        self.num_actions = num_actions
        self.l1 = DenseLayer.init(obs_dim, hidden, "relu", rng)
        self.l2 = DenseLayer.init(hidden, num_actions, "linear", rng)

    def param_groups(self) -> dict[str, list[np.ndarray]]:
        return {"net": [self.l1.weights, self.l1.bias,
                        self.l2.weights, self.l2.bias]}

    def count_parameters(self) -> int:
        return self.l1.param_count() + self.l2.param_count()

    def probabilities(self, obs: np.ndarray) -> tuple[np.ndarray, dict]:
        obs2 = np.atleast_2d(np.asarray(obs, dtype=float))
        h1, c1 = self.l1.forward(obs2)
        logits, c2 = self.l2.forward(h1)
        if not np.all(np.isfinite(logits)):
            raise ValueError("non-finite policy logits")
        return softmax(logits), {"c1": c1, "c2": c2}

    def policy_forward(self, obs: np.ndarray,
                       rng: np.random.Generator) -> PolicyOutput:
        probs, _ = self.probabilities(obs)
        p = probs[0]
        action = sample_from(p, rng)
        return PolicyOutput(p, action, float(np.log(max(p[action], 1e-300))))

    def backward(self, obs: np.ndarray, actions: np.ndarray,
                 advantages: np.ndarray, alpha: float,
                 full_entropy: bool = False) -> dict[str, list[np.ndarray]]:
        probs, cache = self.probabilities(obs)
        dlogits = actor_loss_grad_logits(np.asarray(advantages, float), probs,
                                         np.asarray(actions), alpha,
                                         full_entropy=full_entropy)
        dw2, db2, dh1 = self.l2.backward(cache["c2"], dlogits)
        dw1, db1, _ = self.l1.backward(cache["c1"], dh1)
        return {"net": [dw1, db1, dw2, db2]}
