"""Joint value estimation: split quantum, central quantum, and classical.

Four frameworks share one interface:

* ``EQMARL``: per-agent variational blocks on an entangled input state; the
  only central trainable is a scalar output scaling w.
* ``QFCTDE``: the identical circuit evaluated centrally with no input
  entanglement (style "none"); same math, same counts.
* ``FCTDE``: one central dense network over the concatenated observations.
* ``SCTDE``: per-agent dense branches whose embeddings a small central head
  combines.

Quantum critics output V = w * (1 + <O>) / 2 where <O> is the all-qubit
Pauli-Z expectation.  Training uses the split form: the central factor
dL/d<O> is computed once, then multiplied into each agent's local
parameter-shift gradients.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import blocksim, vqc
from .entangle import EntanglementStyle, QubitLayout, prepare_entangled_input
from .nn import DenseLayer, huber_loss_grad
from .vqc import Squash, VqcParams, build_block_gates


class CriticKind(enum.Enum):
    EQMARL = "eqmarl"
    QFCTDE = "qfctde"
    FCTDE = "fctde"
    SCTDE = "sctde"

    @classmethod
    def parse(cls, text: str) -> "CriticKind":
        for kind in cls:
            if kind.value == text.lower():
                return kind
        raise ValueError(f"unknown critic kind: {text!r}")


@dataclass
class ValueEstimate:
    """Batched value estimates plus the caches the backward pass needs."""

    value: np.ndarray            # (B,)
    x_split: np.ndarray          # (B,) quantity at the split point
    caches: dict = field(default_factory=dict)


@dataclass
class CriticGradients:
    """Gradients grouped the same way as ``param_groups``."""

    groups: dict[str, list[np.ndarray]]


class CriticFramework:
    """One of the four critic frameworks with a shared train-time interface.

    ``obs_dim`` is the flattened per-agent observation length.  Quantum
    critics take either pre-transformed (B, D, 3) observation matrices
    (``encoded_input=False``) or raw (B, obs_dim) vectors passed through a
    per-agent linear encoder to 3*D features (``encoded_input=True``).
    Classical critics always take raw flattened vectors.
    """

    def __init__(self, kind: CriticKind, num_agents: int, obs_dim: int,
                 rng: np.random.Generator,
                 style: EntanglementStyle = EntanglementStyle.NONE,
                 num_qubits: int = 4, num_layers: int = 5, hidden: int = 12,
                 encoded_input: bool = False, lambda_trainable: bool = True,
                 phi: Squash = Squash.ARCTAN):
        self.kind = kind
        self.num_agents = num_agents
        self.obs_dim = obs_dim
        self.phi = phi
        self.hidden = hidden
        self.encoded_input = encoded_input
        self.style = style if kind is CriticKind.EQMARL else EntanglementStyle.NONE

        if kind in (CriticKind.EQMARL, CriticKind.QFCTDE):
            self.layout = QubitLayout(num_agents, num_qubits)
            self.params = [VqcParams.random(num_layers, num_qubits, rng,
                                            lambda_trainable=lambda_trainable)
                           for _ in range(num_agents)]
            self.encoders = None
            if encoded_input:
                self.encoders = [DenseLayer.init(obs_dim, 3 * num_qubits,
                                                 "linear", rng)
                                 for _ in range(num_agents)]
            self.w = np.array(1.0)
            self._psi = prepare_entangled_input(self.style,
                                                self.layout).amplitudes
        elif kind is CriticKind.FCTDE:
            self.l1 = DenseLayer.init(num_agents * obs_dim, hidden, "relu", rng)
            self.l2 = DenseLayer.init(hidden, 1, "linear", rng)
        elif kind is CriticKind.SCTDE:
            self.branches = [DenseLayer.init(obs_dim, hidden, "relu", rng)
                             for _ in range(num_agents)]
            self.head = DenseLayer.init(num_agents * hidden, 1, "linear", rng)
        else:
            raise ValueError(f"unknown kind: {kind}")

    # -- parameters ---------------------------------------------------------

    def param_groups(self) -> dict[str, list[np.ndarray]]:
        """Trainable tensors grouped by learning-rate block."""
        if self.kind in (CriticKind.EQMARL, CriticKind.QFCTDE):
            groups = {"theta": [p.theta for p in self.params]}
            if self.params[0].lambda_trainable:
                groups["lam"] = [p.lam for p in self.params]
            if self.encoders is not None:
                groups["encoder"] = [t for e in self.encoders
                                     for t in (e.weights, e.bias)]
            groups["w"] = [self.w]
            return groups
        if self.kind is CriticKind.FCTDE:
            return {"net": [self.l1.weights, self.l1.bias,
                            self.l2.weights, self.l2.bias]}
        return {"net": [t for b in self.branches for t in (b.weights, b.bias)]
                + [self.head.weights, self.head.bias]}

    def count_parameters(self) -> dict[str, int]:
        """Trainable tally split into per-agent and central blocks."""
        if self.kind in (CriticKind.EQMARL, CriticKind.QFCTDE):
            per_agent = self.params[0].trainable_count()
            if self.encoders is not None:
                per_agent += self.encoders[0].param_count()
            return {"per_agent": per_agent, "central": 1,
                    "total": self.num_agents * per_agent + 1}
        if self.kind is CriticKind.FCTDE:
            total = self.l1.param_count() + self.l2.param_count()
            return {"per_agent": 0, "central": total, "total": total}
        per_agent = self.branches[0].param_count()
        central = self.head.param_count()
        return {"per_agent": per_agent, "central": central,
                "total": self.num_agents * per_agent + central}

    # -- forward ------------------------------------------------------------

    def estimate_joint_value(self, joint_obs: list[np.ndarray]) -> ValueEstimate:
        """Joint value for a batch of joint observations (one array per agent)."""
        if len(joint_obs) != self.num_agents:
            raise ValueError(
                f"expected {self.num_agents} observations, got {len(joint_obs)}")
        if self.kind in (CriticKind.EQMARL, CriticKind.QFCTDE):
            return self._quantum_forward(joint_obs)
        if self.kind is CriticKind.FCTDE:
            x = np.concatenate([np.atleast_2d(np.asarray(o, dtype=float))
                                for o in joint_obs], axis=-1)
            h1, c1 = self.l1.forward(x)
            v, c2 = self.l2.forward(h1)
            value = v[..., 0]
            return ValueEstimate(value, value.copy(), {"c1": c1, "c2": c2})
        embeds = []
        caches = []
        for agent, obs in enumerate(joint_obs):
            e, c = self.branches[agent].forward(
                np.atleast_2d(np.asarray(obs, dtype=float)))
            embeds.append(e)
            caches.append(c)
        concat = np.concatenate(embeds, axis=-1)
        v, chead = self.head.forward(concat)
        value = v[..., 0]
        return ValueEstimate(value, value.copy(),
                             {"branches": caches, "head": chead})

    def _quantum_forward(self, joint_obs: list[np.ndarray]) -> ValueEstimate:
        d = self.layout.qubits_per_agent
        dim = 1 << d
        enc_caches = []
        gates_all = []
        block_obs = []
        diag = vqc.block_z_diag(d)
        batch = None
        for agent, obs in enumerate(joint_obs):
            obs = np.asarray(obs, dtype=float)
            if self.encoders is not None:
                obs2 = np.atleast_2d(obs)
                feats, cache = self.encoders[agent].forward(obs2)
                enc_caches.append(cache)
                mat = feats.reshape(obs2.shape[0], d, 3)
            else:
                mat = obs[None] if obs.ndim == 2 else obs
                if mat.shape[-2:] != (d, 3):
                    raise ValueError(
                        f"expected (B, {d}, 3) observation matrix, got {obs.shape}")
            if batch is None:
                batch = mat.shape[0]
            elif mat.shape[0] != batch:
                raise ValueError("inconsistent batch sizes across agents")
            gates = build_block_gates(self.params[agent], mat, self.phi)
            gates_all.append(gates)
            block_obs.append(blocksim.heisenberg_observable(
                gates, d, np.broadcast_to(diag, (batch, dim))))
        x = vqc.joint_value(self._psi, self.layout, block_obs)
        value = float(self.w) * (1.0 + x) / 2.0
        caches = {"gates": gates_all, "block_obs": block_obs,
                  "diag": np.broadcast_to(diag, (batch, dim)),
                  "enc": enc_caches}
        return ValueEstimate(value, x, caches)

    # -- backward -----------------------------------------------------------

    def backward(self, estimate: ValueEstimate,
                 dvalue: np.ndarray) -> CriticGradients:
        """Gradients of a scalar loss given dL/dV per batch sample."""
        dvalue = np.asarray(dvalue, dtype=float)
        if self.kind in (CriticKind.EQMARL, CriticKind.QFCTDE):
            return self._quantum_backward(estimate, dvalue)
        if self.kind is CriticKind.FCTDE:
            dw2, db2, dh1 = self.l2.backward(estimate.caches["c2"],
                                             dvalue[..., None])
            dw1, db1, _ = self.l1.backward(estimate.caches["c1"], dh1)
            return CriticGradients({"net": [dw1, db1, dw2, db2]})
        dwh, dbh, dconcat = self.head.backward(estimate.caches["head"],
                                               dvalue[..., None])
        grads = []
        h = self.hidden
        for agent, cache in enumerate(estimate.caches["branches"]):
            dembed = dconcat[..., agent * h:(agent + 1) * h]
            dw, db, _ = self.branches[agent].backward(cache, dembed)
            grads.extend([dw, db])
        grads.extend([dwh, dbh])
        return CriticGradients({"net": grads})

    def _quantum_backward(self, estimate: ValueEstimate,
                          dvalue: np.ndarray) -> CriticGradients:
        # Central factor at the split point, computed once.
        dx = dvalue * float(self.w) / 2.0
        dw = np.array(np.sum(dvalue * (1.0 + estimate.x_split) / 2.0))
        gates_all = estimate.caches["gates"]
        block_obs = estimate.caches["block_obs"]
        diag = estimate.caches["diag"]
        theta_grads = []
        lam_grads = []
        enc_grads = []
        for agent in range(self.num_agents):
            rho = vqc.effective_rho(self._psi, self.layout, block_obs, agent)
            bg = vqc.block_gradients(gates_all[agent], self.params[agent],
                                     rho, diag, weights=dx)
            theta_grads.append(bg.theta)
            lam_grads.append(bg.lam)
            if self.encoders is not None:
                dout = bg.obs.reshape(bg.obs.shape[0], -1)
                dwe, dbe, _ = self.encoders[agent].backward(
                    estimate.caches["enc"][agent], dout)
                enc_grads.extend([dwe, dbe])
        groups = {"theta": theta_grads}
        if self.params[0].lambda_trainable:
            groups["lam"] = lam_grads
        if self.encoders is not None:
            groups["encoder"] = enc_grads
        groups["w"] = [dw]
        return CriticGradients(groups)

    def critic_backward(self, estimate: ValueEstimate, q_targets: np.ndarray,
                        delta: float = 1.0) -> CriticGradients:
        """Gradients of the mean Huber loss between V and the Q targets."""
        dvalue = huber_loss_grad(estimate.value, np.asarray(q_targets, float),
                                 delta)
        return self.backward(estimate, dvalue)
