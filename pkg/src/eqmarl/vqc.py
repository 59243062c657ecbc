"""Per-agent variational circuit: forward evaluation and analytic gradients.

The circuit is L repetitions of (variational rotations; ring of CZ gates;
observation encoding rotations) followed by one final variational layer.
Rotation triples are applied RX then RY then RZ on each qubit.

Gradients use the parameter-shift rule.  For encoding angles
a = phi(lambda * o) the shift acts on the angle and the chain factors
da/d(lambda) and da/d(o) are attached to the slot, so the same sweep yields
gradients for trainable scaling parameters and for upstream encoders.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import blocksim, qsim
from .blocksim import BlockGate
from .entangle import EntanglementStyle, QubitLayout, prepare_entangled_input

_ROT_KINDS = ("RX", "RY", "RZ")


class Squash(enum.Enum):
    """Optional squash applied to encoding angles."""

    ARCTAN = "arctan"
    IDENTITY = "identity"

    def apply(self, x):
        return np.arctan(x) if self is Squash.ARCTAN else np.asarray(x, dtype=float)

    def derivative(self, x):
        """d(squash)/dx at x."""
        x = np.asarray(x, dtype=float)
        if self is Squash.ARCTAN:
            return 1.0 / (1.0 + x * x)
        return np.ones_like(x)


@dataclass
class VqcParams:
    """Trainable angles theta ((L+1) x D x 3) and scalings lambda (L x D x 3)."""

    theta: np.ndarray
    lam: np.ndarray
    lambda_trainable: bool = True

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.lam = np.asarray(self.lam, dtype=np.float64)
        if self.theta.ndim != 3 or self.theta.shape[2] != 3:
            raise ValueError(f"theta must be (L+1, D, 3), got {self.theta.shape}")
        if self.lam.shape != (self.num_layers, self.num_qubits, 3):
            raise ValueError(
                f"lambda must be (L, D, 3) = {(self.num_layers, self.num_qubits, 3)},"
                f" got {self.lam.shape}"
            )
        if not self.lambda_trainable and not np.all(self.lam == 1.0):
            raise ValueError("fixed lambda must be all ones")

    @property
    def num_layers(self) -> int:
        return self.theta.shape[0] - 1

    @property
    def num_qubits(self) -> int:
        return self.theta.shape[1]

    def trainable_count(self) -> int:
        count = self.theta.size
        if self.lambda_trainable:
            count += self.lam.size
        return count

    @classmethod
    def random(cls, num_layers: int, num_qubits: int, rng: np.random.Generator,
               lambda_trainable: bool = True) -> "VqcParams":
        theta = rng.uniform(0.0, 2.0 * np.pi, (num_layers + 1, num_qubits, 3))
        lam = np.ones((num_layers, num_qubits, 3))
        return cls(theta, lam, lambda_trainable)


# ---------------------------------------------------------------------------
# Spec-level single-state operations.
# ---------------------------------------------------------------------------

def apply_u_var(state: qsim.StateVector, layer_angles: np.ndarray,
                qubit_offset: int = 0) -> qsim.StateVector:
    """RX, RY, RZ on each block qubit with the given D x 3 angles."""
    layer_angles = np.asarray(layer_angles, dtype=float)
    d_count = layer_angles.shape[0]
    if layer_angles.shape != (d_count, 3):
        raise ValueError(f"layer angles must be (D, 3), got {layer_angles.shape}")
    if qubit_offset + d_count > state.num_qubits:
        raise ValueError("block extends past the register")
    for d in range(d_count):
        for i, kind in enumerate(_ROT_KINDS):
            state = qsim.apply_gate(
                state, qsim.GateOp(kind, (qubit_offset + d,), layer_angles[d, i]))
    return state


def apply_u_circ(state: qsim.StateVector, qubit_offset: int,
                 d_count: int) -> qsim.StateVector:
    """Ring of CZ gates binding neighboring block qubits; identity for D=1."""
    if qubit_offset + d_count > state.num_qubits:
        raise ValueError("block extends past the register")
    if d_count < 2:
        return state
    for d in range(d_count - 1):
        state = qsim.apply_gate(
            state, qsim.GateOp("CZ", (qubit_offset + d, qubit_offset + d + 1)))
    state = qsim.apply_gate(
        state, qsim.GateOp("CZ", (qubit_offset, qubit_offset + d_count - 1)))
    return state


def apply_u_enc(state: qsim.StateVector, lambda_layer: np.ndarray,
                obs: np.ndarray, phi: Squash,
                qubit_offset: int = 0) -> qsim.StateVector:
    """Encode D x 3 observation features as squashed scaled rotations."""
    lambda_layer = np.asarray(lambda_layer, dtype=float)
    obs = np.asarray(obs, dtype=float)
    if lambda_layer.shape != obs.shape or lambda_layer.ndim != 2:
        raise ValueError("lambda layer and observation must both be (D, 3)")
    angles = phi.apply(lambda_layer * obs)
    if not np.all(np.isfinite(angles)):
        raise ValueError("non-finite encoding angle")
    for d in range(obs.shape[0]):
        for i, kind in enumerate(_ROT_KINDS):
            state = qsim.apply_gate(
                state, qsim.GateOp(kind, (qubit_offset + d,), angles[d, i]))
    return state


def apply_u_vqc(state: qsim.StateVector, params: VqcParams, obs: np.ndarray,
                phi: Squash, qubit_offset: int = 0) -> qsim.StateVector:
    """Full block circuit: L x (var; circ; enc) then the final var layer."""
    d_count = params.num_qubits
    for layer in range(params.num_layers):
        state = apply_u_var(state, params.theta[layer], qubit_offset)
        state = apply_u_circ(state, qubit_offset, d_count)
        state = apply_u_enc(state, params.lam[layer], obs, phi, qubit_offset)
    return apply_u_var(state, params.theta[params.num_layers], qubit_offset)


# ---------------------------------------------------------------------------
# Block-circuit construction for the batched engine.
# ---------------------------------------------------------------------------

def build_block_gates(params: VqcParams, obs: np.ndarray,
                      phi: Squash) -> list[BlockGate]:
    """Bound gate list for one agent's block, local qubit indices.

    ``obs`` may be (D, 3) or batched (B, D, 3); encoding angles then carry
    the batch dimension while variational angles stay scalar.
    """
    obs = np.asarray(obs, dtype=float)
    d_count = params.num_qubits
    if obs.shape[-2:] != (d_count, 3):
        raise ValueError(f"observation must end in (D, 3), got {obs.shape}")
    gates: list[BlockGate] = []

    def var_layer(layer: int):
        for d in range(d_count):
            for i, kind in enumerate(_ROT_KINDS):
                gates.append(BlockGate(kind, d, angle=params.theta[layer, d, i],
                                       ref=("theta", layer, d, i)))

    def circ_layer():
        if d_count < 2:
            return
        for d in range(d_count - 1):
            gates.append(BlockGate("CZ", d, q2=d + 1))
        gates.append(BlockGate("CZ", 0, q2=d_count - 1))

    def enc_layer(layer: int):
        for d in range(d_count):
            for i, kind in enumerate(_ROT_KINDS):
                lam = params.lam[layer, d, i]
                o = obs[..., d, i]
                u = lam * o
                angle = phi.apply(u)
                if not np.all(np.isfinite(angle)):
                    raise ValueError("non-finite encoding angle")
                du = phi.derivative(u)
                gates.append(BlockGate(
                    kind, d, angle=angle, ref=("enc", layer, d, i),
                    chain_lam=du * o, chain_obs=du * lam))

    for layer in range(params.num_layers):
        var_layer(layer)
        circ_layer()
        enc_layer(layer)
    var_layer(params.num_layers)
    return gates


def _kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched Kronecker product over the trailing two axes."""
    m, n = a.shape[-1], b.shape[-1]
    out = a[..., :, None, :, None] * b[..., None, :, None, :]
    return out.reshape(a.shape[:-2] + (m * n, m * n))


def _fused_triple(angles: np.ndarray) -> np.ndarray:
    """RZ @ RY @ RX as one 2x2 matrix (RX applied first); batched."""
    rx = blocksim.rotation_matrices("RX", angles[..., 0])
    ry = blocksim.rotation_matrices("RY", angles[..., 1])
    rz = blocksim.rotation_matrices("RZ", angles[..., 2])
    return rz @ ry @ rx


def ring_cz_diagonal(d_count: int) -> np.ndarray:
    """Diagonal of the CZ ring unitary (it is diagonal, entries +-1)."""
    dim = 1 << d_count
    sign = np.ones(dim)
    if d_count < 2:
        return sign
    idx = np.arange(dim)
    edges = [(d, d + 1) for d in range(d_count - 1)] + [(0, d_count - 1)]
    for q1, q2 in edges:
        both = ((idx >> q1) & 1) & ((idx >> q2) & 1)
        sign *= 1.0 - 2.0 * both
    return sign


def variational_unitaries(params: VqcParams) -> list[np.ndarray]:
    """One dense block unitary per variational layer (L+1 of them)."""
    mats = []
    for layer in range(params.num_layers + 1):
        triples = _fused_triple(params.theta[layer])   # (D, 2, 2)
        u = triples[params.num_qubits - 1]
        for d in range(params.num_qubits - 2, -1, -1):
            u = _kron(u, triples[d])
        mats.append(u)
    return mats


def fast_block_states(params: VqcParams, obs: np.ndarray, phi: Squash,
                      var_cache: list[np.ndarray] | None = None) -> np.ndarray:
    """Final (B, 2**D) block states on |0...0| via fused layer unitaries.

    Numerically equivalent to ``blocksim.evolve_states`` over
    ``build_block_gates`` up to floating-point rounding, but far fewer
    array operations; used on the sampling path where no gradients are
    needed.  ``var_cache`` lets callers reuse ``variational_unitaries``.
    """
    obs = _batched_obs(obs)
    d_count = params.num_qubits
    var = var_cache if var_cache is not None else variational_unitaries(params)
    circ = ring_cz_diagonal(d_count)
    batch = obs.shape[0]
    psi = np.broadcast_to(var[0][:, 0], (batch, 1 << d_count))
    for layer in range(params.num_layers):
        if layer > 0:
            psi = psi @ var[layer].T
        psi = psi * circ
        angles = phi.apply(params.lam[layer] * obs)     # (B, D, 3)
        if not np.all(np.isfinite(angles)):
            raise ValueError("non-finite encoding angle")
        triples = _fused_triple(angles)                 # (B, D, 2, 2)
        enc = triples[:, d_count - 1]
        for d in range(d_count - 2, -1, -1):
            enc = _kron(enc, triples[:, d])
        psi = np.einsum("bij,bj->bi", enc, psi)
    if params.num_layers == 0:
        return np.array(psi)
    return psi @ var[params.num_layers].T


@dataclass
class BlockGradients:
    """Gradients of one block expectation, weighted-summed over the batch."""

    value: np.ndarray          # (B,) expectation values
    theta: np.ndarray          # (L+1, D, 3)
    lam: np.ndarray            # (L, D, 3)
    obs: np.ndarray            # (B, D, 3) per-sample observation gradients


def block_gradients(gates: list[BlockGate], params: VqcParams,
                    rho: np.ndarray, obs_diag: np.ndarray,
                    weights: np.ndarray | None = None) -> BlockGradients:
    """Parameter-shift gradients of Tr(rho M) for one agent block.

    ``weights`` (B,) scales each batch sample's contribution to the theta
    and lambda sums; observation gradients stay per-sample (also weighted).
    """
    d_count = params.num_qubits
    value, slot_grads = blocksim.shift_gradients(gates, d_count, rho, obs_diag)
    value = np.atleast_1d(value)
    if weights is None:
        weights = np.ones_like(value)
    theta_grad = np.zeros_like(params.theta)
    lam_grad = np.zeros_like(params.lam)
    obs_grad = np.zeros(value.shape + (d_count, 3))
    k = 0
    for g in gates:
        if g.ref is None:
            continue
        grad = weights * np.atleast_1d(slot_grads[k])
        k += 1
        tag = g.ref[0]
        if tag == "theta":
            _, layer, d, i = g.ref
            theta_grad[layer, d, i] += float(np.sum(grad))
        else:
            _, layer, d, i = g.ref
            lam_grad[layer, d, i] += float(np.sum(grad * g.chain_lam))
            obs_grad[:, d, i] += grad * g.chain_obs
    return BlockGradients(value, theta_grad, lam_grad, obs_grad)


# ---------------------------------------------------------------------------
# Joint multi-block contraction helpers.
# ---------------------------------------------------------------------------

_LETTERS = "abcdefgh"
_LETTERS_IN = "mnopqrst"


def _psi_tensor(psi: np.ndarray, layout: QubitLayout) -> np.ndarray:
    """Reshape a joint statevector so axis N-1-a indexes agent a's block."""
    dim = 1 << layout.qubits_per_agent
    return psi.reshape((dim,) * layout.num_agents)


def _agent_axis_letter(letters: str, layout: QubitLayout, agent: int) -> str:
    # Axis order after reshape is agent N-1 first (most significant bits).
    return letters[layout.num_agents - 1 - agent]


def joint_value(psi: np.ndarray, layout: QubitLayout,
                block_obs: list[np.ndarray]) -> np.ndarray:
    """<psi| (tensor of per-agent block operators) |psi>, batched over B."""
    t = _psi_tensor(psi, layout)
    n = layout.num_agents
    terms = [np.conj(t), t]
    subs = [_LETTERS[:n], _LETTERS_IN[:n]]
    for agent, m in enumerate(block_obs):
        terms.append(m)
        subs.append("B" + _agent_axis_letter(_LETTERS, layout, agent)
                    + _agent_axis_letter(_LETTERS_IN, layout, agent))
    expr = ",".join(subs) + "->B"
    return np.real(np.einsum(expr, *terms, optimize=True))


def effective_rho(psi: np.ndarray, layout: QubitLayout,
                  block_obs: list[np.ndarray], agent: int) -> np.ndarray:
    """Input operator seen by one agent's block with all others contracted.

    Satisfies Tr(rho_agent @ M_agent) == joint_value for any M_agent.
    """
    t = _psi_tensor(psi, layout)
    n = layout.num_agents
    terms = [np.conj(t), t]
    subs = [_LETTERS[:n], _LETTERS_IN[:n]]
    for other, m in enumerate(block_obs):
        if other == agent:
            continue
        terms.append(m)
        subs.append("B" + _agent_axis_letter(_LETTERS, layout, other)
                    + _agent_axis_letter(_LETTERS_IN, layout, other))
    # Row index is the ket side so that Tr(rho @ M) contracts correctly.
    out = ("B" + _agent_axis_letter(_LETTERS_IN, layout, agent)
           + _agent_axis_letter(_LETTERS, layout, agent))
    expr = ",".join(subs) + "->" + out
    return np.einsum(expr, *terms, optimize=True)


def block_z_diag(d_count: int, local_qubits: tuple[int, ...] | None = None
                 ) -> np.ndarray:
    """Diagonal of the Z product over the given local qubits (all if None)."""
    if local_qubits is None:
        local_qubits = tuple(range(d_count))
    if not local_qubits:
        return np.ones(1 << d_count)
    return qsim.z_parity(d_count, tuple(local_qubits))


# ---------------------------------------------------------------------------
# Joint expectation and gradient contract.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JointCircuitSpec:
    """Entangled input plus one VQC block per agent."""

    style: EntanglementStyle
    layout: QubitLayout
    phi: Squash


def joint_expectation(spec: JointCircuitSpec, params_all: list[VqcParams],
                      obs_all: list[np.ndarray]) -> np.ndarray:
    """Expectation of the all-qubit Z product; batched over observations."""
    psi = prepare_entangled_input(spec.style, spec.layout).amplitudes
    d_count = spec.layout.qubits_per_agent
    diag = block_z_diag(d_count)
    block_obs = []
    for params, obs in zip(params_all, obs_all):
        gates = build_block_gates(params, _batched_obs(obs), spec.phi)
        block_obs.append(blocksim.heisenberg_observable(gates, d_count,
                                                        _tile_diag(diag, obs)))
    return joint_value(psi, spec.layout, block_obs)


def _batched_obs(obs: np.ndarray) -> np.ndarray:
    obs = np.asarray(obs, dtype=float)
    return obs[None] if obs.ndim == 2 else obs


def _tile_diag(diag: np.ndarray, obs: np.ndarray) -> np.ndarray:
    obs = np.asarray(obs)
    batch = 1 if obs.ndim == 2 else obs.shape[0]
    return np.broadcast_to(diag, (batch, diag.shape[0]))


def grad_expectation(spec: JointCircuitSpec, params_all: list[VqcParams],
                     obs_all: list[np.ndarray],
                     observable: qsim.PauliZProduct | None = None
                     ) -> tuple[np.ndarray, list[BlockGradients]]:
    """Joint expectation and per-agent parameter-shift gradients.

    ``observable`` defaults to Z on every qubit.  Returns the batched
    expectation values and one ``BlockGradients`` per agent (theta and
    lambda gradients summed over the batch; observation gradients
    per-sample, for upstream encoder backpropagation).
    """
    layout = spec.layout
    d_count = layout.qubits_per_agent
    if observable is None:
        observable = qsim.PauliZProduct(tuple(range(layout.total_qubits)))
    psi = prepare_entangled_input(spec.style, layout).amplitudes

    per_agent_gates = []
    block_obs = []
    diags = []
    for agent, (params, obs) in enumerate(zip(params_all, obs_all)):
        local = tuple(q - agent * d_count for q in observable.qubits
                      if q in layout.block(agent))
        diag = block_z_diag(d_count, local)
        obs_b = _batched_obs(obs)
        gates = build_block_gates(params, obs_b, spec.phi)
        per_agent_gates.append(gates)
        diags.append(np.broadcast_to(diag, (obs_b.shape[0], diag.shape[0])))
        block_obs.append(blocksim.heisenberg_observable(gates, d_count,
                                                        diags[-1]))

    value = joint_value(psi, layout, block_obs)
    grads = []
    for agent, params in enumerate(params_all):
        rho = effective_rho(psi, layout, block_obs, agent)
        grads.append(block_gradients(per_agent_gates[agent], params, rho,
                                     diags[agent]))
    return value, grads
