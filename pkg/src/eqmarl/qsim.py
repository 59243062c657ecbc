"""Dense statevector simulation.

Amplitudes are stored as a flat complex128 array of length 2**Q with a
little-endian qubit convention: qubit 0 is the least significant bit of the
basis-state index.  All gate applications return a new ``StateVector``; the
inputs are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_QUBITS = 24

# Constant single-qubit matrices.
_SQRT2 = np.sqrt(2.0)
MAT_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
MAT_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
MAT_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
MAT_H = np.array([[1, 1], [1, -1]], dtype=np.complex128) / _SQRT2

ROTATION_KINDS = frozenset({"RX", "RY", "RZ"})
SINGLE_KINDS = frozenset({"X", "Y", "Z", "H"}) | ROTATION_KINDS
TWO_QUBIT_KINDS = frozenset({"CNOT", "CZ"})


def rotation_matrix(kind: str, angle: float) -> np.ndarray:
    """2x2 matrix for RX/RY/RZ, exp(-i*angle/2 * Pauli)."""
    c = np.cos(angle / 2.0)
    s = np.sin(angle / 2.0)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    if kind == "RZ":
        return np.array([[c - 1j * s, 0], [0, c + 1j * s]], dtype=np.complex128)
    raise ValueError(f"not a rotation kind: {kind}")


def gate_matrix(kind: str, angle: float | None = None) -> np.ndarray:
    """Dense matrix of a gate on its own qubits (2x2 or 4x4).

    Two-qubit matrices use the convention |control target> with the control
    as the first (most significant) ket label, matching the block form
    [[I, 0], [0, X-or-Z]].
    """
    if kind in ROTATION_KINDS:
        if angle is None:
            raise ValueError(f"{kind} requires an angle")
        return rotation_matrix(kind, angle)
    fixed = {"X": MAT_X, "Y": MAT_Y, "Z": MAT_Z, "H": MAT_H}
    if kind in fixed:
        return fixed[kind]
    if kind == "CNOT":
        m = np.eye(4, dtype=np.complex128)
        m[2:, 2:] = MAT_X
        return m
    if kind == "CZ":
        m = np.eye(4, dtype=np.complex128)
        m[3, 3] = -1
        return m
    raise ValueError(f"unknown gate kind: {kind}")


@dataclass(frozen=True)
class GateOp:
    """One gate: kind, target qubit indices, optional rotation angle.

    For CNOT/CZ the first target is the control.
    """

    kind: str
    targets: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in SINGLE_KINDS | TWO_QUBIT_KINDS:
            raise ValueError(f"unknown gate kind: {self.kind}")
        targets = tuple(self.targets)
        object.__setattr__(self, "targets", targets)
        want = 2 if self.kind in TWO_QUBIT_KINDS else 1
        if len(targets) != want:
            raise ValueError(f"{self.kind} takes {want} target(s), got {targets}")
        if len(set(targets)) != len(targets):
            raise ValueError(f"duplicate targets: {targets}")
        if self.kind in ROTATION_KINDS and self.angle is None:
            raise ValueError(f"{self.kind} requires an angle")


@dataclass(frozen=True)
class PauliZProduct:
    """Tensor product of Z on the listed qubits (identity elsewhere)."""

    qubits: tuple[int, ...]

    def __post_init__(self):
        qubits = tuple(self.qubits)
        object.__setattr__(self, "qubits", qubits)
        if not qubits:
            raise ValueError("PauliZProduct needs at least one qubit")
        if len(set(qubits)) != len(qubits):
            raise ValueError(f"duplicate qubits: {qubits}")


@dataclass(frozen=True)
class StateVector:
    """Q-qubit register as 2**Q complex amplitudes."""

    num_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (1 << self.num_qubits,):
            raise ValueError(
                f"expected {1 << self.num_qubits} amplitudes, got {amps.shape}"
            )
        object.__setattr__(self, "amplitudes", amps)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))


def zero_state(num_qubits: int) -> StateVector:
    """|0...0> on ``num_qubits`` qubits."""
    if not 1 <= num_qubits <= MAX_QUBITS:
        raise ValueError(f"num_qubits must be in [1, {MAX_QUBITS}], got {num_qubits}")
    amps = np.zeros(1 << num_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(num_qubits, amps)


def _check_targets(num_qubits: int, targets: tuple[int, ...]):
    for q in targets:
        if not 0 <= q < num_qubits:
            raise ValueError(f"qubit index {q} out of range for {num_qubits} qubits")


def apply_single_qubit(amps: np.ndarray, num_qubits: int, qubit: int,
                       mat: np.ndarray) -> np.ndarray:
    """Apply a 2x2 matrix on one qubit of a flat amplitude array.

    Works on arrays of shape (..., 2**Q); leading axes are batch dimensions.
    """
    lead = amps.shape[:-1]
    hi = 1 << (num_qubits - 1 - qubit)
    lo = 1 << qubit
    a = amps.reshape(lead + (hi, 2, lo))
    a0 = a[..., 0, :]
    a1 = a[..., 1, :]
    out = np.empty_like(a)
    out[..., 0, :] = mat[0, 0] * a0 + mat[0, 1] * a1
    out[..., 1, :] = mat[1, 0] * a0 + mat[1, 1] * a1
    return out.reshape(amps.shape)


def apply_cnot(amps: np.ndarray, num_qubits: int, control: int,
               target: int) -> np.ndarray:
    """Flip target where control bit is 1."""
    n = 1 << num_qubits
    idx = np.arange(n)
    ctrl_on = (idx >> control) & 1 == 1
    flipped = idx ^ (1 << target)
    out = amps.copy()
    out[..., idx[ctrl_on]] = amps[..., flipped[ctrl_on]]
    return out


def apply_cz(amps: np.ndarray, num_qubits: int, q1: int, q2: int) -> np.ndarray:
    """Negate amplitudes where both qubits are 1."""
    n = 1 << num_qubits
    idx = np.arange(n)
    both = ((idx >> q1) & 1 == 1) & ((idx >> q2) & 1 == 1)
    out = amps.copy()
    out[..., both] *= -1
    return out


def apply_gate(state: StateVector, gate: GateOp) -> StateVector:
    """Apply one gate, returning a new normalized state."""
    _check_targets(state.num_qubits, gate.targets)
    amps = state.amplitudes
    if gate.kind == "CNOT":
        out = apply_cnot(amps, state.num_qubits, gate.targets[0], gate.targets[1])
    elif gate.kind == "CZ":
        out = apply_cz(amps, state.num_qubits, gate.targets[0], gate.targets[1])
    else:
        mat = gate_matrix(gate.kind, gate.angle)
        out = apply_single_qubit(amps, state.num_qubits, gate.targets[0], mat)
    return StateVector(state.num_qubits, out)


def apply_circuit(state: StateVector, gates) -> StateVector:
    for gate in gates:
        state = apply_gate(state, gate)
    return state


def z_parity(num_qubits: int, qubits: tuple[int, ...]) -> np.ndarray:
    """Vector of +-1: parity of the listed bits for each basis state."""
    idx = np.arange(1 << num_qubits)
    bits = np.zeros_like(idx)
    for q in qubits:
        bits ^= (idx >> q) & 1
    return 1.0 - 2.0 * bits


def expectation_z_product(state: StateVector, obs: PauliZProduct) -> float:
    """<Z...Z> = sum of parity-weighted basis probabilities; lies in [-1, 1]."""
    _check_targets(state.num_qubits, obs.qubits)
    parity = z_parity(state.num_qubits, obs.qubits)
    return float(np.sum(parity * np.abs(state.amplitudes) ** 2))
