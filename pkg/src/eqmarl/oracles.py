"""Brute-force reference implementations used as verification oracles.

Everything here builds full 2**Q x 2**Q matrices with Kronecker products and
multiplies them out directly.  It is deliberately independent of the strided
kernels in ``qsim``/``blocksim`` so the two routes can check each other.
"""

from __future__ import annotations

import numpy as np

from . import qsim
from .entangle import EntanglementStyle, QubitLayout, entangling_gates
from .qsim import GateOp, gate_matrix

_P0 = np.array([[1, 0], [0, 0]], dtype=np.complex128)
_P1 = np.array([[0, 0], [0, 1]], dtype=np.complex128)


def embed_single(mat: np.ndarray, num_qubits: int, qubit: int) -> np.ndarray:
    """I (x) mat (x) I placing mat on the given little-endian qubit."""
    hi = np.eye(1 << (num_qubits - 1 - qubit), dtype=np.complex128)
    lo = np.eye(1 << qubit, dtype=np.complex128)
    return np.kron(hi, np.kron(mat, lo))


def full_unitary(gates, num_qubits: int) -> np.ndarray:
    """Dense product of the whole-register matrices of a gate sequence."""
    dim = 1 << num_qubits
    u = np.eye(dim, dtype=np.complex128)
    for g in gates:
        if g.kind == "CNOT":
            c, t = g.targets
            m = (embed_single(_P0, num_qubits, c)
                 + embed_single(_P1, num_qubits, c)
                 @ embed_single(qsim.MAT_X, num_qubits, t))
        elif g.kind == "CZ":
            c, t = g.targets
            m = (embed_single(_P0, num_qubits, c)
                 + embed_single(_P1, num_qubits, c)
                 @ embed_single(qsim.MAT_Z, num_qubits, t))
        else:
            m = embed_single(gate_matrix(g.kind, g.angle), num_qubits,
                             g.targets[0])
        u = m @ u
    return u


def state_via_matrix(gates, num_qubits: int) -> np.ndarray:
    """Amplitudes of the gate sequence applied to |0...0> via dense matmul."""
    dim = 1 << num_qubits
    e0 = np.zeros(dim, dtype=np.complex128)
    e0[0] = 1.0
    return full_unitary(gates, num_qubits) @ e0


def expectation_brute(amps: np.ndarray, qubits) -> float:
    """Z-product expectation by explicit enumeration of basis states."""
    total = 0.0
    for b in range(amps.shape[0]):
        parity = 1.0
        for q in qubits:
            if (b >> q) & 1:
                parity = -parity
        total += parity * abs(amps[b]) ** 2
    return total


def bell_reference(style: EntanglementStyle) -> np.ndarray:
    """The four two-qubit Bell states written out from their definitions.

    Ordering: index b = q_A + 2*q_B with agent A on qubit 0.
    """
    s = 1.0 / np.sqrt(2.0)
    amps = np.zeros(4, dtype=np.complex128)
    if style is EntanglementStyle.PHI_PLUS:
        amps[0b00], amps[0b11] = s, s
    elif style is EntanglementStyle.PHI_MINUS:
        amps[0b00], amps[0b11] = s, -s
    elif style is EntanglementStyle.PSI_PLUS:
        # |01> means A=0, B=1 -> index with bit 1 set.
        amps[0b10], amps[0b01] = s, s
    elif style is EntanglementStyle.PSI_MINUS:
        amps[0b10], amps[0b01] = s, -s
    else:
        amps[0] = 1.0
    return amps


def entangled_state_brute(style: EntanglementStyle,
                          layout: QubitLayout) -> np.ndarray:
    """Entangled input state by dense matrix product of the gate sequence."""
    gates = entangling_gates(style, layout)
    return state_via_matrix(gates, layout.total_qubits)


def central_difference(func, x0: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of a vector."""
    x0 = np.asarray(x0, dtype=float)
    grad = np.zeros_like(x0)
    flat = grad.reshape(-1)
    xf = x0.reshape(-1)
    for i in range(xf.size):
        xp = xf.copy()
        xm = xf.copy()
        xp[i] += h
        xm[i] -= h
        flat[i] = (func(xp.reshape(x0.shape)) - func(xm.reshape(x0.shape))) / (2 * h)
    return grad


def random_gate_sequence(rng: np.random.Generator, num_qubits: int,
                         length: int) -> list[GateOp]:
    """Random circuit over the supported gate set, for norm/unitarity checks."""
    gates = []
    kinds = ["X", "Y", "Z", "H", "RX", "RY", "RZ", "CNOT", "CZ"]
    for _ in range(length):
        kind = kinds[rng.integers(len(kinds))]
        if kind in ("CNOT", "CZ") and num_qubits >= 2:
            q1, q2 = rng.choice(num_qubits, size=2, replace=False)
            gates.append(GateOp(kind, (int(q1), int(q2))))
        elif kind in ("RX", "RY", "RZ"):
            gates.append(GateOp(kind, (int(rng.integers(num_qubits)),),
                                float(rng.uniform(0, 2 * np.pi))))
        else:
            gates.append(GateOp(kind if kind not in ("CNOT", "CZ") else "H",
                                (int(rng.integers(num_qubits)),)))
    return gates
