"""Entangled input-state preparation coupling the agents' qubit blocks.

Agent n (1-based) owns global qubits (n-1)*D .. (n-1)*D + D - 1.  For each
local index d the preparation applies, in order: an X layer (which agents get
an X depends on the style), H on agent 1's qubit, then a CNOT fan-out from
agent 1's qubit to every other agent's qubit at the same d.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .qsim import GateOp, StateVector, apply_circuit, zero_state


class EntanglementStyle(enum.Enum):
    PHI_PLUS = "phi+"
    PHI_MINUS = "phi-"
    PSI_PLUS = "psi+"
    PSI_MINUS = "psi-"
    NONE = "none"

    @classmethod
    def parse(cls, text: str) -> "EntanglementStyle":
        for style in cls:
            if style.value == text.lower():
                return style
        raise ValueError(f"unknown entanglement style: {text!r}")


@dataclass(frozen=True)
class QubitLayout:
    """N agents with D qubits each; N*D total."""

    num_agents: int
    qubits_per_agent: int

    def __post_init__(self):
        if self.num_agents < 2:
            raise ValueError("need at least 2 agents")
        if self.qubits_per_agent < 1:
            raise ValueError("need at least 1 qubit per agent")

    @property
    def total_qubits(self) -> int:
        return self.num_agents * self.qubits_per_agent

    def block(self, agent: int) -> range:
        """Zero-based agent index -> its global qubit range."""
        d = self.qubits_per_agent
        return range(agent * d, (agent + 1) * d)


def delta(n: int, d: int, layout: QubitLayout) -> int:
    """Global (zero-based) qubit index for agent n, qubit d, both 1-based."""
    if not 1 <= n <= layout.num_agents:
        raise ValueError(f"agent index {n} out of range")
    if not 1 <= d <= layout.qubits_per_agent:
        raise ValueError(f"qubit index {d} out of range")
    return (n - 1) * layout.qubits_per_agent + (d - 1)


def entangling_gates(style: EntanglementStyle, layout: QubitLayout) -> list[GateOp]:
    """Gate sequence preparing the coupled input state from |0...0>."""
    if style is EntanglementStyle.NONE:
        return []
    gates: list[GateOp] = []
    n_agents = layout.num_agents
    for d in range(1, layout.qubits_per_agent + 1):
        head = delta(1, d, layout)
        if style is EntanglementStyle.PHI_MINUS:
            gates.append(GateOp("X", (head,)))
        elif style is EntanglementStyle.PSI_PLUS:
            for k in range(2, n_agents + 1):
                gates.append(GateOp("X", (delta(k, d, layout),)))
        elif style is EntanglementStyle.PSI_MINUS:
            for k in range(1, n_agents + 1):
                gates.append(GateOp("X", (delta(k, d, layout),)))
        gates.append(GateOp("H", (head,)))
        for k in range(2, n_agents + 1):
            gates.append(GateOp("CNOT", (head, delta(k, d, layout))))
    return gates


def prepare_entangled_input(style: EntanglementStyle,
                            layout: QubitLayout) -> StateVector:
    """Entangled (or bare zero) input state over all N*D qubits."""
    state = zero_state(layout.total_qubits)
    return apply_circuit(state, entangling_gates(style, layout))
