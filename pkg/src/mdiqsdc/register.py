"""Mutable register wrapper over the immutable state-vector engine.

A :class:`Register` owns the current :class:`~mdiqsdc.qstate.StateVector` of
a group of qubits.  :class:`Qubit` handles stay valid when two registers are
merged, so different parties can hold opposite ends of an entangled pair
while measurements collapse the shared state.
"""

from __future__ import annotations

import numpy as np

from .qstate import (
    BellOutcome,
    Gate,
    StateVector,
    apply_gate,
    bell_measure,
    bell_probabilities,
    measure_z,
    tensor,
)


class Qubit:
    """Handle to one qubit inside a (possibly shared) register."""

    __slots__ = ("register", "index")

    def __init__(self, register: "Register", index: int) -> None:
        self.register = register
        self.index = index

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Qubit(index={self.index}, register={id(self.register):#x})"


class Register:
    """Holds the evolving joint state of a fixed set of qubits."""

    __slots__ = ("state", "qubits")

    def __init__(self, state: StateVector) -> None:
        self.state = state
        self.qubits: list[Qubit] = [Qubit(self, i) for i in range(state.num_qubits)]

    @staticmethod
    def merged(a: "Register", b: "Register") -> "Register":
        """Join two registers into one; all existing handles are rebound."""
        if a is b:
            return a
        merged = Register.__new__(Register)
        merged.state = tensor(a.state, b.state)
        offset = a.state.num_qubits
        for q in b.qubits:
            q.index += offset
        merged.qubits = a.qubits + b.qubits
        for q in merged.qubits:
            q.register = merged
        return merged

    def _own(self, q: Qubit) -> int:
        if q.register is not self:
            raise ValueError("qubit does not belong to this register")
        return q.index

    def apply(self, gate: Gate, q: Qubit) -> None:
        self.state = apply_gate(self.state, gate, self._own(q))

    def measure_z(self, q: Qubit, rng: np.random.Generator) -> int:
        outcome, self.state = measure_z(self.state, self._own(q), rng)
        return outcome

    def bell_measure(self, q1: Qubit, q2: Qubit, rng: np.random.Generator) -> BellOutcome:
        outcome, self.state = bell_measure(self.state, self._own(q1), self._own(q2), rng)
        return outcome

    def bell_probabilities(self, q1: Qubit, q2: Qubit):
        return bell_probabilities(self.state, self._own(q1), self._own(q2))

    def extract(self, q: Qubit, tol: float = 1e-9) -> StateVector:
        """Pure state of one qubit, valid only when it is unentangled.

        Computes the reduced density matrix of the qubit and returns its
        dominant eigenvector; raises if the purity deviates from 1.
        """
        idx = self._own(q)
        t = self.state.tensor_view()
        n = self.state.num_qubits
        rest = tuple(i for i in range(n) if i != idx)
        rho = np.tensordot(t, t.conj(), axes=(rest, rest))
        purity = float(np.trace(rho @ rho).real)
        if abs(purity - 1.0) > tol:
            raise ValueError(f"qubit {idx} is entangled (purity {purity:.6f})")
        eigvals, eigvecs = np.linalg.eigh(rho)
        return StateVector(eigvecs[:, int(np.argmax(eigvals))])
