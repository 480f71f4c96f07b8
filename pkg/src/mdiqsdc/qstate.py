"""Dense state-vector engine for registers of one to four qubits.

Amplitude index i is read as the binary expansion of the qubit values with
qubit 0 most significant: in a 3-qubit register, index 5 = 0b101 means
qubit0=1, qubit1=0, qubit2=1.

Every operation returns a fresh :class:`StateVector`; nothing mutates in
place.  Measurement sampling draws from an explicit ``numpy`` Generator, so a
fixed (state, stream) pair always reproduces the same outcome sequence.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

MAX_QUBITS = 4
NORM_TOL = 1e-9

_SQRT1_2 = 1.0 / np.sqrt(2.0)


class Gate(Enum):
    """Single-qubit gates used by the protocol.

    ``IY`` is the real matrix ((0, 1), (-1, 0)), i.e. i times the Pauli-Y
    matrix; it flips each of the four preparation states within its basis.
    """

    PAULI_I = "i"
    PAULI_X = "x"
    PAULI_Z = "z"
    IY = "iy"
    HADAMARD = "h"

    @property
    def matrix(self) -> np.ndarray:
        return _GATE_MATRICES[self]


_GATE_MATRICES: dict[Gate, np.ndarray] = {
    Gate.PAULI_I: np.eye(2, dtype=complex),
    Gate.PAULI_X: np.array([[0, 1], [1, 0]], dtype=complex),
    Gate.PAULI_Z: np.array([[1, 0], [0, -1]], dtype=complex),
    Gate.IY: np.array([[0, 1], [-1, 0]], dtype=complex),
    Gate.HADAMARD: np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT1_2,
}
for _m in _GATE_MATRICES.values():
    _m.setflags(write=False)


class MeasBasis(Enum):
    Z = "z"
    X = "x"


class QubitLabel(Enum):
    """The four single-qubit preparation states |0>, |1>, |+>, |->."""

    Z0 = "z0"
    Z1 = "z1"
    X_PLUS = "x_plus"
    X_MINUS = "x_minus"

    @property
    def basis(self) -> MeasBasis:
        return _LABEL_BASIS[self]

    @property
    def bit(self) -> int:
        """Bit convention: Z0 and X_PLUS carry 0, Z1 and X_MINUS carry 1."""
        return _LABEL_BIT[self]

    @property
    def flipped(self) -> "QubitLabel":
        """The other label of the same basis (the action of IY, up to phase)."""
        return _LABEL_FLIP[self]


_LABEL_BASIS = {
    QubitLabel.Z0: MeasBasis.Z,
    QubitLabel.Z1: MeasBasis.Z,
    QubitLabel.X_PLUS: MeasBasis.X,
    QubitLabel.X_MINUS: MeasBasis.X,
}
_LABEL_BIT = {
    QubitLabel.Z0: 0,
    QubitLabel.Z1: 1,
    QubitLabel.X_PLUS: 0,
    QubitLabel.X_MINUS: 1,
}
_LABEL_FLIP = {
    QubitLabel.Z0: QubitLabel.Z1,
    QubitLabel.Z1: QubitLabel.Z0,
    QubitLabel.X_PLUS: QubitLabel.X_MINUS,
    QubitLabel.X_MINUS: QubitLabel.X_PLUS,
}

QUBIT_LABELS: tuple[QubitLabel, ...] = (
    QubitLabel.Z0,
    QubitLabel.Z1,
    QubitLabel.X_PLUS,
    QubitLabel.X_MINUS,
)


class BellOutcome(Enum):
    """The four maximally entangled two-qubit basis states.

    phi_plus/phi_minus = (|00> +/- |11>)/sqrt(2),
    psi_plus/psi_minus = (|01> +/- |10>)/sqrt(2).
    """

    PHI_PLUS = "phi_plus"
    PHI_MINUS = "phi_minus"
    PSI_PLUS = "psi_plus"
    PSI_MINUS = "psi_minus"


#: Fixed outcome order used for deterministic Bell-measurement sampling.
BELL_OUTCOME_ORDER: tuple[BellOutcome, ...] = (
    BellOutcome.PHI_PLUS,
    BellOutcome.PHI_MINUS,
    BellOutcome.PSI_PLUS,
    BellOutcome.PSI_MINUS,
)

_BELL_AMPS: dict[BellOutcome, np.ndarray] = {
    BellOutcome.PHI_PLUS: np.array([_SQRT1_2, 0, 0, _SQRT1_2], dtype=complex),
    BellOutcome.PHI_MINUS: np.array([_SQRT1_2, 0, 0, -_SQRT1_2], dtype=complex),
    BellOutcome.PSI_PLUS: np.array([0, _SQRT1_2, _SQRT1_2, 0], dtype=complex),
    BellOutcome.PSI_MINUS: np.array([0, _SQRT1_2, -_SQRT1_2, 0], dtype=complex),
}
for _v in _BELL_AMPS.values():
    _v.setflags(write=False)

_LABEL_AMPS: dict[QubitLabel, np.ndarray] = {
    QubitLabel.Z0: np.array([1, 0], dtype=complex),
    QubitLabel.Z1: np.array([0, 1], dtype=complex),
    QubitLabel.X_PLUS: np.array([_SQRT1_2, _SQRT1_2], dtype=complex),
    QubitLabel.X_MINUS: np.array([_SQRT1_2, -_SQRT1_2], dtype=complex),
}
for _v in _LABEL_AMPS.values():
    _v.setflags(write=False)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized complex amplitude vector over 1..4 qubits.

    Immutable after construction: the amplitude buffer is copied and marked
    read-only.  Construction rejects non-finite amplitudes, sizes that are
    not a power of two in range, and vectors whose squared norm deviates
    from 1 by more than ``NORM_TOL``.
    """

    amps: np.ndarray

    def __post_init__(self) -> None:
        a = np.array(self.amps, dtype=complex).reshape(-1)
        if a.size not in (2, 4, 8, 16):
            raise ValueError(
                f"amplitude vector of length {a.size} is not a register of 1..{MAX_QUBITS} qubits"
            )
        if not np.all(np.isfinite(a.view(np.float64))):
            raise ValueError("amplitudes must be finite")
        norm2 = float(np.sum(np.abs(a) ** 2))
        if abs(norm2 - 1.0) > NORM_TOL:
            raise ValueError(f"state not normalized: sum |a|^2 = {norm2!r}")
        a.setflags(write=False)
        object.__setattr__(self, "amps", a)

    @property
    def num_qubits(self) -> int:
        return int(self.amps.size.bit_length() - 1)

    def tensor_view(self) -> np.ndarray:
        """Read-only view shaped (2,)*num_qubits, axis k = qubit k."""
        return self.amps.reshape((2,) * self.num_qubits)


def _check_index(s: StateVector, qubit: int) -> None:
    if not 0 <= qubit < s.num_qubits:
        raise IndexError(f"qubit {qubit} out of range for {s.num_qubits}-qubit register")


def make_single(label: QubitLabel) -> StateVector:
    """Return the normalized 1-qubit state for a preparation label."""
    return StateVector(_LABEL_AMPS[label])


def make_bell(which: BellOutcome) -> StateVector:
    """Return the 2-qubit maximally entangled state for a Bell tag."""
    return StateVector(_BELL_AMPS[which])


def tensor(a: StateVector, b: StateVector) -> StateVector:
    """Kronecker product with qubit ordering a-then-b."""
    if a.num_qubits + b.num_qubits > MAX_QUBITS:
        raise ValueError(
            f"register capacity exceeded: {a.num_qubits}+{b.num_qubits} > {MAX_QUBITS} qubits"
        )
    return StateVector(np.kron(a.amps, b.amps))


def apply_gate(s: StateVector, g: Gate, qubit: int) -> StateVector:
    """Apply a single-qubit unitary at the given position."""
    _check_index(s, qubit)
    t = np.tensordot(g.matrix, s.tensor_view(), axes=(1, qubit))
    return StateVector(np.moveaxis(t, 0, qubit).reshape(-1))


def measure_z(s: StateVector, qubit: int, rng: np.random.Generator) -> tuple[int, StateVector]:
    """Projective Z-basis measurement of one qubit.

    The outcome is sampled by the Born rule from a single uniform draw
    (outcome 0 iff u < P(0)); the returned state is the renormalized
    post-measurement state.
    """
    _check_index(s, qubit)
    t = s.tensor_view()
    axes = tuple(i for i in range(s.num_qubits) if i != qubit)
    probs = np.sum(np.abs(t) ** 2, axis=axes)
    outcome = 0 if rng.random() < probs[0] else 1
    idx = [slice(None)] * s.num_qubits
    idx[qubit] = 1 - outcome
    post = np.array(t, dtype=complex)
    post[tuple(idx)] = 0.0
    post /= np.sqrt(probs[outcome])
    return outcome, StateVector(post.reshape(-1))


def _bell_residual(s: StateVector, q1: int, q2: int, which: BellOutcome) -> np.ndarray:
    """Contract <bell| onto the (q1, q2) pair; returns the unnormalized rest."""
    b = _BELL_AMPS[which].reshape(2, 2)
    return np.tensordot(b.conj(), s.tensor_view(), axes=((0, 1), (q1, q2)))


def bell_probabilities(s: StateVector, q1: int, q2: int) -> Mapping[BellOutcome, float]:
    """Exact Born probabilities for a Bell-basis measurement of pair (q1, q2)."""
    _check_index(s, q1)
    _check_index(s, q2)
    if q1 == q2:
        raise ValueError("Bell measurement needs two distinct qubits")
    return {
        which: float(np.sum(np.abs(_bell_residual(s, q1, q2, which)) ** 2))
        for which in BELL_OUTCOME_ORDER
    }


def bell_measure(
    s: StateVector, q1: int, q2: int, rng: np.random.Generator
) -> tuple[BellOutcome, StateVector]:
    """Projective Bell-basis measurement of the pair (q1, q2).

    The outcome is sampled by walking the cumulative probabilities in
    ``BELL_OUTCOME_ORDER`` against one uniform draw.  In the returned state
    the measured pair is collapsed onto the outcome Bell state; the branch
    carries whatever global phase the projection produces.
    """
    _check_index(s, q1)
    _check_index(s, q2)
    if q1 == q2:
        raise ValueError("Bell measurement needs two distinct qubits")
    residuals = {which: _bell_residual(s, q1, q2, which) for which in BELL_OUTCOME_ORDER}
    probs = [float(np.sum(np.abs(residuals[w]) ** 2)) for w in BELL_OUTCOME_ORDER]
    u = rng.random()
    acc = 0.0
    outcome = BELL_OUTCOME_ORDER[-1]
    for which, p in zip(BELL_OUTCOME_ORDER, probs):
        acc += p
        if u < acc:
            outcome = which
            break
    r = residuals[outcome]
    r = r / np.linalg.norm(r)
    post = np.multiply.outer(_BELL_AMPS[outcome].reshape(2, 2), r)
    post = np.moveaxis(post, (0, 1), (q1, q2))
    return outcome, StateVector(post.reshape(-1))


def equal_up_to_global_phase(a: StateVector, b: StateVector, tol: float = NORM_TOL) -> bool:
    """True iff |<a|b>| >= 1 - tol, i.e. the states differ only by a phase."""
    if a.num_qubits != b.num_qubits:
        raise ValueError("cannot compare states of different register sizes")
    return bool(abs(np.vdot(a.amps, b.amps)) >= 1.0 - tol)


def bloch_vector(s: StateVector) -> np.ndarray:
    """(<X>, <Y>, <Z>) of a single-qubit pure state."""
    if s.num_qubits != 1:
        raise ValueError("Bloch vector is defined for 1-qubit states only")
    a, b = s.amps
    return np.array(
        [
            2.0 * (np.conj(a) * b).real,
            2.0 * (np.conj(a) * b).imag,
            float(abs(a) ** 2 - abs(b) ** 2),
        ]
    )


def bloch_accumulate(samples: Sequence[StateVector]) -> np.ndarray:
    """Averaged Bloch vector of an empirical mixture of 1-qubit states."""
    if len(samples) == 0:
        raise ValueError("cannot accumulate an empty sample set")
    return np.mean([bloch_vector(s) for s in samples], axis=0)
