"""Closed-form Bell and teleportation algebra as finite lookup tables.

Everything in this module is exact combinatorics over the four preparation
labels, the four Bell outcomes and the five gates: which single-qubit state
the retained half of a psi-minus pair collapses to for each Bell outcome,
the correction that completes the teleportation, the bit-encoding operation,
the basis rotation that maps X-basis labels onto Z, and bit decoding.

The tables are validated against the dense state-vector engine by
:func:`crosscheck_tables` (also exposed through the CLI ``selftest``
subcommand) and by the test suite.  All statements hold up to a branch
global phase, which carries no physical content.
"""

from __future__ import annotations

import numpy as np

from . import qstate
from .qstate import (
    BELL_OUTCOME_ORDER,
    BellOutcome,
    Gate,
    MeasBasis,
    QUBIT_LABELS,
    QubitLabel,
    StateVector,
)

_ALL_OUTCOMES = frozenset(BELL_OUTCOME_ORDER)

# Collapse of the retained qubit when the other half of a psi-minus pair is
# Bell-measured together with a qubit prepared in `bob` (16 entries, one per
# (label, outcome) pair; phases dropped).
_COLLAPSE: dict[tuple[QubitLabel, BellOutcome], QubitLabel] = {}

# Pauli frame: the retained qubit collapses to frame(outcome) |bob>, up to a
# global phase, for every preparation label.
_PAULI_FRAME: dict[BellOutcome, Gate] = {
    BellOutcome.PSI_MINUS: Gate.PAULI_I,
    BellOutcome.PSI_PLUS: Gate.PAULI_Z,
    BellOutcome.PHI_MINUS: Gate.PAULI_X,
    BellOutcome.PHI_PLUS: Gate.IY,
}

# Action of each frame gate on preparation labels (phases dropped):
# Z fixes Z-labels and swaps X-labels, X swaps Z-labels and fixes X-labels,
# IY swaps both.
_LABEL_ACTION: dict[Gate, dict[QubitLabel, QubitLabel]] = {
    Gate.PAULI_I: {lab: lab for lab in QUBIT_LABELS},
    Gate.PAULI_Z: {
        lab: (lab if lab.basis is MeasBasis.Z else lab.flipped) for lab in QUBIT_LABELS
    },
    Gate.PAULI_X: {
        lab: (lab.flipped if lab.basis is MeasBasis.Z else lab) for lab in QUBIT_LABELS
    },
    Gate.IY: {lab: lab.flipped for lab in QUBIT_LABELS},
}

for _lab in QUBIT_LABELS:
    for _out in BELL_OUTCOME_ORDER:
        _COLLAPSE[(_lab, _out)] = _LABEL_ACTION[_PAULI_FRAME[_out]][_lab]

# Correction completing the teleportation, given the announced basis of the
# receiver's label.  It is the inverse of the frame gate, simplified to the
# identity when the frame acts trivially on that basis up to phase (Z on
# Z-labels, X on X-labels).
_CORRECTION: dict[tuple[BellOutcome, MeasBasis], Gate] = {
    (BellOutcome.PSI_MINUS, MeasBasis.Z): Gate.PAULI_I,
    (BellOutcome.PSI_MINUS, MeasBasis.X): Gate.PAULI_I,
    (BellOutcome.PSI_PLUS, MeasBasis.Z): Gate.PAULI_I,
    (BellOutcome.PSI_PLUS, MeasBasis.X): Gate.PAULI_Z,
    (BellOutcome.PHI_MINUS, MeasBasis.Z): Gate.PAULI_X,
    (BellOutcome.PHI_MINUS, MeasBasis.X): Gate.PAULI_I,
    (BellOutcome.PHI_PLUS, MeasBasis.Z): Gate.IY,
    (BellOutcome.PHI_PLUS, MeasBasis.X): Gate.IY,
}


def collapse_lookup(bob: QubitLabel, outcome: BellOutcome) -> QubitLabel:
    """Label of the retained qubit after the Bell measurement, up to phase."""
    return _COLLAPSE[(bob, outcome)]


def pauli_frame(outcome: BellOutcome) -> Gate:
    """The single gate P with collapse = P|bob> up to phase, for all labels."""
    return _PAULI_FRAME[outcome]


def teleport_correction(outcome: BellOutcome, bob_basis: MeasBasis) -> Gate:
    """Gate mapping the collapsed qubit back onto the receiver's label.

    Valid up to global phase for both labels of the announced basis; the
    simplest such gate is returned (frames that act trivially on the basis
    degrade to the identity).
    """
    return _CORRECTION[(outcome, bob_basis)]


def encode_op(message_bit: int, u_t: Gate) -> tuple[Gate, ...]:
    """Gate sequence for one encoded qubit: correction first, then the bit.

    Bit 0 leaves the state alone, bit 1 applies IY which flips the label
    within its basis.  Identity factors are dropped; an all-identity
    encoding is returned as a single identity gate.
    """
    if message_bit not in (0, 1):
        raise ValueError(f"message bit must be 0 or 1, got {message_bit!r}")
    gates = [u_t]
    if message_bit == 1:
        gates.append(Gate.IY)
    gates = [g for g in gates if g is not Gate.PAULI_I]
    return tuple(gates) if gates else (Gate.PAULI_I,)


def basis_rotation(bob_basis: MeasBasis) -> Gate:
    """Rotation making the final measurement a plain Z-basis measurement."""
    return Gate.HADAMARD if bob_basis is MeasBasis.X else Gate.PAULI_I


def decode_bit(bob: QubitLabel, announced_z: int) -> int:
    """Recover the encoded bit from the announced Z outcome.

    The honest pipeline leaves the qubit in the Z-basis image of the
    receiver's (possibly flipped) label, so the announced bit equals
    bit(label) xor message.
    """
    if announced_z not in (0, 1):
        raise ValueError(f"announced bit must be 0 or 1, got {announced_z!r}")
    return announced_z ^ bob.bit


def allowed_outcomes(a: QubitLabel, b: QubitLabel) -> frozenset[BellOutcome]:
    """Support of the Bell-measurement distribution for a product |a>|b>.

    Same-basis pairs decompose over exactly two Bell states; mixed-basis
    pairs over all four with equal weight.
    """
    if a.basis is not b.basis:
        return _ALL_OUTCOMES
    if a.basis is MeasBasis.Z:
        if a.bit == b.bit:
            return frozenset({BellOutcome.PHI_PLUS, BellOutcome.PHI_MINUS})
        return frozenset({BellOutcome.PSI_PLUS, BellOutcome.PSI_MINUS})
    if a.bit == b.bit:
        return frozenset({BellOutcome.PHI_PLUS, BellOutcome.PSI_PLUS})
    return frozenset({BellOutcome.PHI_MINUS, BellOutcome.PSI_MINUS})


def _collapsed_retained(bob: QubitLabel, outcome: BellOutcome) -> tuple[StateVector, float]:
    """Engine-side collapse: project the pair (1, 2) of psi-minus x |bob>.

    Returns the normalized retained-qubit state and the branch probability.
    """
    joint = qstate.tensor(qstate.make_bell(BellOutcome.PSI_MINUS), qstate.make_single(bob))
    t = joint.tensor_view()
    bell = qstate.make_bell(outcome).amps.reshape(2, 2)
    residual = np.tensordot(bell.conj(), t, axes=((0, 1), (1, 2)))
    prob = float(np.sum(np.abs(residual) ** 2))
    return StateVector(residual / np.sqrt(prob)), prob


def crosscheck_tables() -> list[tuple[str, int, int]]:
    """Validate every finite table against the state-vector engine.

    Returns (check name, cases run, failures) triples; all failure counts
    are zero for a healthy build.  Used by the CLI ``selftest`` subcommand.
    """
    results: list[tuple[str, int, int]] = []

    cases = failures = 0
    for lab in QUBIT_LABELS:
        for out in BELL_OUTCOME_ORDER:
            cases += 1
            collapsed, prob = _collapsed_retained(lab, out)
            expected = qstate.make_single(collapse_lookup(lab, out))
            if abs(prob - 0.25) > 1e-9 or not qstate.equal_up_to_global_phase(
                collapsed, expected
            ):
                failures += 1
    results.append(("collapse table vs engine (16 cases)", cases, failures))

    cases = failures = 0
    for lab in QUBIT_LABELS:
        for out in BELL_OUTCOME_ORDER:
            cases += 1
            collapsed, _ = _collapsed_retained(lab, out)
            framed = qstate.apply_gate(qstate.make_single(lab), pauli_frame(out), 0)
            if not qstate.equal_up_to_global_phase(collapsed, framed):
                failures += 1
    results.append(("pauli frame soundness (16 cases)", cases, failures))

    cases = failures = 0
    for lab in QUBIT_LABELS:
        for out in BELL_OUTCOME_ORDER:
            cases += 1
            collapsed, _ = _collapsed_retained(lab, out)
            fixed = qstate.apply_gate(collapsed, teleport_correction(out, lab.basis), 0)
            if not qstate.equal_up_to_global_phase(fixed, qstate.make_single(lab)):
                failures += 1
    results.append(("teleport correction soundness (16 cases)", cases, failures))

    cases = failures = 0
    for lab in QUBIT_LABELS:
        cases += 1
        flipped = qstate.apply_gate(qstate.make_single(lab), Gate.IY, 0)
        if not qstate.equal_up_to_global_phase(flipped, qstate.make_single(lab.flipped)):
            failures += 1
    results.append(("IY flips labels within basis (4 cases)", cases, failures))

    cases = failures = 0
    for a in QUBIT_LABELS:
        for b in QUBIT_LABELS:
            cases += 1
            joint = qstate.tensor(qstate.make_single(a), qstate.make_single(b))
            probs = qstate.bell_probabilities(joint, 0, 1)
            support = frozenset(o for o, p in probs.items() if p > 1e-9)
            if support != allowed_outcomes(a, b):
                failures += 1
    results.append(("two-state vs four-state supports (16 pairs)", cases, failures))

    cases = failures = 0
    for lab in QUBIT_LABELS:
        for out in BELL_OUTCOME_ORDER:
            for bit in (0, 1):
                cases += 1
                collapsed, _ = _collapsed_retained(lab, out)
                for g in encode_op(bit, teleport_correction(out, lab.basis)):
                    collapsed = qstate.apply_gate(collapsed, g, 0)
                rotated = qstate.apply_gate(collapsed, basis_rotation(lab.basis), 0)
                announced = int(abs(rotated.amps[1]) ** 2 > 0.5)
                if decode_bit(lab, announced) != bit:
                    failures += 1
    results.append(("encode/decode round trip (32 cases)", cases, failures))

    return results
