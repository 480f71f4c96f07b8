"""Three-party session orchestration for direct quantum communication.

A session involves Alice (sender), Bob (receiver) and an untrusted middle
party, Charlie, who performs every quantum measurement.  One block session
runs six stages:

1. Alice builds N+t0 entangled pairs, keeps one half of each and interleaves
   t1 decoy singles into the other halves at random slots; Bob builds
   random singles for every slot.
2. Both send their sequences to Charlie, who Bell-measures each slot pair
   and announces the outcomes.  This teleports Bob's state onto Alice's
   retained half, up to a correction determined by the announcement.
3. Alice and Bob reveal the decoy slots.  Same-basis pairs can only produce
   two of the four outcomes, so forbidden announcements measure tampering;
   the session aborts above the configured threshold.
4. Bob announces the bases of the surviving slots.  Alice applies the
   teleportation correction plus the message encoding (identity for 0, a
   basis flip for 1) to each retained qubit; t0 random integrity bits are
   embedded at secret slots.
5. Alice sends the encoded qubits to Charlie, who rotates X-basis slots
   onto Z, measures, and announces the bits.  Bob decodes by comparing
   against his secret preparation labels.
6. Alice reveals the integrity slots; mismatches above the threshold flag
   the delivered message as tampered.

Variants: ``LINEAR_OPTICS`` announces only the psi outcomes (phi outcomes
give no detector click and the slot is discarded); ``DET_QKD`` shrinks the
block to one qubit per round, turning the scheme into deterministic key
distribution whose checks only bind after the fact.

Determinism: all protocol randomness comes from one ``numpy`` Generator
seeded with the config seed; adversary randomness comes from a substream
derived via :func:`splitmix64`, so identical configs give byte-identical
transcripts and zero-strength noise models match honest runs exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .adversary import (
    AdversaryModel,
    AdversarySession,
    Channel,
    CharlieMode,
    Honest,
    format_adversary,
)
from .bellcode import (
    allowed_outcomes,
    basis_rotation,
    decode_bit,
    encode_op,
    teleport_correction,
)
from .qstate import (
    BellOutcome,
    MeasBasis,
    QUBIT_LABELS,
    QubitLabel,
    make_bell,
    make_single,
)
from .register import Qubit, Register

ALICE = "alice"
BOB = "bob"

_MASK64 = (1 << 64) - 1
_ADVERSARY_SALT = 0x6A09E667F3BCC909


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer: the documented 64-bit mixer for seed derivation."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


class Variant(Enum):
    FULL_BELL = "full"
    LINEAR_OPTICS = "linear"
    DET_QKD = "detqkd"


class Stage(Enum):
    SECURITY_CHECK = "security_check"
    INTEGRITY_CHECK = "integrity_check"


class Verdict(Enum):
    PASS = "pass"
    ABORT = "abort"


def threshold_verdict(rate: float, threshold: float) -> Verdict:
    """Abort iff the rate strictly exceeds the threshold; ties pass."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"error rate must be in [0, 1], got {rate}")
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    return Verdict.ABORT if rate > threshold else Verdict.PASS


@dataclass(frozen=True)
class ProtocolConfig:
    """Session parameters; validated on construction."""

    n_message: int
    t0: int
    t1: int
    security_threshold: float = 0.11
    integrity_threshold: float = 0.11
    variant: Variant = Variant.FULL_BELL
    adversary: AdversaryModel = field(default_factory=Honest)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_message < 1:
            raise ValueError(f"n_message must be >= 1, got {self.n_message}")
        if self.t0 < 0 or self.t1 < 0:
            raise ValueError("t0 and t1 must be non-negative")
        for name in ("security_threshold", "integrity_threshold"):
            value = getattr(self, name)
            if not 0.0 < value < 0.5:
                raise ValueError(f"{name} must lie in (0, 0.5), got {value}")
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must be a 64-bit non-negative integer")
        if not isinstance(self.variant, Variant):
            raise ValueError(f"variant must be a Variant, got {self.variant!r}")
        if not isinstance(self.adversary, AdversaryModel):
            raise ValueError(f"adversary must be an AdversaryModel, got {self.adversary!r}")

    @property
    def total_positions(self) -> int:
        return self.n_message + self.t0 + self.t1

    def to_dict(self) -> dict:
        return {
            "n_message": self.n_message,
            "t0": self.t0,
            "t1": self.t1,
            "security_threshold": self.security_threshold,
            "integrity_threshold": self.integrity_threshold,
            "variant": self.variant.value,
            "adversary": format_adversary(self.adversary),
            "seed": self.seed,
        }


# --- Transcript events -----------------------------------------------------

@dataclass(frozen=True)
class QubitSent:
    party: str
    position: int


@dataclass(frozen=True)
class BellAnnounced:
    position: int
    outcome: Optional[BellOutcome]  # None encodes "no click"


@dataclass(frozen=True)
class BasisAnnounced:
    position: int
    basis: MeasBasis


@dataclass(frozen=True)
class CheckReveal:
    party: str
    position: int
    label: QubitLabel


@dataclass(frozen=True)
class ZAnnounced:
    position: int
    bit: int


@dataclass(frozen=True)
class RandomBitsReveal:
    positions: tuple[int, ...]
    bits: tuple[int, ...]


@dataclass(frozen=True)
class Abort:
    stage: Stage
    error_rate: float


Event = Union[
    QubitSent, BellAnnounced, BasisAnnounced, CheckReveal, ZAnnounced, RandomBitsReveal, Abort
]


class Transcript:
    """Ordered record of every classical announcement and qubit transfer."""

    def __init__(self) -> None:
        self.events: list[Event] = []

    def append(self, event: Event) -> None:
        self.events.append(event)

    def __iter__(self):
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def of_type(self, cls) -> list:
        return [e for e in self.events if isinstance(e, cls)]

    def to_dicts(self) -> list[dict]:
        return [_event_dict(e) for e in self.events]


def _event_dict(e: Event) -> dict:
    if isinstance(e, QubitSent):
        return {"type": "qubit_sent", "party": e.party, "position": e.position}
    if isinstance(e, BellAnnounced):
        return {
            "type": "bell_announced",
            "position": e.position,
            "outcome": e.outcome.value if e.outcome is not None else None,
        }
    if isinstance(e, BasisAnnounced):
        return {"type": "basis_announced", "position": e.position, "basis": e.basis.value}
    if isinstance(e, CheckReveal):
        return {
            "type": "check_reveal",
            "party": e.party,
            "position": e.position,
            "label": e.label.value,
        }
    if isinstance(e, ZAnnounced):
        return {"type": "z_announced", "position": e.position, "bit": e.bit}
    if isinstance(e, RandomBitsReveal):
        return {
            "type": "random_bits_reveal",
            "positions": list(e.positions),
            "bits": list(e.bits),
        }
    if isinstance(e, Abort):
        return {"type": "abort", "stage": e.stage.value, "error_rate": e.error_rate}
    raise TypeError(f"unknown event {e!r}")


# --- Session report ----------------------------------------------------------

@dataclass(frozen=True)
class SessionReport:
    """Outcome summary of one session.

    ``decoded_message`` is present iff the session completed without abort;
    ``conclusive_fraction`` is filled for the linear-optics variant only;
    the key fields are filled by the key-distribution variant only.
    ``leaked_bits`` counts adversary reads of secret payload bits (message
    or key positions); integrity bits revealed later are not counted.
    """

    security_error_rate: float
    integrity_error_rate: Optional[float]
    aborted_at: Optional[Stage]
    decoded_message: Optional[tuple[int, ...]]
    conclusive_fraction: Optional[float]
    key_alice: Optional[tuple[int, ...]]
    key_bob: Optional[tuple[int, ...]]
    leaked_bits: int

    def to_dict(self) -> dict:
        return {
            "security_error_rate": self.security_error_rate,
            "integrity_error_rate": self.integrity_error_rate,
            "aborted_at": self.aborted_at.value if self.aborted_at else None,
            "decoded_message": _bits_str(self.decoded_message),
            "conclusive_fraction": self.conclusive_fraction,
            "key_alice": _bits_str(self.key_alice),
            "key_bob": _bits_str(self.key_bob),
            "leaked_bits": self.leaked_bits,
        }


def _bits_str(bits: Optional[tuple[int, ...]]) -> Optional[str]:
    return None if bits is None else "".join(str(b) for b in bits)


# --- Party state -------------------------------------------------------------

@dataclass
class AliceState:
    """Alice's private bookkeeping: retained halves, decoy slots and labels."""

    retained: dict[int, Qubit]
    check_labels: dict[int, QubitLabel]
    epr_positions: tuple[int, ...]
    check_positions: tuple[int, ...]


@dataclass
class BobState:
    """Bob's private label record; nothing here is announced until asked."""

    labels: dict[int, QubitLabel]
    qubits: dict[int, Qubit]


@dataclass(frozen=True)
class EncodingPlan:
    """Alice's step-4 assignment of message and integrity bits to slots."""

    surviving: tuple[int, ...]
    message_positions: tuple[int, ...]
    integrity_positions: tuple[int, ...]
    integrity_bits: tuple[int, ...]
    bits: Mapping[int, int]


def _random_label(rng: np.random.Generator) -> QubitLabel:
    return QUBIT_LABELS[int(rng.integers(4))]


def alice_prepare(cfg: ProtocolConfig, rng: np.random.Generator) -> tuple[list[Qubit], AliceState]:
    """Build Alice's outgoing sequence: pair halves plus interleaved decoys.

    Draw order (fixed for reproducibility): one permutation choosing the t1
    decoy slots, then one label per decoy slot in ascending position order.
    """
    total = cfg.total_positions
    check_positions = tuple(sorted(int(p) for p in rng.permutation(total)[: cfg.t1]))
    check_set = set(check_positions)
    transit: list[Qubit] = []
    retained: dict[int, Qubit] = {}
    check_labels: dict[int, QubitLabel] = {}
    epr_positions: list[int] = []
    for p in range(total):
        if p in check_set:
            check_labels[p] = _random_label(rng)
            reg = Register(make_single(check_labels[p]))
            transit.append(reg.qubits[0])
        else:
            reg = Register(make_bell(BellOutcome.PSI_MINUS))
            retained[p] = reg.qubits[0]
            transit.append(reg.qubits[1])
            epr_positions.append(p)
    state = AliceState(
        retained=retained,
        check_labels=check_labels,
        epr_positions=tuple(epr_positions),
        check_positions=check_positions,
    )
    return transit, state


def bob_prepare(length: int, rng: np.random.Generator) -> tuple[list[Qubit], BobState]:
    """Bob's sequence: one uniformly random preparation label per slot."""
    if length < 1:
        raise ValueError("sequence length must be >= 1")
    labels: dict[int, QubitLabel] = {}
    qubits: dict[int, Qubit] = {}
    out: list[Qubit] = []
    for p in range(length):
        labels[p] = _random_label(rng)
        reg = Register(make_single(labels[p]))
        qubits[p] = reg.qubits[0]
        out.append(reg.qubits[0])
    return out, BobState(labels=labels, qubits=qubits)


def charlie_bell_round(
    q_a: Qubit,
    q_b: Qubit,
    variant: Variant,
    adversary: AdversarySession,
    rng: np.random.Generator,
    position: int,
) -> Optional[BellOutcome]:
    """Charlie's announcement for one slot pair.

    Honest mode merges the two registers and projects onto the Bell basis.
    Fabricating modes announce a uniform guess without measuring; the
    store-and-delay mode additionally keeps Alice's qubit.  Under the
    linear-optics variant only psi outcomes are announced; phi outcomes
    produce no detector click (None).
    """
    if adversary.charlie_mode is CharlieMode.MEASURE:
        reg = Register.merged(q_a.register, q_b.register)
        outcome = reg.bell_measure(q_a, q_b, rng)
    else:
        if adversary.charlie_mode is CharlieMode.STORE:
            adversary.store(position, q_a)
        outcome = adversary.fabricate_outcome()
    if variant is Variant.LINEAR_OPTICS and outcome in (
        BellOutcome.PHI_PLUS,
        BellOutcome.PHI_MINUS,
    ):
        return None
    return outcome


def security_check(
    announced: Mapping[int, Optional[BellOutcome]],
    alice_reveals: Mapping[int, QubitLabel],
    bob_reveals: Mapping[int, QubitLabel],
) -> float:
    """Step-3 statistic over the revealed decoy slots.

    Counts only same-basis pairs with a conclusive announcement; an error is
    an announcement outside the two-outcome support of the pair.  Mixed
    bases admit all four outcomes and carry no signal, so they are
    discarded.  Returns 0.0 when nothing is countable.
    """
    if set(alice_reveals) != set(bob_reveals):
        raise ValueError("alice and bob reveals cover different positions")
    missing = set(alice_reveals) - set(announced)
    if missing:
        raise ValueError(f"no announcement for revealed positions {sorted(missing)}")
    counted = errors = 0
    for p, a_label in alice_reveals.items():
        b_label = bob_reveals[p]
        outcome = announced[p]
        if outcome is None or a_label.basis is not b_label.basis:
            continue
        counted += 1
        if outcome not in allowed_outcomes(a_label, b_label):
            errors += 1
    return errors / counted if counted else 0.0


def alice_encode(
    alice: AliceState,
    t0: int,
    message_bits: Sequence[int],
    announced: Mapping[int, Optional[BellOutcome]],
    bases: Mapping[int, MeasBasis],
    rng: np.random.Generator,
) -> EncodingPlan:
    """Apply correction-plus-message gates to every surviving retained qubit.

    Surviving slots are the pair slots with a conclusive announcement.  t0
    of them (all, if fewer survive) are picked uniformly at random for
    integrity bits; message bits fill the rest in slot order.  Draw order:
    one permutation for the integrity choice, then one bit per integrity
    slot ascending.
    """
    surviving = tuple(p for p in alice.epr_positions if announced.get(p) is not None)
    t0_placed = min(t0, len(surviving))
    picks = rng.permutation(len(surviving))[:t0_placed]
    integrity_positions = tuple(sorted(surviving[int(i)] for i in picks))
    integrity_set = set(integrity_positions)
    message_positions = tuple(p for p in surviving if p not in integrity_set)
    if len(message_bits) < len(message_positions):
        raise ValueError(
            f"message of {len(message_bits)} bits cannot fill {len(message_positions)} slots"
        )
    bits: dict[int, int] = {}
    for p in integrity_positions:
        bits[p] = int(rng.integers(2))
    for p, bit in zip(message_positions, message_bits):
        bits[p] = int(bit)
    for p in surviving:
        u_t = teleport_correction(announced[p], bases[p])
        q = alice.retained[p]
        for gate in encode_op(bits[p], u_t):
            q.register.apply(gate, q)
    return EncodingPlan(
        surviving=surviving,
        message_positions=message_positions,
        integrity_positions=integrity_positions,
        integrity_bits=tuple(bits[p] for p in integrity_positions),
        bits=bits,
    )


def charlie_final_round(
    q: Qubit,
    basis: MeasBasis,
    adversary: AdversarySession,
    rng: np.random.Generator,
    position: int,
    announced_outcome: BellOutcome,
) -> int:
    """Charlie's final announcement for one encoded qubit.

    Honest mode rotates the announced basis onto Z and measures.  The
    store-and-delay mode instead reads the encoded bit from the stored
    partner and announces a guess; the tampering mode flips the honest bit.
    """
    if adversary.charlie_mode is CharlieMode.STORE and position in adversary.stored:
        u_t = teleport_correction(announced_outcome, basis)
        adversary.read_encoded(position, q, u_t)
        return adversary.guess_bit()
    q.register.apply(basis_rotation(basis), q)
    bit = q.register.measure_z(q, rng)
    if adversary.tampers_final:
        bit ^= 1
    return bit


def bob_decode(bob: BobState, z_bits: Mapping[int, int]) -> dict[int, int]:
    """Decode every announced bit against Bob's secret labels."""
    missing = set(z_bits) - set(bob.labels)
    if missing:
        raise ValueError(f"announcements for unknown positions {sorted(missing)}")
    return {p: decode_bit(bob.labels[p], z) for p, z in z_bits.items()}


def integrity_check(
    decoded: Mapping[int, int],
    integrity_positions: Sequence[int],
    integrity_bits: Sequence[int],
) -> float:
    """Step-6 statistic: mismatch rate over the revealed integrity slots."""
    if len(integrity_positions) != len(integrity_bits):
        raise ValueError("integrity positions and bits differ in length")
    missing = [p for p in integrity_positions if p not in decoded]
    if missing:
        raise ValueError(f"no decoded bit for integrity positions {missing}")
    if not integrity_positions:
        return 0.0
    errors = sum(
        1 for p, b in zip(integrity_positions, integrity_bits) if decoded[p] != b
    )
    return errors / len(integrity_positions)


def _session_streams(cfg: ProtocolConfig) -> tuple[np.random.Generator, AdversarySession]:
    rng = np.random.default_rng(cfg.seed)
    adv_rng = np.random.default_rng(splitmix64(cfg.seed ^ _ADVERSARY_SALT))
    return rng, AdversarySession(cfg.adversary, adv_rng)


def run_qsdc(
    cfg: ProtocolConfig, message: Sequence[int]
) -> tuple[SessionReport, Transcript]:
    """Execute one block session (full-Bell or linear-optics variant).

    The message must supply at least ``n_message`` bits; the linear-optics
    variant carries however many bits survive the no-click discards and the
    report records them.  Aborts at the security or integrity stage leave
    the decoded message absent.
    """
    if cfg.variant is Variant.DET_QKD:
        raise ValueError("run_qsdc handles block variants; use run_det_qkd")
    message = tuple(int(b) for b in message)
    if any(b not in (0, 1) for b in message):
        raise ValueError("message must consist of 0/1 bits")
    if cfg.variant is Variant.FULL_BELL and len(message) != cfg.n_message:
        raise ValueError(
            f"message length {len(message)} != n_message {cfg.n_message}"
        )
    if cfg.variant is Variant.LINEAR_OPTICS and len(message) < cfg.n_message:
        raise ValueError(
            f"message length {len(message)} < n_message {cfg.n_message}"
        )

    rng, adversary = _session_streams(cfg)
    transcript = Transcript()
    total = cfg.total_positions

    # Steps 1-2: preparation, transfers, Bell announcements.
    pa, alice = alice_prepare(cfg, rng)
    pb, bob = bob_prepare(total, rng)
    for p in range(total):
        transcript.append(QubitSent(ALICE, p))
    for p in range(total):
        transcript.append(QubitSent(BOB, p))
    announced: dict[int, Optional[BellOutcome]] = {}
    for p in range(total):
        adversary.transform(pa[p], Channel.PA, p)
        adversary.transform(pb[p], Channel.PB, p)
        outcome = charlie_bell_round(pa[p], pb[p], cfg.variant, adversary, rng, p)
        announced[p] = outcome
        transcript.append(BellAnnounced(p, outcome))

    conclusive_fraction = None
    if cfg.variant is Variant.LINEAR_OPTICS:
        conclusive_fraction = sum(1 for o in announced.values() if o is not None) / total

    # Step 3: security check over the decoy slots.
    for p in alice.check_positions:
        transcript.append(CheckReveal(ALICE, p, alice.check_labels[p]))
    for p in alice.check_positions:
        transcript.append(CheckReveal(BOB, p, bob.labels[p]))
    check_announced = {p: announced[p] for p in alice.check_positions}
    bob_reveals = {p: bob.labels[p] for p in alice.check_positions}
    security_rate = security_check(check_announced, alice.check_labels, bob_reveals)
    if threshold_verdict(security_rate, cfg.security_threshold) is Verdict.ABORT:
        transcript.append(Abort(Stage.SECURITY_CHECK, security_rate))
        report = SessionReport(
            security_error_rate=security_rate,
            integrity_error_rate=None,
            aborted_at=Stage.SECURITY_CHECK,
            decoded_message=None,
            conclusive_fraction=conclusive_fraction,
            key_alice=None,
            key_bob=None,
            leaked_bits=0,
        )
        return report, transcript

    # Step 4: basis announcements and encoding.
    surviving = tuple(p for p in alice.epr_positions if announced[p] is not None)
    bases = {p: bob.labels[p].basis for p in surviving}
    for p in surviving:
        transcript.append(BasisAnnounced(p, bases[p]))
    plan = alice_encode(alice, cfg.t0, message, announced, bases, rng)

    # Step 5: encoded transfer, rotation, final measurement.
    z_bits: dict[int, int] = {}
    for p in surviving:
        transcript.append(QubitSent(ALICE, p))
        q = alice.retained[p]
        adversary.transform(q, Channel.ENCODED, p)
        bit = charlie_final_round(q, bases[p], adversary, rng, p, announced[p])
        z_bits[p] = bit
        transcript.append(ZAnnounced(p, bit))

    # Step 6: decode and integrity check.
    decoded = bob_decode(bob, z_bits)
    transcript.append(RandomBitsReveal(plan.integrity_positions, plan.integrity_bits))
    integrity_rate = integrity_check(decoded, plan.integrity_positions, plan.integrity_bits)
    leaked = len(adversary.ledger.positions & set(plan.message_positions))
    if threshold_verdict(integrity_rate, cfg.integrity_threshold) is Verdict.ABORT:
        transcript.append(Abort(Stage.INTEGRITY_CHECK, integrity_rate))
        report = SessionReport(
            security_error_rate=security_rate,
            integrity_error_rate=integrity_rate,
            aborted_at=Stage.INTEGRITY_CHECK,
            decoded_message=None,
            conclusive_fraction=conclusive_fraction,
            key_alice=None,
            key_bob=None,
            leaked_bits=leaked,
        )
        return report, transcript

    report = SessionReport(
        security_error_rate=security_rate,
        integrity_error_rate=integrity_rate,
        aborted_at=None,
        decoded_message=tuple(decoded[p] for p in plan.message_positions),
        conclusive_fraction=conclusive_fraction,
        key_alice=None,
        key_bob=None,
        leaked_bits=leaked,
    )
    return report, transcript


def run_det_qkd(cfg: ProtocolConfig) -> tuple[SessionReport, Transcript]:
    """Execute the block-size-1 degeneration: deterministic key distribution.

    Every round completes encoding and the final measurement before the next
    round starts, so the security and integrity statistics only bind after
    all n+t0+t1 rounds.  Round types come from a uniformly shuffled deck of
    exactly n+t0 pair rounds and t1 decoy rounds, making each round a pair
    round with marginal probability (n+t0)/(n+t0+t1).
    """
    if cfg.variant is not Variant.DET_QKD:
        raise ValueError("run_det_qkd requires the detqkd variant")
    rng, adversary = _session_streams(cfg)
    transcript = Transcript()
    total = cfg.total_positions
    epr_mask = rng.permutation(total) < (cfg.n_message + cfg.t0)

    alice_bits: dict[int, int] = {}
    alice_check_labels: dict[int, QubitLabel] = {}
    bob_labels: dict[int, QubitLabel] = {}
    decoded: dict[int, int] = {}
    announced: dict[int, Optional[BellOutcome]] = {}

    for p in range(total):
        if epr_mask[p]:
            reg = Register(make_bell(BellOutcome.PSI_MINUS))
            retained, q_a = reg.qubits
        else:
            alice_check_labels[p] = _random_label(rng)
            q_a = Register(make_single(alice_check_labels[p])).qubits[0]
            retained = None
        bob_labels[p] = _random_label(rng)
        q_b = Register(make_single(bob_labels[p])).qubits[0]

        transcript.append(QubitSent(ALICE, p))
        transcript.append(QubitSent(BOB, p))
        adversary.transform(q_a, Channel.PA, p)
        adversary.transform(q_b, Channel.PB, p)
        outcome = charlie_bell_round(q_a, q_b, cfg.variant, adversary, rng, p)
        announced[p] = outcome
        transcript.append(BellAnnounced(p, outcome))
        basis = bob_labels[p].basis
        transcript.append(BasisAnnounced(p, basis))

        if retained is not None:
            bit = int(rng.integers(2))
            alice_bits[p] = bit
            u_t = teleport_correction(outcome, basis)
            for gate in encode_op(bit, u_t):
                retained.register.apply(gate, retained)
            transcript.append(QubitSent(ALICE, p))
            adversary.transform(retained, Channel.ENCODED, p)
            z = charlie_final_round(retained, basis, adversary, rng, p, outcome)
            transcript.append(ZAnnounced(p, z))
            decoded[p] = decode_bit(bob_labels[p], z)

    # Post-session bookkeeping: integrity subset first (a private choice),
    # then the public security reveals.
    epr_positions = [p for p in range(total) if epr_mask[p]]
    picks = rng.permutation(len(epr_positions))[: cfg.t0]
    integrity_positions = tuple(sorted(epr_positions[int(i)] for i in picks))
    key_positions = tuple(p for p in epr_positions if p not in set(integrity_positions))
    leaked = len(adversary.ledger.positions & set(key_positions))

    check_positions = [p for p in range(total) if not epr_mask[p]]
    for p in check_positions:
        transcript.append(CheckReveal(ALICE, p, alice_check_labels[p]))
    for p in check_positions:
        transcript.append(CheckReveal(BOB, p, bob_labels[p]))
    security_rate = security_check(
        {p: announced[p] for p in check_positions},
        alice_check_labels,
        {p: bob_labels[p] for p in check_positions},
    )
    if threshold_verdict(security_rate, cfg.security_threshold) is Verdict.ABORT:
        transcript.append(Abort(Stage.SECURITY_CHECK, security_rate))
        report = SessionReport(
            security_error_rate=security_rate,
            integrity_error_rate=None,
            aborted_at=Stage.SECURITY_CHECK,
            decoded_message=None,
            conclusive_fraction=None,
            key_alice=None,
            key_bob=None,
            leaked_bits=leaked,
        )
        return report, transcript

    integrity_bits = tuple(alice_bits[p] for p in integrity_positions)
    transcript.append(RandomBitsReveal(integrity_positions, integrity_bits))
    integrity_rate = integrity_check(decoded, integrity_positions, integrity_bits)
    if threshold_verdict(integrity_rate, cfg.integrity_threshold) is Verdict.ABORT:
        transcript.append(Abort(Stage.INTEGRITY_CHECK, integrity_rate))
        report = SessionReport(
            security_error_rate=security_rate,
            integrity_error_rate=integrity_rate,
            aborted_at=Stage.INTEGRITY_CHECK,
            decoded_message=None,
            conclusive_fraction=None,
            key_alice=None,
            key_bob=None,
            leaked_bits=leaked,
        )
        return report, transcript

    report = SessionReport(
        security_error_rate=security_rate,
        integrity_error_rate=integrity_rate,
        aborted_at=None,
        decoded_message=None,
        conclusive_fraction=None,
        key_alice=tuple(alice_bits[p] for p in key_positions),
        key_bob=tuple(decoded[p] for p in key_positions),
        leaked_bits=leaked,
    )
    return report, transcript
