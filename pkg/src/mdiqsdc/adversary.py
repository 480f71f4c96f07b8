"""Adversary and channel-noise models plugged into a protocol session.

Models are immutable configuration values; :class:`AdversarySession` holds
the per-session runtime state (stored qubits, the leak ledger, the
adversary's own random stream).  Adversary randomness is drawn from a
stream derived from, but separate from, the protocol stream, so a noise
model with probability 0 leaves the protocol transcript bit-identical to
an honest run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

import numpy as np

from .qstate import BELL_OUTCOME_ORDER, BellOutcome, Gate, MeasBasis
from .register import Qubit


class Channel(Enum):
    """The three qubit transfers an attacker can sit on."""

    PA = "pa"            # Alice -> Charlie, first transfer
    PB = "pb"            # Bob -> Charlie
    ENCODED = "encoded"  # Alice -> Charlie, encoded second transfer


ALL_CHANNELS = frozenset(Channel)


class AdversaryModel:
    """Marker base class for adversary configuration values."""

    __slots__ = ()


@dataclass(frozen=True)
class Honest(AdversaryModel):
    pass


@dataclass(frozen=True)
class RandomAnnounceCharlie(AdversaryModel):
    """Charlie skips the measurement and announces uniform random outcomes."""


@dataclass(frozen=True)
class InterceptResendEve(AdversaryModel):
    """Measure-and-resend in a uniformly random Z/X basis on one channel."""

    target: Channel = Channel.PB


@dataclass(frozen=True)
class StoreAndDelayCharlie(AdversaryModel):
    """Charlie stores Alice's qubits, fabricates announcements, and reads
    each encoded bit later by Bell-measuring it against the stored partner."""


@dataclass(frozen=True)
class TamperFinal(AdversaryModel):
    """Flip every Z bit Charlie announces in the final measurement round."""


@dataclass(frozen=True)
class DepolarizingNoise(AdversaryModel):
    """With probability p per transfer, apply a uniformly random Pauli.

    The Y branch is realized as IY, which differs from Pauli-Y only by a
    global phase.  By default noise hits all three transfers; `channels`
    restricts it.
    """

    p: float
    channels: frozenset[Channel] = ALL_CHANNELS

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"depolarizing probability must be in [0, 1], got {self.p}")
        object.__setattr__(self, "channels", frozenset(self.channels))


@dataclass(frozen=True)
class Composite(AdversaryModel):
    """Apply several models; channel transforms run in listed order."""

    models: tuple[AdversaryModel, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "models", tuple(self.models))


@dataclass
class LeakLedger:
    """Adversary-side record of encoded bits actually read."""

    positions: set[int] = field(default_factory=set)

    @property
    def bits_read(self) -> int:
        return len(self.positions)


class CharlieMode(Enum):
    MEASURE = "measure"
    FABRICATE = "fabricate"
    STORE = "store"


_DEPOLARIZING_PAULIS = (Gate.PAULI_X, Gate.IY, Gate.PAULI_Z)

# Bell outcome of measuring (U x I) applied to a psi-minus pair, by the
# Pauli class of U; inverting this map is the store-and-delay readout.
_OUTCOME_CLASS: dict[BellOutcome, str] = {
    BellOutcome.PSI_MINUS: "I",
    BellOutcome.PSI_PLUS: "Z",
    BellOutcome.PHI_MINUS: "X",
    BellOutcome.PHI_PLUS: "Y",
}
_GATE_CLASS: dict[Gate, str] = {
    Gate.PAULI_I: "I",
    Gate.PAULI_Z: "Z",
    Gate.PAULI_X: "X",
    Gate.IY: "Y",
}


def _flatten(model: AdversaryModel) -> Iterator[AdversaryModel]:
    if isinstance(model, Composite):
        for m in model.models:
            yield from _flatten(m)
    else:
        yield model


class AdversarySession:
    """Per-session adversary runtime: applies the configured model."""

    def __init__(self, model: AdversaryModel, rng: np.random.Generator) -> None:
        self.model = model
        self.rng = rng
        self.ledger = LeakLedger()
        self.stored: dict[int, Qubit] = {}
        self.eve_record: list[tuple[Channel, int, MeasBasis, int]] = []
        self._models = tuple(_flatten(model))
        self.charlie_mode = CharlieMode.MEASURE
        for m in self._models:
            if isinstance(m, RandomAnnounceCharlie):
                self.charlie_mode = CharlieMode.FABRICATE
                break
            if isinstance(m, StoreAndDelayCharlie):
                self.charlie_mode = CharlieMode.STORE
                break
        self.tampers_final = any(isinstance(m, TamperFinal) for m in self._models)

    def transform(self, q: Qubit, channel: Channel, position: int) -> Qubit:
        """Apply every configured in-transit attack/noise to one qubit."""
        for m in self._models:
            if isinstance(m, DepolarizingNoise) and channel in m.channels:
                # Two draws regardless of firing keeps streams aligned
                # across noise levels (common random numbers).
                u = self.rng.random()
                k = int(self.rng.integers(3))
                if u < m.p:
                    q.register.apply(_DEPOLARIZING_PAULIS[k], q)
            elif isinstance(m, InterceptResendEve) and channel is m.target:
                basis = MeasBasis.Z if self.rng.integers(2) == 0 else MeasBasis.X
                if basis is MeasBasis.X:
                    q.register.apply(Gate.HADAMARD, q)
                outcome = q.register.measure_z(q, self.rng)
                if basis is MeasBasis.X:
                    q.register.apply(Gate.HADAMARD, q)
                self.eve_record.append((channel, position, basis, outcome))
        return q

    def fabricate_outcome(self) -> BellOutcome:
        return BELL_OUTCOME_ORDER[int(self.rng.integers(4))]

    def store(self, position: int, q: Qubit) -> None:
        self.stored[position] = q

    def read_encoded(self, position: int, encoded: Qubit, u_t: Gate) -> int:
        """Bell-measure (encoded, stored) to recover the encoded bit.

        The measurement reveals the Pauli class of the total operation the
        sender applied; dividing out the publicly known correction leaves
        the bit.  Exact in the noiseless case, best-guess otherwise.
        """
        stored = self.stored[position]
        outcome = encoded.register.bell_measure(encoded, stored, self.rng)
        total_class = _OUTCOME_CLASS[outcome]
        self.ledger.positions.add(position)
        return 0 if total_class == _GATE_CLASS[u_t] else 1

    def guess_bit(self) -> int:
        return int(self.rng.integers(2))


def format_adversary(model: AdversaryModel) -> str:
    """Inverse of :func:`parse_adversary`; used for config echo in reports."""
    if isinstance(model, Honest):
        return "honest"
    if isinstance(model, RandomAnnounceCharlie):
        return "random-charlie"
    if isinstance(model, StoreAndDelayCharlie):
        return "store-delay"
    if isinstance(model, TamperFinal):
        return "tamper-final"
    if isinstance(model, InterceptResendEve):
        return f"intercept-resend:{model.target.value}"
    if isinstance(model, DepolarizingNoise):
        base = f"depolarizing:{model.p:g}"
        if model.channels != ALL_CHANNELS:
            base += ":" + "+".join(sorted(c.value for c in model.channels))
        return base
    if isinstance(model, Composite):
        return ",".join(format_adversary(m) for m in model.models)
    raise ValueError(f"unknown adversary model {model!r}")


def parse_adversary(spec: str) -> AdversaryModel:
    """Parse an adversary spec string.

    Grammar: comma-separated list of models, each one of
    ``honest``, ``random-charlie``, ``store-delay``, ``tamper-final``,
    ``intercept-resend[:pa|pb|encoded]``,
    ``depolarizing:P[:ch+ch...]``.
    """
    parts = [p.strip() for p in spec.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty adversary spec")
    models = [_parse_one(p) for p in parts]
    if len(models) == 1:
        return models[0]
    return Composite(tuple(m for m in models if not isinstance(m, Honest)) or (Honest(),))


def _parse_one(part: str) -> AdversaryModel:
    name, _, rest = part.partition(":")
    if name == "honest":
        return Honest()
    if name == "random-charlie":
        return RandomAnnounceCharlie()
    if name == "store-delay":
        return StoreAndDelayCharlie()
    if name == "tamper-final":
        return TamperFinal()
    if name == "intercept-resend":
        target = Channel(rest) if rest else Channel.PB
        return InterceptResendEve(target=target)
    if name == "depolarizing":
        if not rest:
            raise ValueError("depolarizing needs a probability, e.g. depolarizing:0.05")
        p_str, _, ch_str = rest.partition(":")
        channels = (
            frozenset(Channel(c) for c in ch_str.split("+")) if ch_str else ALL_CHANNELS
        )
        return DepolarizingNoise(p=float(p_str), channels=channels)
    raise ValueError(f"unknown adversary model {part!r}")
