"""Statistics over many sessions: parameter sweeps, tomography, verdicts.

The seed policy is documented and fully deterministic: the stream for
session ``j`` of grid point ``i`` is seeded with

    splitmix64(base_seed ^ splitmix64(((i + 1) << 32) | j))

so independent points and sessions never share a stream and an identical
sweep spec reproduces bit-identical results.  Sessions are independent and
aggregation is order-free, so a sweep may be parallelized externally.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .adversary import AdversaryModel, DepolarizingNoise, parse_adversary
from .protocol import (
    ProtocolConfig,
    Variant,
    Verdict,
    alice_prepare,
    bob_prepare,
    run_det_qkd,
    run_qsdc,
    splitmix64,
    threshold_verdict,
)
from .qstate import Gate, StateVector, bloch_accumulate, make_single

__all__ = [
    "SweepSpec",
    "SweepRow",
    "SweepResult",
    "TomographyReport",
    "Verdict",
    "apply_parameter",
    "derive_seed",
    "run_sweep",
    "threshold_verdict",
    "tomography_report",
]

_MESSAGE_SALT = 0x3C6EF372FE94F82B
_MASK32 = (1 << 32) - 1


def derive_seed(base_seed: int, point: int, session: int) -> int:
    """Per-session stream seed under the documented sweep seed policy."""
    return splitmix64(base_seed ^ splitmix64(((point + 1) << 32) | (session & _MASK32)))


def apply_parameter(cfg: ProtocolConfig, name: str, value) -> ProtocolConfig:
    """Return a config with one swept parameter replaced.

    Supported names: ``depolarizing_p`` (installs a depolarizing-noise
    adversary with that probability), ``adversary`` (model or spec string),
    ``n_message``, ``t0``, ``t1``, ``security_threshold``,
    ``integrity_threshold``, ``variant``.
    """
    if name == "depolarizing_p":
        return replace(cfg, adversary=DepolarizingNoise(p=float(value)))
    if name == "adversary":
        model = value if isinstance(value, AdversaryModel) else parse_adversary(str(value))
        return replace(cfg, adversary=model)
    if name in ("n_message", "t0", "t1"):
        return replace(cfg, **{name: int(value)})
    if name in ("security_threshold", "integrity_threshold"):
        return replace(cfg, **{name: float(value)})
    if name == "variant":
        return replace(cfg, variant=value if isinstance(value, Variant) else Variant(str(value)))
    raise ValueError(f"unknown sweep parameter {name!r}")


@dataclass(frozen=True)
class SweepSpec:
    """One swept parameter, a value grid, and sessions per grid point."""

    parameter: str
    values: tuple
    sessions: int
    base: ProtocolConfig
    base_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(self.values))
        if not self.values:
            raise ValueError("sweep grid must be nonempty")
        if self.sessions < 1:
            raise ValueError("sessions per point must be >= 1")
        # Fail fast on a bad parameter name or value.
        for v in self.values:
            apply_parameter(self.base, self.parameter, v)

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "values": [v if isinstance(v, (int, float, str)) else str(v) for v in self.values],
            "sessions": self.sessions,
            "base_seed": self.base_seed,
            "base_config": self.base.to_dict(),
        }


@dataclass(frozen=True)
class SweepRow:
    """Aggregates for one grid point (means/stds over sessions)."""

    value: Union[float, int, str]
    sessions: int
    security_mean: float
    security_std: float
    integrity_mean: Optional[float]
    integrity_std: Optional[float]
    abort_frequency: float
    leaked_mean: float
    leaked_std: float

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "sessions": self.sessions,
            "security_mean": self.security_mean,
            "security_std": self.security_std,
            "integrity_mean": self.integrity_mean,
            "integrity_std": self.integrity_std,
            "abort_frequency": self.abort_frequency,
            "leaked_mean": self.leaked_mean,
            "leaked_std": self.leaked_std,
        }


#: CSV column order emitted by SweepResult.to_csv (the documented contract).
CSV_COLUMNS = (
    "parameter",
    "value",
    "sessions",
    "security_mean",
    "security_std",
    "integrity_mean",
    "integrity_std",
    "abort_frequency",
    "leaked_mean",
    "leaked_std",
)


@dataclass(frozen=True)
class SweepResult:
    spec: dict
    rows: tuple[SweepRow, ...]

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "sweep": self.spec,
            "rows": [r.to_dict() for r in self.rows],
        }

    def to_csv(self) -> str:
        def cell(v) -> str:
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(v)
            return str(v)

        lines = [",".join(CSV_COLUMNS)]
        for row in self.rows:
            d = row.to_dict()
            d["parameter"] = self.spec["parameter"]
            lines.append(",".join(cell(d[c]) for c in CSV_COLUMNS))
        return "\n".join(lines) + "\n"


def _session_message(seed: int, n: int) -> tuple[int, ...]:
    rng = np.random.default_rng(splitmix64(seed ^ _MESSAGE_SALT))
    return tuple(int(b) for b in rng.integers(0, 2, n))


def run_sweep(spec: SweepSpec) -> SweepResult:
    """Run every grid point and aggregate per-session reports."""
    rows: list[SweepRow] = []
    for i, value in enumerate(spec.values):
        cfg_point = apply_parameter(spec.base, spec.parameter, value)
        security: list[float] = []
        integrity: list[float] = []
        leaked: list[int] = []
        aborts = 0
        for j in range(spec.sessions):
            cfg_run = replace(cfg_point, seed=derive_seed(spec.base_seed, i, j))
            if cfg_run.variant is Variant.DET_QKD:
                report, _ = run_det_qkd(cfg_run)
            else:
                report, _ = run_qsdc(cfg_run, _session_message(cfg_run.seed, cfg_run.n_message))
            security.append(report.security_error_rate)
            if report.integrity_error_rate is not None:
                integrity.append(report.integrity_error_rate)
            leaked.append(report.leaked_bits)
            if report.aborted_at is not None:
                aborts += 1
        rows.append(
            SweepRow(
                value=value,
                sessions=spec.sessions,
                security_mean=float(np.mean(security)),
                security_std=float(np.std(security)),
                integrity_mean=float(np.mean(integrity)) if integrity else None,
                integrity_std=float(np.std(integrity)) if integrity else None,
                abort_frequency=aborts / spec.sessions,
                leaked_mean=float(np.mean(leaked)),
                leaked_std=float(np.std(leaked)),
            )
        )
    return SweepResult(spec=spec.to_dict(), rows=tuple(rows))


@dataclass(frozen=True)
class TomographyReport:
    """Empirical Bloch vectors of the qubits both senders emit."""

    bloch_alice: tuple[float, float, float]
    norm_alice: float
    bloch_bob: tuple[float, float, float]
    norm_bob: float
    samples: int

    def to_dict(self) -> dict:
        return {
            "bloch_alice": list(self.bloch_alice),
            "norm_alice": self.norm_alice,
            "bloch_bob": list(self.bloch_bob),
            "norm_bob": self.norm_bob,
            "samples": self.samples,
        }


def tomography_report(
    cfg: ProtocolConfig, samples: int, seed: Optional[int] = None
) -> TomographyReport:
    """Sample the emitted sequences of both senders and average their Bloch
    vectors.

    Decoy slots contribute their preparation label directly.  A transmitted
    pair half has no pure state of its own, so its contribution is realized
    by measuring the retained partner in a uniformly random Z/X basis and
    extracting the (now unentangled) transit qubit; the resulting ensemble
    averages to the maximally mixed state.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    states_a: list[StateVector] = []
    states_b: list[StateVector] = []
    while len(states_a) < samples or len(states_b) < samples:
        pa, alice = alice_prepare(cfg, rng)
        pb, bob = bob_prepare(cfg.total_positions, rng)
        for p, q in enumerate(pa):
            if len(states_a) >= samples:
                break
            if p in alice.retained:
                partner = alice.retained[p]
                if rng.integers(2) == 1:
                    partner.register.apply(Gate.HADAMARD, partner)
                partner.register.measure_z(partner, rng)
                states_a.append(q.register.extract(q))
            else:
                states_a.append(make_single(alice.check_labels[p]))
        for p in range(cfg.total_positions):
            if len(states_b) >= samples:
                break
            states_b.append(make_single(bob.labels[p]))
    bloch_a = bloch_accumulate(states_a)
    bloch_b = bloch_accumulate(states_b)
    return TomographyReport(
        bloch_alice=tuple(float(x) for x in bloch_a),
        norm_alice=float(np.linalg.norm(bloch_a)),
        bloch_bob=tuple(float(x) for x in bloch_b),
        norm_bob=float(np.linalg.norm(bloch_b)),
        samples=samples,
    )
