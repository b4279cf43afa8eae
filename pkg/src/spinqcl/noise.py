"""Single-qubit Kraus channels: bit flip, depolarizing, amplitude and phase damping."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .quantum import PAULI

COMPLETENESS_ATOL = 1e-12


class ChannelKind(str, Enum):
    BIT_FLIP = "bitflip"
    DEPOLARIZING = "depolarizing"
    AMPLITUDE_DAMPING = "ampdamp"
    PHASE_DAMPING = "phasedamp"
    CUSTOM = "custom"


# noise strengths used for the comparison figures
DEFAULT_P = {
    ChannelKind.BIT_FLIP: 0.005,
    ChannelKind.DEPOLARIZING: 0.01,
    ChannelKind.AMPLITUDE_DAMPING: 0.01,
    ChannelKind.PHASE_DAMPING: 0.01,
}


@dataclass(frozen=True)
class ChannelReport:
    ok: bool
    max_deviation: float
    message: str = ""


@dataclass(frozen=True)
class KrausChannel:
    kraus_ops: tuple[np.ndarray, ...]
    kind: ChannelKind = ChannelKind.CUSTOM
    p: float = float("nan")

    def __post_init__(self):
        ops = []
        for e in self.kraus_ops:
            e = np.array(e, dtype=complex)
            e.setflags(write=False)
            ops.append(e)
        object.__setattr__(self, "kraus_ops", tuple(ops))

    def validate(self) -> ChannelReport:
        return validate_channel(self)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        """Act on a bare 2x2 density matrix."""
        return sum(e @ rho @ e.conj().T for e in self.kraus_ops)


def _check_p(p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"noise probability {p} outside [0, 1]")
    return p


def _build(kind: ChannelKind, p: float, ops) -> KrausChannel:
    # zero-weight operators are dropped so p=0 gives the bare identity channel
    kept = tuple(e for e in ops if np.any(e != 0))
    return KrausChannel(kept, kind, p)


def bit_flip(p: float) -> KrausChannel:
    p = _check_p(p)
    return _build(
        ChannelKind.BIT_FLIP, p, [np.sqrt(1 - p) * PAULI["I"], np.sqrt(p) * PAULI["X"]]
    )


def depolarizing(p: float) -> KrausChannel:
    p = _check_p(p)
    w = np.sqrt(p / 4)
    ops = [np.sqrt(1 - 3 * p / 4) * PAULI["I"], w * PAULI["X"], w * PAULI["Y"], w * PAULI["Z"]]
    return _build(ChannelKind.DEPOLARIZING, p, ops)


def amplitude_damping(p: float) -> KrausChannel:
    p = _check_p(p)
    e0 = np.array([[1, 0], [0, np.sqrt(1 - p)]], dtype=complex)
    e1 = np.array([[0, np.sqrt(p)], [0, 0]], dtype=complex)
    return _build(ChannelKind.AMPLITUDE_DAMPING, p, [e0, e1])


def phase_damping(p: float) -> KrausChannel:
    p = _check_p(p)
    return _build(
        ChannelKind.PHASE_DAMPING, p, [np.sqrt(1 - p / 2) * PAULI["I"], np.sqrt(p / 2) * PAULI["Z"]]
    )


CONSTRUCTORS = {
    ChannelKind.BIT_FLIP: bit_flip,
    ChannelKind.DEPOLARIZING: depolarizing,
    ChannelKind.AMPLITUDE_DAMPING: amplitude_damping,
    ChannelKind.PHASE_DAMPING: phase_damping,
}


def parse_kind(name) -> ChannelKind:
    try:
        kind = ChannelKind(name)
    except ValueError:
        raise ValueError(
            f"unknown noise channel {name!r}; expected one of "
            + ", ".join(k.value for k in CONSTRUCTORS)
        ) from None
    if kind not in CONSTRUCTORS:
        raise ValueError(f"channel kind {name!r} cannot be built by name")
    return kind


def make_channel(kind, p: float | None = None) -> KrausChannel:
    """Build a channel from its CLI name (``bitflip``, ``depolarizing``, ``ampdamp``, ``phasedamp``)."""
    kind = parse_kind(kind)
    return CONSTRUCTORS[kind](DEFAULT_P[kind] if p is None else p)


def validate_channel(channel: KrausChannel) -> ChannelReport:
    ops = channel.kraus_ops
    if not ops:
        return ChannelReport(False, float("inf"), "empty Kraus operator list")
    if len(ops) > 4:
        return ChannelReport(False, float("inf"), f"{len(ops)} Kraus operators, at most 4 allowed")
    if any(e.shape != (2, 2) for e in ops):
        return ChannelReport(False, float("inf"), "Kraus operators must be 2x2")
    total = sum(e.conj().T @ e for e in ops)
    dev = float(np.abs(total - np.eye(2)).max())
    if dev > COMPLETENESS_ATOL:
        return ChannelReport(False, dev, f"completeness violated by {dev:.3e}")
    return ChannelReport(True, dev)
