"""Dense state-vector and density-matrix primitives.

Qubit ordering is little-endian: qubit 0 is the least significant bit of the
basis index, so for ``L = 2`` the basis state with index 1 has qubit 0 set.
A local ``k``-qubit matrix acting on ``targets = [t0, t1, ...]`` is read with
``t0`` as its most significant local bit, i.e. ``np.kron(A, B)`` on
``[t0, t1]`` is ``A`` on ``t0`` and ``B`` on ``t1``.

The array-level kernels (:func:`apply_matrix`, :func:`conjugate_density`,
:func:`kraus_density`) accept leading batch axes; the typed wrappers work on a
single :class:`StateVector` or :class:`DensityMatrix`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np

ATOL = 1e-10
PSD_ATOL = 1e-8

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class ValidationError(ValueError):
    """A numerical object failed a unitarity/trace/completeness check."""


def _check_targets(targets: Sequence[int], num_qubits: int) -> tuple[int, ...]:
    targets = tuple(int(t) for t in targets)
    if len(set(targets)) != len(targets):
        raise ValueError(f"duplicate target qubits {targets}")
    for t in targets:
        if not 0 <= t < num_qubits:
            raise ValueError(f"target {t} out of range for {num_qubits} qubits")
    return targets


def _check_local(matrix: np.ndarray, targets: Sequence[int]) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=complex)
    dim = 2 ** len(targets)
    if matrix.shape != (dim, dim):
        raise ValueError(
            f"local matrix shape {matrix.shape} does not match {len(targets)} target(s)"
        )
    return matrix


def is_unitary(matrix: np.ndarray, atol: float = ATOL) -> bool:
    matrix = np.asarray(matrix)
    return np.allclose(matrix.conj().T @ matrix, np.eye(matrix.shape[0]), atol=atol, rtol=0)


def embed_operator(local: np.ndarray, targets: Sequence[int], num_qubits: int) -> np.ndarray:
    """Full ``2^L x 2^L`` matrix of ``local`` acting on ``targets``."""
    targets = _check_targets(targets, num_qubits)
    local = _check_local(local, targets)
    dim = 2**num_qubits
    return apply_matrix(np.eye(dim, dtype=complex).T, local, targets, num_qubits).T


def apply_matrix(
    array: np.ndarray, matrix: np.ndarray, targets: Sequence[int], num_qubits: int
) -> np.ndarray:
    """Apply a local matrix to the last axis of ``array`` (shape ``(..., 2^L)``)."""
    array = np.asarray(array, dtype=complex)
    batch = array.shape[:-1]
    k = len(targets)
    tensor = array.reshape(batch + (2,) * num_qubits)
    axes = [len(batch) + num_qubits - 1 - t for t in targets]
    gate = np.asarray(matrix, dtype=complex).reshape((2,) * (2 * k))
    out = np.tensordot(gate, tensor, axes=(list(range(k, 2 * k)), axes))
    out = np.moveaxis(out, list(range(k)), axes)
    return out.reshape(array.shape)


def conjugate_density(
    rho: np.ndarray, matrix: np.ndarray, targets: Sequence[int], num_qubits: int
) -> np.ndarray:
    """``U rho U^dagger`` for ``rho`` of shape ``(..., 2^L, 2^L)``."""
    left = np.swapaxes(apply_matrix(np.swapaxes(rho, -1, -2), matrix, targets, num_qubits), -1, -2)
    return apply_matrix(left, np.conj(matrix), targets, num_qubits)


def kraus_density(
    rho: np.ndarray, kraus_ops: Iterable[np.ndarray], targets: Sequence[int], num_qubits: int
) -> np.ndarray:
    """``sum_k E_k rho E_k^dagger`` with each ``E_k`` local to ``targets``."""
    return sum(conjugate_density(rho, e, targets, num_qubits) for e in kraus_ops)


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    num_qubits: int

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if self.num_qubits < 1 or amps.shape[0] != 2**self.num_qubits:
            raise ValueError(
                f"state of length {amps.shape[0]} is not 2^{self.num_qubits}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, num_qubits: int) -> "StateVector":
        return cls.basis(0, num_qubits)

    @classmethod
    def basis(cls, index: int, num_qubits: int) -> "StateVector":
        amps = np.zeros(2**num_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(amps, num_qubits)

    @property
    def dim(self) -> int:
        return 2**self.num_qubits

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True)
class DensityMatrix:
    entries: np.ndarray
    num_qubits: int

    def __post_init__(self):
        rho = np.array(self.entries, dtype=complex)
        dim = 2**self.num_qubits
        if rho.shape != (dim, dim):
            raise ValueError(f"density matrix shape {rho.shape} is not ({dim}, {dim})")
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)

    @classmethod
    def from_state(cls, state: StateVector) -> "DensityMatrix":
        psi = state.amplitudes
        return cls(np.outer(psi, psi.conj()), state.num_qubits)

    @classmethod
    def maximally_mixed(cls, num_qubits: int) -> "DensityMatrix":
        dim = 2**num_qubits
        return cls(np.eye(dim, dtype=complex) / dim, num_qubits)

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def validate(self, check_psd: bool = False) -> None:
        rho = self.entries
        if not np.allclose(rho, rho.conj().T, atol=ATOL, rtol=0):
            raise ValidationError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1) > ATOL:
            raise ValidationError(f"density matrix trace {np.trace(rho).real} != 1")
        if check_psd and np.linalg.eigvalsh(rho).min() < -PSD_ATOL:
            raise ValidationError("density matrix has a negative eigenvalue")


State = Union[StateVector, DensityMatrix]


def apply_unitary_state(
    state: StateVector, gate: np.ndarray, targets: Sequence[int], strict: bool = True
) -> StateVector:
    targets = _check_targets(targets, state.num_qubits)
    gate = _check_local(gate, targets)
    if strict and not is_unitary(gate):
        raise ValidationError("gate matrix is not unitary")
    return StateVector(apply_matrix(state.amplitudes, gate, targets, state.num_qubits), state.num_qubits)


def apply_unitary_density(
    rho: DensityMatrix, gate: np.ndarray, targets: Sequence[int], strict: bool = True
) -> DensityMatrix:
    targets = _check_targets(targets, rho.num_qubits)
    gate = _check_local(gate, targets)
    if strict and not is_unitary(gate):
        raise ValidationError("gate matrix is not unitary")
    return DensityMatrix(conjugate_density(rho.entries, gate, targets, rho.num_qubits), rho.num_qubits)


def apply_kraus(rho: DensityMatrix, channel, target: int) -> DensityMatrix:
    """Apply a single-qubit Kraus channel (see :mod:`spinqcl.noise`) to one qubit."""
    report = channel.validate()
    if not report.ok:
        raise ValidationError(f"invalid channel: {report.message}")
    (target,) = _check_targets([target], rho.num_qubits)
    out = kraus_density(rho.entries, channel.kraus_ops, [target], rho.num_qubits)
    return DensityMatrix(out, rho.num_qubits)


@dataclass(frozen=True)
class PauliString:
    """``coefficient * P_0 (x) P_1 (x) ...`` with ``factors[q]`` acting on qubit ``q``."""

    factors: tuple[str, ...]
    coefficient: float = 1.0

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors or any(f not in PAULI for f in factors):
            raise ValueError(f"bad Pauli factors {self.factors!r}")
        coeff = self.coefficient
        if isinstance(coeff, complex) or np.iscomplexobj(coeff):
            if abs(np.imag(coeff)) > 1e-12:
                raise ValueError("Pauli string coefficients must be real")
            coeff = np.real(coeff)
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "coefficient", float(coeff))

    @classmethod
    def from_sites(cls, sites: dict[int, str], num_qubits: int, coefficient: float = 1.0):
        factors = ["I"] * num_qubits
        for q, label in sites.items():
            (q,) = _check_targets([q], num_qubits)
            factors[q] = label
        return cls(tuple(factors), coefficient)

    @property
    def num_qubits(self) -> int:
        return len(self.factors)

    @property
    def label(self) -> str:
        return "".join(self.factors)

    def matrix(self) -> np.ndarray:
        out = np.array([[self.coefficient]], dtype=complex)
        # kron order puts the highest qubit first (little-endian basis index)
        for f in reversed(self.factors):
            out = np.kron(out, PAULI[f])
        return out


@dataclass(frozen=True)
class ObservableSum:
    terms: tuple[PauliString, ...]
    num_qubits: int = field(default=0)

    def __post_init__(self):
        terms = tuple(self.terms)
        n = self.num_qubits or (terms[0].num_qubits if terms else 0)
        if n < 1:
            raise ValueError("observable needs num_qubits when it has no terms")
        for t in terms:
            if t.num_qubits != n:
                raise ValueError("all Pauli strings must act on the same number of qubits")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "num_qubits", n)

    def __add__(self, other: "ObservableSum") -> "ObservableSum":
        if other.num_qubits != self.num_qubits:
            raise ValueError("qubit count mismatch")
        return ObservableSum(self.terms + other.terms, self.num_qubits)

    def __sub__(self, other: "ObservableSum") -> "ObservableSum":
        return self + other.scaled(-1.0)

    def scaled(self, factor: float) -> "ObservableSum":
        terms = tuple(PauliString(t.factors, t.coefficient * factor) for t in self.terms)
        return ObservableSum(terms, self.num_qubits)

    def simplified(self, tol: float = 1e-15) -> "ObservableSum":
        """Merge repeated Pauli strings and drop vanishing coefficients."""
        merged: dict[tuple[str, ...], float] = {}
        for t in self.terms:
            merged[t.factors] = merged.get(t.factors, 0.0) + t.coefficient
        terms = tuple(PauliString(f, c) for f, c in merged.items() if abs(c) > tol)
        return ObservableSum(terms, self.num_qubits)

    @cached_property
    def _dense(self) -> np.ndarray:
        dim = 2**self.num_qubits
        out = np.zeros((dim, dim), dtype=complex)
        for t in self.terms:
            out += t.matrix()
        out.setflags(write=False)
        return out

    def matrix(self) -> np.ndarray:
        return self._dense

    def to_text(self) -> str:
        """One ``coefficient pauli-string`` line per term; qubit 0 is the first character."""
        lines = [f"# qubits {self.num_qubits}"]
        lines += [f"{t.coefficient!r} {t.label}" for t in self.terms]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ObservableSum":
        num_qubits = 0
        terms = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "qubits":
                    num_qubits = int(parts[1])
                continue
            coeff, label = line.split()
            terms.append(PauliString(tuple(label), float(coeff)))
        return cls(tuple(terms), num_qubits)


def _dims_match(state: State, num_qubits: int) -> None:
    if state.num_qubits != num_qubits:
        raise ValueError(
            f"state has {state.num_qubits} qubits, operator has {num_qubits}"
        )


def expectation(state: State, obs: Union[ObservableSum, PauliString]) -> float:
    """``<psi|O|psi>`` or ``Tr(rho O)``; the imaginary residue must be below 1e-10."""
    if isinstance(obs, PauliString):
        obs = ObservableSum((obs,))
    _dims_match(state, obs.num_qubits)
    op = obs.matrix()
    if isinstance(state, StateVector):
        psi = state.amplitudes
        value = np.vdot(psi, op @ psi)
    else:
        value = np.trace(state.entries @ op)
    if abs(value.imag) > ATOL:
        raise ValidationError(f"expectation has imaginary part {value.imag:.3e}")
    return float(value.real)


def sample_expectation(
    rho: State, pauli: PauliString, shots: int, seed=None
) -> float:
    """Estimate ``<P>`` from ``shots`` projective measurements of the Pauli string.

    Each shot yields an eigenvalue of ``P / coefficient`` in ``{+1, -1}``, so the
    number of ``+1`` outcomes is binomial with success probability
    ``(1 + <P>) / 2``.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if isinstance(rho, StateVector):
        rho = DensityMatrix.from_state(rho)
    unit = PauliString(pauli.factors, 1.0)
    exact = expectation(rho, unit)
    p_plus = min(max((1.0 + exact) / 2.0, 0.0), 1.0)
    rng = np.random.default_rng(seed)
    plus = rng.binomial(shots, p_plus)
    return pauli.coefficient * (2.0 * plus / shots - 1.0)


def sample_observable(rho: State, obs: ObservableSum, shots: int, seed=None) -> float:
    """Shot estimate of a Pauli sum, measuring every term with its own ``shots`` budget."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    seeds = seed.spawn(len(obs.terms))
    total = 0.0
    for term, ss in zip(obs.terms, seeds):
        if all(f == "I" for f in term.factors):
            total += term.coefficient
        else:
            total += sample_expectation(rho, term, shots, np.random.default_rng(ss))
    return total


def fidelity_overlap(a: StateVector, b: StateVector) -> float:
    if a.num_qubits != b.num_qubits:
        raise ValueError("state dimensions differ")
    return float(min(abs(np.vdot(a.amplitudes, b.amplitudes)), 1.0))
