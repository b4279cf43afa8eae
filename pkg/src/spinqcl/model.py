"""XXX chain operators, Trotterized evolution circuits and conserved charges.

Chain sites ``1..L`` map to qubits ``0..L-1`` and all neighbour arithmetic is
periodic, so site ``0`` is site ``L`` and site ``L+1`` is site ``1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .circuits import Circuit, check_r
from .quantum import ObservableSum, PauliString, StateVector, expectation

AXES = "XYZ"
HERMITIAN_ATOL = 1e-12
_LEVI_CIVITA = {
    ("X", "Y", "Z"): 1.0,
    ("Y", "Z", "X"): 1.0,
    ("Z", "X", "Y"): 1.0,
    ("X", "Z", "Y"): -1.0,
    ("Z", "Y", "X"): -1.0,
    ("Y", "X", "Z"): -1.0,
}


class UnsupportedChargeError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    L: int
    delta: float = 0.1
    J: float = 1.0

    def __post_init__(self):
        if self.L < 2 or (self.L > 3 and self.L % 2):
            raise ValueError(f"chain length must be 2, 3 or even, got {self.L}")
        if not np.isfinite(self.delta):
            raise ValueError("delta must be finite")

    def qubit(self, site: int) -> int:
        return (site - 1) % self.L


def _sites(L: int, *sites: int) -> list[int]:
    return [(s - 1) % L for s in sites]


def spin_dot(i: int, j: int, L: int, coeff: float = 1.0) -> ObservableSum:
    """``coeff * (X_i X_j + Y_i Y_j + Z_i Z_j)`` on qubits ``i``, ``j``."""
    if i == j:
        raise ValueError("spin_dot needs distinct qubits")
    return ObservableSum(
        tuple(PauliString.from_sites({i: a, j: a}, L, coeff) for a in AXES), L
    )


def spin_triple(i: int, j: int, k: int, L: int, coeff: float = 1.0) -> ObservableSum:
    """``coeff * sigma_i . (sigma_j x sigma_k)`` expanded with the Levi-Civita symbol."""
    if len({i, j, k}) != 3:
        raise ValueError("spin_triple needs three distinct qubits")
    terms = tuple(
        PauliString.from_sites({i: a, j: b, k: c}, L, coeff * sign)
        for (a, b, c), sign in _LEVI_CIVITA.items()
    )
    return ObservableSum(terms, L)


def xxx_hamiltonian(spec: ModelSpec) -> ObservableSum:
    """``2J sigma_1.sigma_2`` for two sites, otherwise ``J sum_i sigma_i.sigma_{i+1}`` (periodic)."""
    L = spec.L
    if L == 2:
        return spin_dot(0, 1, 2, 2.0 * spec.J)
    out = ObservableSum((), L)
    for i in range(L):
        out = out + spin_dot(i, (i + 1) % L, L, spec.J)
    return out


def total_spin(L: int, axis: str) -> ObservableSum:
    if axis not in AXES:
        raise ValueError(f"axis must be one of X, Y, Z, got {axis!r}")
    return ObservableSum(tuple(PauliString.from_sites({q: axis}, L) for q in range(L)), L)


def site_pauli(L: int, axis: str, qubit: int) -> ObservableSum:
    return ObservableSum((PauliString.from_sites({qubit: axis}, L),), L)


def trotter_step_even(spec: ModelSpec) -> Circuit:
    """One step ``U(delta) = prod R_{2j-1,2j} prod R_{2j,2j+1}`` for even ``L``.

    In the operator product the odd-bond layer stands on the left, so in time
    order the even bonds ``(2j, 2j+1)`` act first and the odd bonds second.
    """
    L = spec.L
    if L % 2:
        raise ValueError("trotter_step_even needs an even chain; use u3_step for L=3")
    half = L // 2
    even_bonds = [_sites(L, 2 * j, 2 * j + 1) for j in range(1, half + 1)]
    odd_bonds = [_sites(L, 2 * j - 1, 2 * j) for j in range(1, half + 1)]
    ops = [check_r(a, b, spec.delta) for a, b in even_bonds + odd_bonds]
    return Circuit(L, tuple(ops))


def u3_step(delta: float) -> Circuit:
    """``U_3(delta) = R_12 R_23 R_31`` (operator order), i.e. ``R_31`` acts first."""
    return Circuit(3, (check_r(2, 0, delta), check_r(1, 2, delta), check_r(0, 1, delta)))


def evolution_step(spec: ModelSpec) -> Circuit:
    return u3_step(spec.delta) if spec.L == 3 else trotter_step_even(spec)


def evolution_circuit(spec: ModelSpec, d: int) -> Circuit:
    """``d`` Trotter steps (``U_3`` for three sites)."""
    if d < 0:
        raise ValueError("number of steps must be >= 0")
    return evolution_step(spec).repeated(d)


def assert_hermitian(obs: ObservableSum, atol: float = HERMITIAN_ATOL) -> ObservableSum:
    m = obs.matrix()
    dev = np.abs(m - m.conj().T).max() if m.size else 0.0
    if dev > atol:
        raise ValueError(f"assembled observable is not Hermitian (deviation {dev:.3e})")
    return obs


def q1_local(i: int, j: int, k: int, sign: int, delta: float, L: int) -> ObservableSum:
    """Local density of the first charge on qubits ``i, j, k``::

        s_i.s_j + s_j.s_k + delta^2 s_k.s_i - sign * delta * s_i.(s_j x s_k)
    """
    if len({i % L, j % L, k % L}) != 3:
        raise ValueError("q1_local needs three distinct sites")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    i, j, k = i % L, j % L, k % L
    out = spin_dot(i, j, L) + spin_dot(j, k, L)
    if delta != 0:
        out = out + spin_dot(k, i, L, delta**2) + spin_triple(i, j, k, L, -sign * delta)
    return assert_hermitian(out)


def q1_charge(spec: ModelSpec, sign: int) -> ObservableSum:
    """First conserved charge ``Q_1^+`` (sign=+1) or ``Q_1^-`` (sign=-1) for even ``L >= 4``.

    The returned operator is the Hermitian part ``Q_1 / i``: the overall ``i``
    of the defining formula multiplies a Hermitian combination, and dropping it
    leaves the commutation with ``U(delta)`` untouched.
    """
    L, delta = spec.L, spec.delta
    if L < 4 or L % 2:
        raise UnsupportedChargeError(
            f"Q1 charges need an even chain with L >= 4 (got L={L}); "
            "for L=2 use the total spin and the Hamiltonian"
        )
    pref = 1.0 / (2.0 * (1.0 + delta**2))
    out = ObservableSum((), L)
    for n in range(1, L // 2 + 1):
        if sign == 1:
            i, j, k = _sites(L, 2 * n - 2, 2 * n - 1, 2 * n)
        elif sign == -1:
            i, j, k = _sites(L, 2 * n - 1, 2 * n, 2 * n + 1)
        else:
            raise ValueError("sign must be +1 or -1")
        out = out + q1_local(i, j, k, sign, delta, L).scaled(pref)
    return assert_hermitian(out.simplified())


def near_charges_L3(delta: float) -> dict[str, ObservableSum]:
    """Approximately conserved ``C1+``, ``C1-``, ``C2+``, ``C2-`` of the three-site chain."""
    out = {}
    for sign, tag in ((1, "+"), (-1, "-")):
        out["C1" + tag] = q1_local(0, 1, 2, sign, delta, 3)
        c2 = q1_local(2, 0, 1, sign, delta, 3) + q1_local(1, 2, 0, sign, delta, 3)
        out["C2" + tag] = assert_hermitian(c2.simplified())
    return out


def operator_drift(circuit: Circuit, obs: ObservableSum) -> float:
    """Spectral norm of ``U^dagger O U - O``."""
    u = circuit.unitary()
    o = obs.matrix()
    return float(np.linalg.norm(u.conj().T @ o @ u - o, 2))


def conservation_drift(
    circuit: Circuit, obs: ObservableSum, references: Iterable[StateVector]
) -> float:
    """Largest change of ``<O>`` over the reference states after running ``circuit``."""
    from .circuits import run_ideal

    worst = 0.0
    for psi in references:
        before = expectation(psi, obs)
        after = expectation(run_ideal(circuit, psi), obs)
        worst = max(worst, abs(after - before))
    return worst


def named_observable(name: str, spec: ModelSpec) -> ObservableSum:
    """Resolve ``H``, ``Xtot``/``Ytot``/``Ztot`` or a site observable like ``Z1`` (1-based site)."""
    L = spec.L
    if name == "H":
        return xxx_hamiltonian(spec)
    if name in ("Xtot", "Ytot", "Ztot"):
        return total_spin(L, name[0])
    if len(name) >= 2 and name[0] in AXES and name[1:].isdigit():
        site = int(name[1:])
        if not 1 <= site <= L:
            raise ValueError(f"site {site} outside 1..{L}")
        return site_pauli(L, name[0], site - 1)
    if name in ("Q1+", "Q1-"):
        return q1_charge(spec, 1 if name.endswith("+") else -1)
    if name in ("C1+", "C1-", "C2+", "C2-") and L == 3:
        return near_charges_L3(spec.delta)[name]
    raise ValueError(f"unknown observable {name!r}")
