import numpy as np
import pytest

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)
PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}


def kron_single(op, q, L):
    """Oracle embedding: explicit kron chain with qubit L-1 leftmost."""
    out = np.array([[1.0 + 0j]])
    for k in reversed(range(L)):
        out = np.kron(out, op if k == q else I2)
    return out


def random_density(rng, L):
    dim = 2**L
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_unitary(rng, dim):
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    return q * (np.diag(r) / abs(np.diag(r)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
