import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import X, Z, random_density
from spinqcl.noise import (
    DEFAULT_P,
    ChannelKind,
    KrausChannel,
    amplitude_damping,
    bit_flip,
    depolarizing,
    make_channel,
    parse_kind,
    phase_damping,
    validate_channel,
)
from spinqcl.quantum import DensityMatrix, apply_kraus

CONSTRUCTORS = [bit_flip, depolarizing, amplitude_damping, phase_damping]
ZERO = np.diag([1.0, 0.0]).astype(complex)
ONE = np.diag([0.0, 1.0]).astype(complex)
PLUS = np.full((2, 2), 0.5, dtype=complex)


@pytest.mark.parametrize("make", CONSTRUCTORS)
def test_zero_probability_is_identity(make, rng):
    ch = make(0.0)
    assert len(ch.kraus_ops) == 1 and np.allclose(ch.kraus_ops[0], np.eye(2))
    rho = random_density(rng, 1)
    assert np.allclose(ch(rho), rho)


@pytest.mark.parametrize("make", CONSTRUCTORS)
@pytest.mark.parametrize("p", [0.005, 0.01, 0.3, 0.37, 1.0])
def test_completeness(make, p):
    report = validate_channel(make(p))
    assert report.ok and report.max_deviation < 1e-12


@settings(max_examples=40, deadline=None)
@given(p=st.floats(0, 1), seed=st.integers(0, 2**31), idx=st.integers(0, 3))
def test_channels_keep_density_matrices_valid(p, seed, idx):
    rng = np.random.default_rng(seed)
    ch = CONSTRUCTORS[idx](p)
    rho = ch(random_density(rng, 1))
    assert abs(np.trace(rho) - 1) < 1e-12
    assert np.allclose(rho, rho.conj().T, atol=1e-14)
    assert np.linalg.eigvalsh(rho).min() > -1e-12


def test_bit_flip_examples():
    assert np.allclose(bit_flip(0.5)(ZERO), np.eye(2) / 2)
    assert np.allclose(np.diag(bit_flip(0.005).kraus_ops[0]), np.sqrt(0.995))
    rho = np.array([[0.7, 0.2 - 0.1j], [0.2 + 0.1j, 0.3]])
    p = 0.2
    assert np.allclose(bit_flip(p)(rho), (1 - p) * rho + p * X @ rho @ X)


def test_depolarizing_examples(rng):
    rho = random_density(rng, 1)
    assert np.allclose(depolarizing(1.0)(rho), np.eye(2) / 2)
    p = 0.3
    w = [np.linalg.norm(e) ** 2 / 2 for e in depolarizing(p).kraus_ops]
    assert w[0] == pytest.approx(1 - 3 * p / 4)
    assert sum(w) == pytest.approx(1.0, abs=1e-15)


def test_amplitude_damping_examples():
    assert np.allclose(amplitude_damping(1.0)(ONE), ZERO)
    assert np.allclose(amplitude_damping(0.4)(ZERO), ZERO)
    out = amplitude_damping(0.01)(PLUS)
    assert out[0, 1] == pytest.approx(0.5 * np.sqrt(0.99))


def test_phase_damping_examples(rng):
    rho = random_density(rng, 1)
    out = phase_damping(0.3)(rho)
    assert np.allclose(np.diag(out), np.diag(rho))
    assert phase_damping(0.01)(PLUS)[0, 1] == pytest.approx(0.5 * 0.99)
    p = 0.2
    assert np.allclose(phase_damping(p)(rho), (1 - p / 2) * rho + p / 2 * Z @ rho @ Z)


def test_validate_channel_failures():
    bad = validate_channel(KrausChannel((np.sqrt(0.5) * np.eye(2),)))
    assert not bad.ok and bad.max_deviation == pytest.approx(0.5)
    assert not validate_channel(KrausChannel(())).ok
    assert not validate_channel(KrausChannel((np.eye(2) / np.sqrt(5),) * 5)).ok


def test_apply_kraus_rejects_invalid_channel():
    from spinqcl.quantum import ValidationError

    rho = DensityMatrix(ZERO, 1)
    with pytest.raises(ValidationError):
        apply_kraus(rho, KrausChannel((np.sqrt(0.5) * np.eye(2),)), 0)


def test_names_and_defaults():
    assert DEFAULT_P[ChannelKind.BIT_FLIP] == 0.005
    assert all(DEFAULT_P[k] == 0.01 for k in DEFAULT_P if k is not ChannelKind.BIT_FLIP)
    assert make_channel("ampdamp").p == 0.01
    assert make_channel("bitflip").p == 0.005
    assert parse_kind("phasedamp") is ChannelKind.PHASE_DAMPING
    with pytest.raises(ValueError):
        parse_kind("thermal")
    with pytest.raises(ValueError):
        bit_flip(1.5)
