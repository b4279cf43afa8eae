import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spinqcl.circuits import NoiseSpec, gate_counts, phase_distance
from spinqcl.model import ModelSpec, named_observable
from spinqcl.qcl import (
    AnsatzConfig,
    Dataset,
    ModelFileError,
    TrainedModel,
    TrainOptions,
    _LossFunction,
    ansatz_unitary,
    build_ansatz,
    circuit_expectations,
    encoded_states,
    fidelity_vs_exact,
    gen_dataset,
    input_encoding,
    load_model,
    loss,
    model_to_dict,
    predict,
    predict_many,
    save_model,
    train,
)

SPEC = ModelSpec(2, 0.01)
ALPHA = (2.0, 1.0, 1.0, 1.0, 2.0)


@pytest.fixture(scope="module")
def dataset():
    return gen_dataset(SPEC, 4)


@pytest.fixture(scope="module")
def model(dataset):
    return train(AnsatzConfig.random(2, 2, seed=0), dataset, TrainOptions(alpha=ALPHA, seed=0))


def single_z(psi, q, L):
    idx = np.arange(2**L)
    z = 1 - 2 * ((idx >> q) & 1)
    return float(np.sum(np.abs(psi) ** 2 * z))


def test_encoding_examples():
    psi = encoded_states([0.0], 2)[0]
    assert single_z(psi, 0, 2) == pytest.approx(1.0) and single_z(psi, 1, 2) == pytest.approx(1.0)
    for x in (-1.0, 1.0):
        psi = encoded_states([x], 3)[0]
        assert all(abs(single_z(psi, q, 3)) < 1e-12 for q in range(3))
    with pytest.raises(ValueError):
        input_encoding(1.2, 2)


def test_encoding_gate_layout():
    c = input_encoding(0.4, 3)
    kinds = [(op.kind.value, op.targets[0]) for op in c.ops]
    assert kinds == [("RY", 0), ("RZ", 0), ("RX", 1), ("RZ", 1), ("RY", 2), ("RZ", 2)]


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-1, 1), L=st.integers(1, 4))
def test_encoded_state_matches_circuit(x, L):
    from spinqcl.circuits import run_ideal
    from spinqcl.quantum import StateVector

    psi = encoded_states([x], L)[0]
    assert abs(np.linalg.norm(psi) - 1) < 1e-12
    assert np.allclose(run_ideal(input_encoding(x, L), StateVector.zero(L)).amplitudes, psi)


def test_encoding_norm_on_grid():
    psi = encoded_states(np.linspace(-1, 1, 200), 3)
    assert np.allclose(np.linalg.norm(psi, axis=1), 1.0)


def test_ansatz_counts():
    for L, D, expect in [(2, 2, (14, 4)), (3, 4, (48, 24)), (2, 4, (28, 8))]:
        cfg = AnsatzConfig.random(L, D)
        assert gate_counts(build_ansatz(cfg, np.zeros(cfg.n_params))) == expect
        assert expect == (L * (L + 5) * D // 2, L * (L - 1) * D)


def test_ansatz_identity_case():
    cfg = AnsatzConfig(3, 2, (0.0, 0.0, 0.0))
    u = build_ansatz(cfg, np.zeros(cfg.n_params)).unitary()
    assert phase_distance(u, np.eye(8)) < 1e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), L=st.integers(2, 3), D=st.integers(1, 3))
def test_fast_unitary_matches_circuit(seed, L, D):
    cfg = AnsatzConfig.random(L, D, seed, T=0.7)
    theta = np.random.default_rng(seed).uniform(0, 2 * np.pi, cfg.n_params)
    fast = ansatz_unitary(cfg, theta)
    assert np.allclose(fast, build_ansatz(cfg, theta).unitary(), atol=1e-12)
    assert np.allclose(fast.conj().T @ fast, np.eye(2**L), atol=1e-12)


def test_ansatz_config_validation():
    with pytest.raises(ValueError):
        AnsatzConfig(2, 1, (0.1, 0.2))
    with pytest.raises(ValueError):
        AnsatzConfig(2, 0, (0.1,))
    with pytest.raises(ValueError):
        build_ansatz(AnsatzConfig(2, 1, (0.1,)), np.zeros(5))
    couplings = np.array(AnsatzConfig.random(4, 1, seed=3).couplings)
    assert couplings.size == 6 and np.all(np.abs(couplings) <= 1)


def test_dataset_properties(dataset):
    assert dataset.M == 200 and set(dataset.targets) == {"Z1", "Ztot", "Xtot", "Ytot", "H"}
    other = gen_dataset(SPEC, 15)
    for name in ("Ztot", "Xtot", "Ytot", "H"):
        assert np.allclose(other.targets[name], dataset.targets[name])
    assert not np.allclose(other.targets["Z1"], dataset.targets["Z1"])
    i0 = int(np.argmin(np.abs(dataset.xs)))
    tiny = gen_dataset(SPEC, 0, M=3)
    assert tiny.targets["Ztot"][1] == pytest.approx(2.0)
    psi = encoded_states(tiny.xs, 2)
    assert np.allclose(tiny.targets["Z1"], [single_z(p, 0, 2) for p in psi])
    assert dataset.xs[i0] == pytest.approx(0.0, abs=1e-2)


def test_dataset_csv_round_trip(dataset):
    text = dataset.to_csv()
    again = Dataset.from_csv(text)
    assert again.d == 4 and again.L == 2 and again.delta == SPEC.delta
    assert np.array_equal(again.xs, dataset.xs)
    for k in dataset.targets:
        assert np.array_equal(again.targets[k], dataset.targets[k])
    assert again.digest() == dataset.digest()
    header = text.splitlines()[1]
    assert header == "x,y_Z1,y_Ztot,y_Xtot,y_Ytot,y_H"
    with pytest.raises(ValueError):
        Dataset.from_csv("x,y_Z1\n0,1\n")


def test_loss_properties(dataset):
    cfg = AnsatzConfig.random(2, 2, seed=5)
    theta = np.random.default_rng(1).uniform(0, 6, cfg.n_params)
    base = loss(theta, 1.1, dataset, cfg, ALPHA)
    assert base > 0
    assert loss(theta, 1.1, dataset, cfg, tuple(2 * a for a in ALPHA)) == pytest.approx(2 * base)
    assert loss(theta, 1.1, dataset, cfg, (0, 0, 0, 0, 0)) == 0.0
    obs = [named_observable(n, SPEC) for n in ("Z1", "Ztot", "Xtot", "Ytot", "H")]
    preds = circuit_expectations(cfg, theta, dataset.xs, obs)
    perfect = Dataset(dataset.xs, dict(zip(("Z1", "Ztot", "Xtot", "Ytot", "H"), preds)), 4, 2, SPEC.delta)
    assert loss(theta, 1.0, perfect, cfg, ALPHA) == pytest.approx(0.0, abs=1e-24)
    with pytest.raises(ValueError):
        loss(theta, 1.0, dataset, cfg, (1, 1, 1))
    with pytest.raises(ValueError):
        loss(theta, 1.0, dataset, AnsatzConfig.random(3, 2), ALPHA)


def test_loss_fast_path_matches_circuit_path(dataset):
    cfg = AnsatzConfig.random(2, 3, seed=2)
    theta = np.random.default_rng(4).uniform(0, 6, cfg.n_params)
    fn = _LossFunction(dataset, cfg, ALPHA)
    slow = _LossFunction(dataset, cfg, ALPHA, executor=NoiseSpec("bitflip", 0.0))
    assert np.allclose(fn.predictions(theta), slow.predictions(theta))


def test_training_reaches_small_loss(model):
    assert model.final_loss < 1e-2
    assert 0.9 <= model.a <= 1.1
    assert len(model.restart_losses) == 8 and min(model.restart_losses) == model.final_loss
    assert model.optimizer["method"] == "nelder-mead"


def test_training_is_deterministic(dataset):
    opts = TrainOptions(restarts=2, max_iter=300, seed=9)
    cfg = AnsatzConfig.random(2, 2, seed=9)
    a, b = train(cfg, dataset, opts), train(cfg, dataset, opts)
    assert a == b


def test_predictions_track_targets(model, dataset):
    h = named_observable("H", SPEC)
    pred = predict_many(model, dataset.xs, h)
    assert np.sqrt(np.mean((pred - dataset.targets["H"]) ** 2)) < np.sqrt(model.final_loss)
    assert predict(model, 0.3, h) == pytest.approx(pred[np.argmin(abs(dataset.xs - 0.3))], abs=0.2)
    noisy = predict_many(model, dataset.xs[:20], h, NoiseSpec("ampdamp", 0.0))
    assert np.allclose(noisy, pred[:20], atol=1e-9)


def test_untrained_observable_reported(model, dataset):
    from spinqcl.circuits import evolve_states
    from spinqcl.model import evolution_circuit

    x1 = named_observable("X1", SPEC)
    psi = evolve_states(encoded_states(dataset.xs, 2), evolution_circuit(SPEC, 4))
    exact = np.einsum("mi,ij,mj->m", psi.conj(), x1.matrix(), psi).real
    dev = np.mean(np.abs(predict_many(model, dataset.xs, x1) - exact))
    print(f"untrained <X1>: mean |learned - exact| = {dev:.4f}")
    assert np.isfinite(dev)


def test_fidelity(model):
    grid = np.linspace(-1, 1, 41)
    f = np.array([fidelity_vs_exact(model, x) for x in grid])
    assert np.all(f > 0.9) and np.all(f <= 1.0)
    assert f.max() - f.min() < 0.1
    ident = TrainedModel(AnsatzConfig(2, 1, (0.0,)), (0.0,) * 6, 1.0, 0, 0.1, 0.0)
    assert fidelity_vs_exact(ident, 0.4) == pytest.approx(1.0)


def test_model_warns_outside_band():
    with pytest.warns(UserWarning):
        TrainedModel(AnsatzConfig(2, 1, (0.0,)), (0.0,) * 6, 1.5, 0, 0.1, 0.0)
    with pytest.raises(ValueError):
        TrainedModel(AnsatzConfig(2, 1, (0.0,)), (0.0,) * 5, 1.0, 0, 0.1, 0.0)


def test_model_file_round_trip(model, tmp_path):
    path = tmp_path / "m.json"
    save_model(model, path)
    assert load_model(path) == model
    save_model(load_model(path), tmp_path / "again.json")
    assert path.read_bytes() == (tmp_path / "again.json").read_bytes()
    keys = json.loads(path.read_text())
    for k in ("format_version", "L", "D", "d", "delta", "T", "seed", "couplings", "theta", "a", "final_loss", "alpha", "dataset_hash"):
        assert k in keys


def test_model_file_errors(model, tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps(model_to_dict(model))[:40])
    with pytest.raises(ModelFileError):
        load_model(path)
    data = model_to_dict(model)
    data["format_version"] = 2
    path.write_text(json.dumps(data))
    with pytest.raises(ModelFileError, match="format_version"):
        load_model(path)
    data = model_to_dict(model)
    del data["theta"]
    path.write_text(json.dumps(data))
    with pytest.raises(ModelFileError):
        load_model(path)
