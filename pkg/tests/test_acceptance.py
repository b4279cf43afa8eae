"""Acceptance checks 1-10. Each test prints one ``criterion N: PASS|FAIL`` line."""

import time

import numpy as np
import pytest

from conftest import random_density
from spinqcl import bench
from spinqcl.circuits import check_r_matrix, decompose_check_r, phase_distance
from spinqcl.model import (
    ModelSpec,
    evolution_circuit,
    named_observable,
    near_charges_L3,
    operator_drift,
    q1_charge,
    total_spin,
    u3_step,
    xxx_hamiltonian,
)
from spinqcl.noise import amplitude_damping, bit_flip, depolarizing, phase_damping, validate_channel
from spinqcl.qcl import AnsatzConfig, TrainOptions, fidelity_vs_exact, gen_dataset, train
from spinqcl.quantum import DensityMatrix, apply_kraus

ALPHA_C5 = (2.0, 1.0, 1.0, 1.0, 2.0)
SEEDS_C5 = (0, 1, 2)
DELTA = bench.ExperimentConfig().delta


def verdict(n, ok, detail):
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def test_criterion_01_channel_algebra():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_complete = worst_trace = 0.0
    for make in (bit_flip, depolarizing, amplitude_damping, phase_damping):
        for p in (0.005, 0.01, 0.37, 1.0):
            ch = make(p)
            report = validate_channel(ch)
            assert report.ok
            worst_complete = max(worst_complete, report.max_deviation)
            for _ in range(100):
                L = int(rng.integers(1, 4))
                rho = DensityMatrix(random_density(rng, L), L)
                out = apply_kraus(rho, ch, int(rng.integers(L)))
                worst_trace = max(worst_trace, abs(out.trace() - 1))
    elapsed = time.perf_counter() - t0
    ok = worst_complete < 1e-12 and worst_trace < 1e-12 and elapsed < 1.0
    verdict(1, ok, f"completeness {worst_complete:.1e}, trace {worst_trace:.1e}, {elapsed:.2f}s")


def test_criterion_02_r_matrix():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    ident = np.abs(check_r_matrix(0.0) - np.eye(4)).max()
    unit = max(
        np.abs(check_r_matrix(u).conj().T @ check_r_matrix(u) - np.eye(4)).max()
        for u in rng.normal(scale=3, size=50)
    )
    r12 = lambda w: np.kron(check_r_matrix(w), np.eye(2))
    r23 = lambda w: np.kron(np.eye(2), check_r_matrix(w))
    braid = 0.0
    for u, v in rng.normal(scale=2, size=(50, 2)):
        lhs = r12(u) @ r23(u + v) @ r12(v)
        rhs = r23(v) @ r12(u + v) @ r23(u)
        braid = max(braid, np.abs(lhs - rhs).max())
    decomp = max(
        phase_distance(decompose_check_r(u).unitary(), check_r_matrix(u))
        for u in rng.uniform(-10, 10, 20)
    )
    elapsed = time.perf_counter() - t0
    ok = ident == 0 and unit < 1e-12 and braid < 1e-10 and decomp < 1e-8 and elapsed < 5
    verdict(2, ok, f"unitarity {unit:.1e}, braid {braid:.1e}, decomposition {decomp:.1e}, {elapsed:.2f}s")


def test_criterion_03_exact_conservation():
    t0 = time.perf_counter()
    failures, worst = [], 0.0
    for L in (2, 4):
        for delta in (0.05, 0.1):
            spec = ModelSpec(L, delta)
            step = evolution_circuit(spec, 1)
            obs = {a + "tot": total_spin(L, a) for a in "XYZ"}
            obs["H"] = xxx_hamiltonian(spec)
            if L == 4:
                obs["Q1+"], obs["Q1-"] = q1_charge(spec, 1), q1_charge(spec, -1)
            for name, o in obs.items():
                drift = operator_drift(step, o)
                worst = max(worst, drift) if name != "H" or L == 2 else worst
                if drift >= 1e-9:
                    failures.append(f"L={L} delta={delta} {name} drift {drift:.2e}")
    spec3 = ModelSpec(3, 0.1)
    for name, o in [("H", xxx_hamiltonian(spec3))] + [(a + "tot", total_spin(3, a)) for a in "XYZ"]:
        drift = operator_drift(u3_step(0.1), o)
        if drift >= 1e-9:
            failures.append(f"L=3 {name} drift {drift:.2e}")
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 10
    detail = "; ".join(failures) if failures else f"max drift {worst:.1e}"
    verdict(3, ok, f"{detail} ({elapsed:.2f}s)")


def test_criterion_04_near_conservation_scaling():
    t0 = time.perf_counter()
    ratios = {}
    for delta in (0.025, 0.05):
        small, large = near_charges_L3(delta), near_charges_L3(2 * delta)
        for name in small:
            d1 = operator_drift(u3_step(delta), small[name])
            d2 = operator_drift(u3_step(2 * delta), large[name])
            ratios[(delta, name)] = d2 / d1
    elapsed = time.perf_counter() - t0
    ok = all(abs(r - 4) <= 0.8 for r in ratios.values()) and elapsed < 5
    lo, hi = min(ratios.values()), max(ratios.values())
    verdict(4, ok, f"drift ratios in [{lo:.3f}, {hi:.3f}], {elapsed:.2f}s")


@pytest.fixture(scope="module")
def c5_models():
    t0 = time.perf_counter()
    ds = gen_dataset(ModelSpec(2, DELTA), 4)
    models = {
        seed: train(AnsatzConfig.random(2, 2, seed), ds, TrainOptions(alpha=ALPHA_C5, seed=seed))
        for seed in SEEDS_C5
    }
    return models, time.perf_counter() - t0


def test_criterion_05_training_loss_scale(c5_models):
    models, elapsed = c5_models
    parts = [f"seed {s}: loss {m.final_loss:.2e} a={m.a:.4f}" for s, m in models.items()]
    ok = all(m.final_loss < 1e-2 and 0.9 <= m.a <= 1.1 for m in models.values()) and elapsed < 600
    verdict(5, ok, f"{'; '.join(parts)} ({elapsed:.0f}s)")


def test_criterion_06_fidelity_floor(c5_models):
    models, _ = c5_models
    f = {x: fidelity_vs_exact(models[SEEDS_C5[0]], x) for x in (-0.3, 0.1, 0.3)}
    ok = all(v > 0.9 for v in f.values())
    verdict(6, ok, ", ".join(f"F({x})={v:.4f}" for x, v in f.items()))


@pytest.fixture(scope="module")
def c7_models():
    t0 = time.perf_counter()
    models = {}
    for d in (6, 10):
        ds = gen_dataset(ModelSpec(2, DELTA), d)
        models[d] = train(AnsatzConfig.random(2, bench.ladder_depth(d), 0), ds, TrainOptions(seed=0))
    return models, time.perf_counter() - t0


def test_criterion_07_noise_mitigation(c7_models, tmp_path):
    models, train_time = c7_models
    t0 = time.perf_counter()
    cfg = bench.ExperimentConfig(
        d=(6, 10), noise=bench.CHANNELS, observables=("H", "Ztot"), out_dir=str(tmp_path)
    )
    rows = bench.cmd_benchmark(cfg, list(models.values()))
    devs = bench.mean_deviations(rows)
    elapsed = train_time + time.perf_counter() - t0
    losing = [
        f"{kind}/d={d}/{name} ({learned:.4f} vs {orig:.4f})"
        for (kind, d, name), (orig, learned) in devs.items()
        if not learned < orig
    ]
    ok = not losing and elapsed < 900
    detail = "learned closer in every cell" if not losing else "learned not closer: " + "; ".join(losing)
    verdict(7, ok, f"{detail} ({len(devs)} cells, {elapsed:.0f}s)")


def test_criterion_08_three_site_headline(tmp_path):
    delta, h_ideal = bench.calibrate_delta(1.747)
    spec = ModelSpec(3, delta)
    x = [-0.3]
    z_ideal = bench.original_expectations(spec, 5, x, [named_observable("Ztot", spec)])[0, 0]
    ds = gen_dataset(spec, 5)
    model = train(AnsatzConfig.random(3, 2, 0), ds, TrainOptions(seed=0))
    cfg = bench.ExperimentConfig(
        L=3, delta=delta, d=(5,), noise=("bitflip", "depolarizing"), observables=("H",),
        x_points=tuple(x), out_dir=str(tmp_path),
    )
    rows = bench.cmd_benchmark(cfg, [model])
    checks = {
        "H": abs(h_ideal - 1.747) <= 0.01,
        "Ztot": abs(z_ideal - 1.994) <= 0.01,
    }
    parts = [f"delta={delta:.4f} ideal H={h_ideal:.4f} Ztot={z_ideal:.4f}"]
    for r in rows:
        rel = abs(r.noisy_learned - r.ideal_original) / abs(r.ideal_original)
        checks[f"{r.noise_kind} original<0.9"] = r.noisy_original < 0.9
        checks[f"{r.noise_kind} learned rel<15%"] = rel < 0.15
        parts.append(f"{r.noise_kind}: noisy original {r.noisy_original:.3f}, learned rel dev {rel:.3f}")
    failed = [k for k, v in checks.items() if not v]
    verdict(8, not failed, "; ".join(parts) + (f"; failed: {', '.join(failed)}" if failed else ""))


def test_criterion_09_gate_counts():
    t0 = time.perf_counter()
    bad = []
    for L in (2, 3, 4):
        for d in range(0, 16):
            if bench.original_counts(L, d, "paper-tally") != (5 * L * d, 4 * L * d):
                bad.append(f"original L={L} d={d}")
        for D in range(1, 5):
            if bench.ansatz_counts(L, D) != (L * (L + 5) * D // 2, L * (L - 1) * D):
                bad.append(f"ansatz L={L} D={D}")
    elapsed = time.perf_counter() - t0
    verdict(9, not bad and elapsed < 1, f"{'all counts match' if not bad else bad} ({elapsed:.2f}s)")


def test_criterion_10_reuse(c7_models):
    models, _ = c7_models
    xs = bench.ExperimentConfig().grid
    dev = float(np.mean([r[5] for r in bench.reuse_curve(models[10], 2, xs)]))
    single = float(np.mean([r[5] for r in bench.reuse_curve(models[10], 1, xs)]))
    verdict(10, dev < 0.15, f"doubled d=10 model vs exact d=20 <Z1>: mean |dev| {dev:.4f} (single {single:.4f})")
