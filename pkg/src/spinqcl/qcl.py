"""Quantum circuit learning of shallow surrogates for deep Trotter circuits.

The learned circuit acts on the encoded input ``|psi_in(x)>`` with ``D``
layers, each an all-to-all Ising block ``exp(i T sum_{j<k} a_jk Z_j Z_k)``
followed by ``RX, RZ, RX`` on every qubit. Training fits the parameters and a
global scale ``a`` so that ``a <O>`` matches the conserved charges
(``Ztot``, ``Xtot``, ``Ytot``, ``H``) of the input state and the evolved
``<Z1>``.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .circuits import (
    Circuit,
    NoiseSpec,
    cnot,
    evolve_densities,
    evolve_states,
    kraus_density,
    rotation_matrix,
    rx,
    ry,
    rz,
)
from .model import ModelSpec, evolution_circuit, named_observable
from .optimize import NelderMeadOptions, nelder_mead
from .quantum import ObservableSum, conjugate_density

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
TRAINED_OBSERVABLES = ("Z1", "Ztot", "Xtot", "Ytot", "H")
DEFAULT_ALPHA = (2.0, 1.0, 1.0, 1.0, 3.0)
A_SANE_BAND = (0.9, 1.1)


class ModelFileError(ValueError):
    pass


# -- input encoding ---------------------------------------------------------


def _check_x(x: float) -> float:
    x = float(x)
    if not -1.0 <= x <= 1.0:
        raise ValueError(f"input x={x} outside [-1, 1]")
    return x


def input_encoding(x: float, L: int) -> Circuit:
    """``V_in(x)``: qubits 0, 2, ... get ``RY(asin x)``, qubits 1, 3, ... get
    ``RX(asin x)``, and every qubit is then rotated by ``RZ(acos x^2)``."""
    x = _check_x(x)
    s, c = math.asin(x), math.acos(x * x)
    ops = []
    for q in range(L):
        ops.append(ry(q, s) if q % 2 == 0 else rx(q, s))
        ops.append(rz(q, c))
    return Circuit(L, tuple(ops))


def _encoded_qubit(x: float, q: int) -> np.ndarray:
    s, c = math.asin(x), math.acos(x * x)
    first = rotation_matrix("Y" if q % 2 == 0 else "X", s)
    return rotation_matrix("Z", c) @ first[:, 0]


def encoded_states(xs: Sequence[float], L: int) -> np.ndarray:
    """Amplitudes of ``|psi_in(x)>`` for every ``x``, shape ``(M, 2^L)``."""
    out = []
    for x in xs:
        x = _check_x(x)
        psi = np.ones(1, dtype=complex)
        for q in reversed(range(L)):
            psi = np.kron(psi, _encoded_qubit(x, q))
        out.append(psi)
    return np.array(out)


def prepared_densities(
    xs: Sequence[float], L: int, noise: NoiseSpec | None, noisy_preparation: bool = True
) -> np.ndarray:
    """Density matrices after ``V_in(x)``, with gate noise on the encoding unless exempted."""
    if noise is None or not noisy_preparation or noise.p == 0:
        psi = encoded_states(xs, L)
        return np.einsum("mi,mj->mij", psi, psi.conj())
    dim = 2**L
    out = np.zeros((len(xs), dim, dim), dtype=complex)
    ops = noise.channel().kraus_ops
    for m, x in enumerate(xs):
        rho = np.zeros((dim, dim), dtype=complex)
        rho[0, 0] = 1.0
        for op in input_encoding(x, L).ops:
            rho = conjugate_density(rho, op.matrix(), op.targets, L)
            rho = kraus_density(rho, ops, op.targets, L)
        out[m] = rho
    return out


# -- ansatz -----------------------------------------------------------------


@dataclass(frozen=True)
class AnsatzConfig:
    L: int
    D: int
    couplings: tuple[float, ...]
    T: float = 1.0
    seed: int = 0

    def __post_init__(self):
        couplings = tuple(float(a) for a in self.couplings)
        if self.L < 1 or self.D < 1:
            raise ValueError("ansatz needs L >= 1 and D >= 1")
        if len(couplings) != self.L * (self.L - 1) // 2:
            raise ValueError(
                f"expected {self.L * (self.L - 1) // 2} couplings, got {len(couplings)}"
            )
        if not all(math.isfinite(a) for a in couplings):
            raise ValueError("couplings must be finite")
        object.__setattr__(self, "couplings", couplings)

    @classmethod
    def random(cls, L: int, D: int, seed: int = 0, T: float = 1.0) -> "AnsatzConfig":
        """Couplings drawn i.i.d. from U[-1, 1] and frozen."""
        rng = np.random.default_rng(seed)
        return cls(L, D, tuple(rng.uniform(-1.0, 1.0, L * (L - 1) // 2)), T, seed)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [(j, k) for j in range(self.L) for k in range(j + 1, self.L)]

    @property
    def n_params(self) -> int:
        return 3 * self.L * self.D

    def with_depth(self, D: int) -> "AnsatzConfig":
        return AnsatzConfig(self.L, D, self.couplings, self.T, self.seed)

    @cached_property
    def ising_phases(self) -> np.ndarray:
        """Diagonal of the Ising block in the computational basis."""
        idx = np.arange(2**self.L)
        z = 1 - 2 * ((idx[:, None] >> np.arange(self.L)) & 1)
        energy = sum(a * z[:, j] * z[:, k] for (j, k), a in zip(self.pairs, self.couplings))
        return np.exp(1j * self.T * np.asarray(energy, dtype=float))


def _check_theta(config: AnsatzConfig, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != config.n_params:
        raise ValueError(f"expected {config.n_params} angles, got {theta.size}")
    return theta


def build_ansatz(config: AnsatzConfig, theta) -> Circuit:
    """Elementary-gate circuit of the ``D``-layer ansatz."""
    theta = _check_theta(config, theta)
    L = config.L
    ops = []
    for layer in range(config.D):
        for (j, k), a in zip(config.pairs, config.couplings):
            ops += [cnot(j, k), rz(k, -2.0 * a * config.T), cnot(j, k)]
        base = 3 * L * layer
        for q in range(L):
            t = theta[base + 3 * q : base + 3 * q + 3]
            ops += [rx(q, t[0]), rz(q, t[1]), rx(q, t[2])]
    return Circuit(L, tuple(ops))


def _rotation_blocks(theta: np.ndarray, L: int, D: int) -> np.ndarray:
    """``RX(t2) RZ(t1) RX(t0)`` for every layer and qubit, shape ``(D, L, 2, 2)``."""
    t = theta.reshape(D, L, 3)
    c0, s0 = np.cos(t[..., 0] / 2), np.sin(t[..., 0] / 2)
    c2, s2 = np.cos(t[..., 2] / 2), np.sin(t[..., 2] / 2)
    e = np.exp(-0.5j * t[..., 1])
    ec = e.conj()
    # RX(t2) @ diag(e, ec) @ RX(t0), expanded
    m00 = c2 * e * c0 - s2 * ec * s0
    m01 = -1j * (c2 * e * s0 + s2 * ec * c0)
    m10 = -1j * (s2 * e * c0 + c2 * ec * s0)
    m11 = -s2 * e * s0 + c2 * ec * c0
    return np.stack([np.stack([m00, m01], -1), np.stack([m10, m11], -1)], -2)


def ansatz_unitary(config: AnsatzConfig, theta) -> np.ndarray:
    """Dense unitary of :func:`build_ansatz`, assembled without the gate list."""
    theta = _check_theta(config, theta)
    L = config.L
    blocks = _rotation_blocks(theta, L, config.D)
    u = np.eye(2**L, dtype=complex)
    phases = config.ising_phases
    for layer in range(config.D):
        local = blocks[layer, L - 1]
        for q in range(L - 2, -1, -1):
            local = np.kron(local, blocks[layer, q])
        u = local @ (phases[:, None] * u)
    return u


# -- datasets ---------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    xs: np.ndarray
    targets: Mapping[str, np.ndarray]
    d: int
    L: int
    delta: float
    J: float = 1.0

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        targets = {k: np.asarray(v, dtype=float) for k, v in self.targets.items()}
        for name, v in targets.items():
            if v.shape != xs.shape:
                raise ValueError(f"target {name} has {v.size} points, grid has {xs.size}")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "targets", targets)

    @property
    def M(self) -> int:
        return int(self.xs.size)

    @property
    def spec(self) -> ModelSpec:
        return ModelSpec(self.L, self.delta, self.J)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# L={self.L} d={self.d} delta={self.delta!r} J={self.J!r}\n")
        names = list(self.targets)
        buf.write(",".join(["x"] + [f"y_{n}" for n in names]) + "\n")
        for i, x in enumerate(self.xs):
            row = [x] + [self.targets[n][i] for n in names]
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Dataset":
        meta: dict[str, str] = {}
        rows = []
        header = None
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for item in line[1:].split():
                    key, _, value = item.partition("=")
                    meta[key] = value
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append([float(v) for v in line.split(",")])
        try:
            L, d, delta = int(meta["L"]), int(meta["d"]), float(meta["delta"])
        except KeyError as exc:
            raise ValueError(f"dataset header lacks {exc.args[0]!r}") from None
        if header is None or header[0] != "x":
            raise ValueError("dataset needs a header row starting with 'x'")
        data = np.array(rows, dtype=float).reshape(-1, len(header))
        targets = {h[2:]: data[:, i] for i, h in enumerate(header) if i > 0}
        return cls(data[:, 0], targets, d, L, delta, float(meta.get("J", 1.0)))

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()[:16]


def gen_dataset(
    spec: ModelSpec, d: int, M: int = 200, observables: Sequence[str] = TRAINED_OBSERVABLES
) -> Dataset:
    """Targets on a uniform grid of ``M`` points in ``[-1, 1]``.

    Conserved charges are evaluated on the encoded input itself; ``Z1`` (and
    any other non-conserved observable) on ``U^d |psi_in(x)>`` by exact
    state-vector simulation.
    """
    if M < 2:
        raise ValueError("dataset needs at least two grid points")
    xs = np.linspace(-1.0, 1.0, M)
    psi_in = encoded_states(xs, spec.L)
    psi_d = evolve_states(psi_in, evolution_circuit(spec, d))
    targets = {}
    for name in observables:
        state = psi_in if name in ("Ztot", "Xtot", "Ytot", "H") else psi_d
        targets[name] = _expect_batch(state, named_observable(name, spec).matrix())
    return Dataset(xs, targets, d, spec.L, spec.delta, spec.J)


# -- evaluation -------------------------------------------------------------


def _expect_batch(psi: np.ndarray, op: np.ndarray) -> np.ndarray:
    return np.einsum("mi,ij,mj->m", psi.conj(), op, psi).real


def _expect_density_batch(rho: np.ndarray, op: np.ndarray) -> np.ndarray:
    return np.einsum("mij,ji->m", rho, op).real


def circuit_expectations(
    config: AnsatzConfig,
    theta,
    xs: Sequence[float],
    observables: Sequence[ObservableSum],
    executor: NoiseSpec | None = None,
    repetitions: int = 1,
    noisy_preparation: bool = True,
) -> np.ndarray:
    """Raw ``<O>`` (no scale factor) of the learned circuit, shape ``(n_obs, M)``.

    ``executor=None`` is the ideal simulator; a :class:`NoiseSpec` runs the
    encoding and ``repetitions`` copies of the ansatz through the noisy
    density-matrix executor.
    """
    if executor is None:
        u = np.linalg.matrix_power(ansatz_unitary(config, theta), repetitions)
        psi = encoded_states(xs, config.L) @ u.T
        return np.array([_expect_batch(psi, o.matrix()) for o in observables])
    rho = prepared_densities(xs, config.L, executor, noisy_preparation)
    rho = evolve_densities(rho, build_ansatz(config, theta).repeated(repetitions), executor)
    return np.array([_expect_density_batch(rho, o.matrix()) for o in observables])


class _LossFunction:
    """Picklable loss over the joint vector ``(theta, a)`` with cached inputs."""

    def __init__(self, dataset: Dataset, config: AnsatzConfig, alpha, executor=None):
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != (len(TRAINED_OBSERVABLES),) or np.any(alpha < 0):
            raise ValueError("alpha must hold five non-negative weights")
        if dataset.L != config.L:
            raise ValueError(f"dataset is for L={dataset.L}, ansatz for L={config.L}")
        missing = [n for n in TRAINED_OBSERVABLES if n not in dataset.targets]
        if missing:
            raise ValueError(f"dataset lacks targets {missing}")
        self.dataset, self.config, self.alpha, self.executor = dataset, config, alpha, executor
        spec = dataset.spec
        self.ops = [named_observable(n, spec) for n in TRAINED_OBSERVABLES]
        self.op_stack_t = np.array([o.matrix().T for o in self.ops])
        self.targets = np.array([dataset.targets[n] for n in TRAINED_OBSERVABLES])
        self.psi_in = encoded_states(dataset.xs, config.L)

    def predictions(self, theta) -> np.ndarray:
        if self.executor is None:
            psi = self.psi_in @ ansatz_unitary(self.config, theta).T
            return np.sum(psi.conj() * (psi @ self.op_stack_t), axis=-1).real
        return circuit_expectations(self.config, theta, self.dataset.xs, self.ops, self.executor)

    def value(self, theta, a: float) -> float:
        resid = a * self.predictions(theta) - self.targets
        return float(self.alpha @ np.mean(resid**2, axis=1))

    def __call__(self, params: np.ndarray) -> float:
        return self.value(params[:-1], params[-1])


def loss(
    theta,
    a: float,
    dataset: Dataset,
    config: AnsatzConfig,
    alpha: Sequence[float] = DEFAULT_ALPHA,
    executor: NoiseSpec | None = None,
) -> float:
    """Weighted mean-squared mismatch ``sum_k alpha_k mean_i (a f_k(x_i) - y_k(x_i))^2``.

    The weights follow the order ``Z1, Ztot, Xtot, Ytot, H``.
    """
    return _LossFunction(dataset, config, alpha, executor).value(theta, a)


# -- training ---------------------------------------------------------------


@dataclass(frozen=True)
class TrainOptions:
    restarts: int = 8
    alpha: tuple[float, ...] = DEFAULT_ALPHA
    ftol: float = 1e-6
    max_iter: int = 20000
    initial_step: float = 0.5
    adaptive: bool = False
    seed: int = 0
    workers: int = 1


@dataclass(frozen=True)
class TrainedModel:
    config: AnsatzConfig
    theta: tuple[float, ...]
    a: float
    d: int
    delta: float
    final_loss: float
    alpha: tuple[float, ...] = DEFAULT_ALPHA
    J: float = 1.0
    dataset_hash: str = ""
    restart_losses: tuple[float, ...] = ()
    optimizer: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        theta = tuple(float(t) for t in self.theta)
        if len(theta) != self.config.n_params:
            raise ValueError(f"model needs {self.config.n_params} angles, got {len(theta)}")
        if not all(math.isfinite(t) for t in theta) or not math.isfinite(self.a):
            raise ValueError("model parameters must be finite")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "alpha", tuple(float(v) for v in self.alpha))
        object.__setattr__(self, "restart_losses", tuple(float(v) for v in self.restart_losses))
        lo, hi = A_SANE_BAND
        if not lo <= self.a <= hi:
            warnings.warn(f"scale factor a={self.a:.4f} outside [{lo}, {hi}]", stacklevel=2)

    @property
    def L(self) -> int:
        return self.config.L

    @property
    def D(self) -> int:
        return self.config.D

    @property
    def spec(self) -> ModelSpec:
        return ModelSpec(self.config.L, self.delta, self.J)

    def circuit(self, repetitions: int = 1) -> Circuit:
        return build_ansatz(self.config, self.theta).repeated(repetitions)


def _run_restart(args) -> tuple[np.ndarray, float, int, str]:
    lossfn, x0, nm_opts = args
    res = nelder_mead(lossfn, x0, nm_opts)
    return res.x, res.fun, res.nit, res.reason


def train(
    config: AnsatzConfig, dataset: Dataset, options: TrainOptions | None = None
) -> TrainedModel:
    """Fit ``(theta, a)`` with Nelder-Mead from ``restarts`` random starts; keep the best.

    Angles start uniform in ``[0, 2 pi)`` and ``a`` starts at 1. Restart ``r``
    draws its start from ``default_rng([seed, r])`` so results do not depend
    on the worker schedule.
    """
    opts = options or TrainOptions()
    lossfn = _LossFunction(dataset, config, opts.alpha)
    nm_opts = NelderMeadOptions(
        ftol=opts.ftol, max_iter=opts.max_iter, initial_step=opts.initial_step, adaptive=opts.adaptive
    )
    starts = []
    for r in range(opts.restarts):
        rng = np.random.default_rng([opts.seed, r])
        starts.append(np.append(rng.uniform(0.0, 2.0 * np.pi, config.n_params), 1.0))
    jobs = [(lossfn, x0, nm_opts) for x0 in starts]
    if opts.workers > 1:
        with ProcessPoolExecutor(opts.workers) as pool:
            results = list(pool.map(_run_restart, jobs))
    else:
        results = [_run_restart(j) for j in jobs]
    for r, (_, fun, nit, reason) in enumerate(results):
        log.info("restart %d: loss %.6g after %d iterations (%s)", r, fun, nit, reason)
    losses = [fun for _, fun, _, _ in results]
    best = int(np.argmin(losses))
    x, fun, nit, reason = results[best]
    return TrainedModel(
        config=config,
        theta=tuple(x[:-1]),
        a=float(x[-1]),
        d=dataset.d,
        delta=dataset.delta,
        final_loss=float(fun),
        alpha=tuple(opts.alpha),
        J=dataset.J,
        dataset_hash=dataset.digest(),
        restart_losses=tuple(losses),
        optimizer={
            "method": "nelder-mead",
            "restarts": opts.restarts,
            "ftol": opts.ftol,
            "max_iter": opts.max_iter,
            "initial_step": opts.initial_step,
            "adaptive": opts.adaptive,
            "seed": opts.seed,
            "best_restart": best,
            "iterations": nit,
            "termination": reason,
        },
    )


def sweep_depth(
    dataset: Dataset,
    depths: Sequence[int] = (2, 3, 4),
    seed: int = 0,
    T: float = 1.0,
    options: TrainOptions | None = None,
) -> tuple[TrainedModel, dict[int, TrainedModel]]:
    """Train one model per depth on the same couplings and return the lowest-loss one."""
    base = AnsatzConfig.random(dataset.L, 1, seed, T)
    models = {D: train(base.with_depth(D), dataset, options) for D in depths}
    best = min(models.values(), key=lambda m: m.final_loss)
    return best, models


# -- prediction -------------------------------------------------------------


def predict_many(
    model: TrainedModel,
    xs: Sequence[float],
    obs: ObservableSum,
    executor: NoiseSpec | None = None,
    repetitions: int = 1,
    noisy_preparation: bool = True,
) -> np.ndarray:
    raw = circuit_expectations(
        model.config, model.theta, xs, [obs], executor, repetitions, noisy_preparation
    )[0]
    return model.a * raw


def predict(
    model: TrainedModel, x: float, obs: ObservableSum, executor: NoiseSpec | None = None
) -> float:
    """``a <O>`` on the learned circuit, scaled exactly as in the loss."""
    return float(predict_many(model, [x], obs, executor)[0])


def fidelity_vs_exact(
    model: TrainedModel, x: float, d: int | None = None, delta: float | None = None
) -> float:
    """``|<psi_out(x)| U(delta)^d |psi_in(x)>|``; the scale ``a`` plays no part."""
    d = model.d if d is None else d
    spec = ModelSpec(model.L, model.delta if delta is None else delta, model.J)
    psi_in = encoded_states([x], model.L)
    exact = evolve_states(psi_in, evolution_circuit(spec, d))[0]
    learned = (psi_in @ ansatz_unitary(model.config, model.theta).T)[0]
    return float(min(abs(np.vdot(learned, exact)), 1.0))


# -- persistence ------------------------------------------------------------


def model_to_dict(model: TrainedModel) -> dict:
    cfg = model.config
    return {
        "format_version": FORMAT_VERSION,
        "L": cfg.L,
        "D": cfg.D,
        "d": model.d,
        "delta": model.delta,
        "J": model.J,
        "T": cfg.T,
        "seed": cfg.seed,
        "couplings": list(cfg.couplings),
        "theta": list(model.theta),
        "a": model.a,
        "final_loss": model.final_loss,
        "alpha": list(model.alpha),
        "dataset_hash": model.dataset_hash,
        "restart_losses": list(model.restart_losses),
        "optimizer": dict(model.optimizer),
    }


def model_from_dict(data: dict) -> TrainedModel:
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFileError(
            f"model format_version {version!r} is not supported (expected {FORMAT_VERSION})"
        )
    try:
        config = AnsatzConfig(
            int(data["L"]), int(data["D"]), tuple(data["couplings"]), float(data["T"]), int(data["seed"])
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return TrainedModel(
                config=config,
                theta=tuple(data["theta"]),
                a=float(data["a"]),
                d=int(data["d"]),
                delta=float(data["delta"]),
                final_loss=float(data["final_loss"]),
                alpha=tuple(data["alpha"]),
                J=float(data.get("J", 1.0)),
                dataset_hash=str(data.get("dataset_hash", "")),
                restart_losses=tuple(data.get("restart_losses", ())),
                optimizer=dict(data.get("optimizer", {})),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"malformed model file: {exc}") from None


def save_model(model: TrainedModel, path) -> None:
    text = json.dumps(model_to_dict(model), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")


def load_model(path) -> TrainedModel:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"cannot parse model file {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ModelFileError(f"model file {path} does not hold an object")
    return model_from_dict(data)
