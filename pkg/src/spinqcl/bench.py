"""Experiment harness: datasets, training, four-way comparisons, gate counts and reuse.

Every command takes an :class:`ExperimentConfig`, writes CSV files into the
configured output directory and returns the rows it wrote so tests can check
them without reparsing.
"""

from __future__ import annotations

import csv
import json
import logging
import platform
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml
from scipy.optimize import minimize_scalar

from . import __version__
from .circuits import NoiseSpec, evolve_densities, evolve_states, gate_counts
from .model import ModelSpec, evolution_circuit, named_observable
from .noise import DEFAULT_P, parse_kind
from .qcl import (
    DEFAULT_ALPHA,
    AnsatzConfig,
    Dataset,
    TrainedModel,
    TrainOptions,
    build_ansatz,
    circuit_expectations,
    encoded_states,
    gen_dataset,
    prepared_densities,
    save_model,
    train,
)
from .quantum import DensityMatrix, ObservableSum, sample_observable

log = logging.getLogger(__name__)

CSV_DIGITS = 12
CHANNELS = ("bitflip", "depolarizing", "ampdamp", "phasedamp")


class ConfigError(ValueError):
    pass


def ladder_depth(d: int) -> int:
    """Default ansatz depth for ``d`` evolution steps: 2 up to ``d=4``, 4 beyond."""
    return 2 if d <= 4 else 4


@dataclass(frozen=True)
class ExperimentConfig:
    L: int = 2
    delta: float = 0.01
    J: float = 1.0
    d: tuple[int, ...] = (4,)
    # None picks ladder_depth(d) per step count
    D: tuple[int, ...] | None = None
    M: int = 200
    x_points: tuple[float, ...] | None = None
    observables: tuple[str, ...] = ("H", "Ztot")
    noise: tuple[str, ...] = ("depolarizing",)
    p: float | None = None
    shots: int = 0
    seed: int = 0
    T: float = 1.0
    restarts: int = 8
    alpha: tuple[float, ...] = DEFAULT_ALPHA
    ftol: float = 1e-6
    max_iter: int = 20000
    repetitions: int = 2
    noisy_preparation: bool = True
    workers: int = 1
    out_dir: str = "out"
    accounting: str = "template"

    def __post_init__(self):
        try:
            ModelSpec(int(self.L), float(self.delta), float(self.J))
        except ValueError as exc:
            raise ConfigError(f"L/delta: {exc}") from None
        if not self.d or any(int(d) < 0 for d in self.d):
            raise ConfigError("d: need at least one non-negative step count")
        if self.D is not None and (not self.D or any(int(D) < 1 for D in self.D)):
            raise ConfigError("D: layer counts must be >= 1")
        if self.M < 2:
            raise ConfigError("M: grid needs at least two points")
        if self.x_points is not None and any(abs(float(x)) > 1 for x in self.x_points):
            raise ConfigError("x_points: values must lie in [-1, 1]")
        if self.shots < 0:
            raise ConfigError("shots: must be >= 0")
        if self.p is not None and not 0.0 <= float(self.p) <= 1.0:
            raise ConfigError("p: must lie in [0, 1]")
        for name in self.noise:
            try:
                parse_kind(name)
            except ValueError as exc:
                raise ConfigError(f"noise: {exc}") from None
        if self.accounting not in ("template", "paper-tally"):
            raise ConfigError("accounting: expected 'template' or 'paper-tally'")
        if len(self.alpha) != 5:
            raise ConfigError("alpha: expected five weights")
        if self.restarts < 1 or self.repetitions < 1 or self.workers < 1:
            raise ConfigError("restarts, repetitions and workers must be >= 1")

    @property
    def spec(self) -> ModelSpec:
        return ModelSpec(self.L, self.delta, self.J)

    @property
    def grid(self) -> np.ndarray:
        if self.x_points is not None:
            return np.asarray(self.x_points, dtype=float)
        return np.linspace(-1.0, 1.0, self.M)

    def depths(self, d: int) -> tuple[int, ...]:
        return self.D if self.D is not None else (ladder_depth(d),)

    def noise_specs(self) -> list[NoiseSpec]:
        out = []
        for name in self.noise:
            kind = parse_kind(name)
            out.append(NoiseSpec(kind, DEFAULT_P[kind] if self.p is None else self.p))
        return out

    def train_options(self) -> TrainOptions:
        return TrainOptions(
            restarts=self.restarts,
            alpha=tuple(self.alpha),
            ftol=self.ftol,
            max_iter=self.max_iter,
            seed=self.seed,
            workers=self.workers,
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        for key, value in out.items():
            if isinstance(value, tuple):
                out[key] = list(value)
        return out


_TUPLE_KEYS = {"d": int, "D": int, "x_points": float, "observables": str, "noise": str, "alpha": float}
_SCALAR_KEYS = {
    "L": int, "delta": float, "J": float, "M": int, "p": float, "shots": int, "seed": int,
    "T": float, "restarts": int, "ftol": float, "max_iter": int, "repetitions": int,
    "noisy_preparation": bool, "workers": int, "out_dir": str, "accounting": str,
}


def config_from_mapping(data: Mapping, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Build a config from plain key/value data; ``None`` values keep the base value."""
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    for key, raw in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if raw is None:
            continue
        try:
            if key in _TUPLE_KEYS:
                items = raw if isinstance(raw, (list, tuple)) else [raw]
                values[key] = tuple(_TUPLE_KEYS[key](v) for v in items)
            else:
                caster = _SCALAR_KEYS[key]
                if caster is bool and not isinstance(raw, bool):
                    raise TypeError("expected true or false")
                values[key] = caster(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for config key {key!r}: {exc}") from None
    return replace(base or ExperimentConfig(), **values)


def load_config(path) -> ExperimentConfig:
    """Read a YAML mapping of :class:`ExperimentConfig` fields."""
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a mapping")
    return config_from_mapping(data)


# -- output -------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.{CSV_DIGITS}g}"
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def write_manifest(cfg: ExperimentConfig, command: str, outputs: Sequence, started: float, extra=None) -> Path:
    """Record the resolved config, outputs and timings next to the CSV files."""
    manifest = {
        "command": command,
        "config": cfg.to_dict(),
        "outputs": [str(p) for p in outputs],
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
        "elapsed_s": round(time.time() - started, 3),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    if extra:
        manifest.update(extra)
    path = Path(cfg.out_dir) / f"manifest_{command}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def dataset_path(cfg: ExperimentConfig, d: int) -> Path:
    return Path(cfg.out_dir) / f"dataset_L{cfg.L}_d{d}.csv"


def model_path(cfg: ExperimentConfig, d: int, D: int) -> Path:
    return Path(cfg.out_dir) / f"model_L{cfg.L}_d{d}_D{D}.json"


# -- gen-data / train -------------------------------------------------------


def cmd_gen_data(cfg: ExperimentConfig) -> dict[int, Dataset]:
    out = {}
    for d in cfg.d:
        ds = gen_dataset(cfg.spec, d, cfg.M)
        path = dataset_path(cfg, d)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(ds.to_csv())
        stats = ", ".join(
            f"{k} [{v.min():.3f}, {v.max():.3f}]" for k, v in ds.targets.items()
        )
        print(f"wrote {path} ({ds.M} rows): {stats}")
        out[d] = ds
    return out


def check_dataset(cfg: ExperimentConfig, ds: Dataset) -> None:
    if ds.L != cfg.L or not np.isclose(ds.delta, cfg.delta) or not np.isclose(ds.J, cfg.J):
        raise ConfigError(
            f"dataset (L={ds.L}, delta={ds.delta}, J={ds.J}) does not match config "
            f"(L={cfg.L}, delta={cfg.delta}, J={cfg.J})"
        )


def load_dataset(path) -> Dataset:
    try:
        return Dataset.from_csv(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read dataset {path}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"malformed dataset {path}: {exc}") from None


def train_one(cfg: ExperimentConfig, ds: Dataset, D: int) -> TrainedModel:
    check_dataset(cfg, ds)
    config = AnsatzConfig.random(cfg.L, D, cfg.seed, cfg.T)
    model = train(config, ds, cfg.train_options())
    log.info(
        "d=%d D=%d: best loss %.4g, a=%.4f, restart losses %s",
        ds.d, D, model.final_loss, model.a, ", ".join(f"{v:.4g}" for v in model.restart_losses),
    )
    return model


def _datasets(cfg: ExperimentConfig, dataset_file=None) -> list[Dataset]:
    if dataset_file is not None:
        ds = load_dataset(dataset_file)
        check_dataset(cfg, ds)
        return [ds]
    return [gen_dataset(cfg.spec, d, cfg.M) for d in cfg.d]


def cmd_train(cfg: ExperimentConfig, dataset_file=None) -> list[tuple[Path, TrainedModel]]:
    out = []
    for ds in _datasets(cfg, dataset_file):
        for D in cfg.depths(ds.d):
            model = train_one(cfg, ds, D)
            path = model_path(cfg, ds.d, D)
            path.parent.mkdir(parents=True, exist_ok=True)
            save_model(model, path)
            print(f"wrote {path}: loss {model.final_loss:.4g}, a={model.a:.4f}")
            out.append((path, model))
    return out


def cmd_sweep_depth(cfg: ExperimentConfig, dataset_file=None) -> list[tuple]:
    """Train every ``D`` (default 2, 3, 4) on each dataset; keep the best model per ``d``."""
    depths = cfg.D if cfg.D is not None else (2, 3, 4)
    rows = []
    for ds in _datasets(cfg, dataset_file):
        models = {D: train_one(cfg, ds, D) for D in depths}
        best = min(models, key=lambda D: models[D].final_loss)
        for D, m in models.items():
            rows.append((ds.d, D, m.final_loss, m.a, D == best))
        path = Path(cfg.out_dir) / f"model_L{cfg.L}_d{ds.d}_best.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        save_model(models[best], path)
        print(f"d={ds.d}: best D={best} (loss {models[best].final_loss:.4g}) -> {path}")
    write_csv(Path(cfg.out_dir) / "sweep_D.csv", ("d", "D", "final_loss", "a", "selected"), rows)
    return rows


# -- four-way comparison -------------------------------------------------------


@dataclass(frozen=True)
class ComparisonRow:
    x: float
    d: int
    observable: str
    ideal_original: float
    ideal_learned: float
    noisy_original: float
    noisy_learned: float
    noise_kind: str
    p: float
    shots: int

    def __post_init__(self):
        values = (self.ideal_original, self.ideal_learned, self.noisy_original, self.noisy_learned)
        if not all(np.isfinite(v) for v in values):
            raise FloatingPointError(f"non-finite comparison value at x={self.x}, {self.observable}")

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, f.name) for f in fields(self))


COMPARISON_HEADER = tuple(f.name for f in fields(ComparisonRow))


def check_model(cfg: ExperimentConfig, model: TrainedModel) -> None:
    if model.L != cfg.L or not np.isclose(model.delta, cfg.delta) or not np.isclose(model.J, cfg.J):
        raise ConfigError(
            f"model (L={model.L}, delta={model.delta}) does not match config (L={cfg.L}, delta={cfg.delta})"
        )
    if model.d not in cfg.d:
        raise ConfigError(f"model approximates d={model.d}, config lists d={list(cfg.d)}")


def _pure_expectations(psi: np.ndarray, ops: Sequence[np.ndarray]) -> np.ndarray:
    return np.array([np.einsum("mi,ij,mj->m", psi.conj(), o, psi).real for o in ops])


def _density_expectations(rho: np.ndarray, ops: Sequence[np.ndarray]) -> np.ndarray:
    return np.array([np.einsum("mij,ji->m", rho, o).real for o in ops])


def _sampled(rho: np.ndarray, obs: Sequence[ObservableSum], L: int, shots: int, seed) -> np.ndarray:
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    seeds = seed.spawn(len(obs) * len(rho))
    out = np.empty((len(obs), len(rho)))
    for k, o in enumerate(obs):
        for m, r in enumerate(rho):
            out[k, m] = sample_observable(DensityMatrix(r, L), o, shots, seeds[k * len(rho) + m])
    return out


def original_expectations(
    spec: ModelSpec,
    d: int,
    xs: Sequence[float],
    obs: Sequence[ObservableSum],
    noise: NoiseSpec | None = None,
    noisy_preparation: bool = True,
) -> np.ndarray:
    """``<O>`` after the original ``d``-step Trotter circuit, shape ``(n_obs, M)``."""
    ops = [o.matrix() for o in obs]
    if noise is None:
        psi = evolve_states(encoded_states(xs, spec.L), evolution_circuit(spec, d))
        return _pure_expectations(psi, ops)
    rho = prepared_densities(xs, spec.L, noise, noisy_preparation)
    rho = evolve_densities(rho, evolution_circuit(spec, d), noise)
    return _density_expectations(rho, ops)


def compare(
    cfg: ExperimentConfig, model: TrainedModel, noise: NoiseSpec, xs: Sequence[float] | None = None
) -> list[ComparisonRow]:
    """Ideal/noisy expectations of the original and learned circuits at every ``x``.

    Learned values carry the model's scale ``a``. With ``shots > 0`` every
    column is a shot estimate drawn from seeded streams.
    """
    xs = cfg.grid if xs is None else np.asarray(xs, dtype=float)
    spec = ModelSpec(cfg.L, cfg.delta, cfg.J)
    obs = [named_observable(n, spec) for n in cfg.observables]
    d = model.d
    if cfg.shots == 0:
        io_ = original_expectations(spec, d, xs, obs)
        il = model.a * circuit_expectations(model.config, model.theta, xs, obs)
        no = original_expectations(spec, d, xs, obs, noise, cfg.noisy_preparation)
        nl = model.a * circuit_expectations(
            model.config, model.theta, xs, obs, noise, 1, cfg.noisy_preparation
        )
    else:
        psi_in = encoded_states(xs, cfg.L)
        psi_o = evolve_states(psi_in, evolution_circuit(spec, d))
        psi_l = evolve_states(psi_in, build_ansatz(model.config, model.theta))
        pure = lambda psi: np.einsum("mi,mj->mij", psi, psi.conj())
        rho_no = evolve_densities(
            prepared_densities(xs, cfg.L, noise, cfg.noisy_preparation), evolution_circuit(spec, d), noise
        )
        rho_nl = evolve_densities(
            prepared_densities(xs, cfg.L, noise, cfg.noisy_preparation),
            build_ansatz(model.config, model.theta),
            noise,
        )
        streams = np.random.SeedSequence([cfg.seed, d]).spawn(4)
        io_ = _sampled(pure(psi_o), obs, cfg.L, cfg.shots, streams[0])
        il = model.a * _sampled(pure(psi_l), obs, cfg.L, cfg.shots, streams[1])
        no = _sampled(rho_no, obs, cfg.L, cfg.shots, streams[2])
        nl = model.a * _sampled(rho_nl, obs, cfg.L, cfg.shots, streams[3])
    rows = []
    for m, x in enumerate(xs):
        for k, name in enumerate(cfg.observables):
            rows.append(
                ComparisonRow(
                    float(x), d, name, float(io_[k, m]), float(il[k, m]), float(no[k, m]),
                    float(nl[k, m]), noise.channel_kind.value, noise.p, cfg.shots,
                )
            )
    return rows


def cmd_benchmark(cfg: ExperimentConfig, models: Sequence[TrainedModel]) -> list[ComparisonRow]:
    rows = []
    for model in models:
        check_model(cfg, model)
    for noise in cfg.noise_specs():
        for model in sorted(models, key=lambda m: m.d):
            rows += compare(cfg, model, noise)
    path = write_csv(
        Path(cfg.out_dir) / "benchmark.csv", COMPARISON_HEADER, (r.as_tuple() for r in rows)
    )
    print(f"wrote {path} ({len(rows)} rows)")
    for line in summarize(rows):
        print(line)
    return rows


def mean_deviations(rows: Sequence[ComparisonRow]) -> dict[tuple, tuple[float, float]]:
    """Grid-averaged ``|noisy - ideal|`` of original and learned per ``(noise, d, observable)``.

    Both circuits are measured against the ideal original, i.e. the exact
    Trotter value.
    """
    groups: dict[tuple, list[ComparisonRow]] = {}
    for r in rows:
        groups.setdefault((r.noise_kind, r.d, r.observable), []).append(r)
    out = {}
    for key, rs in groups.items():
        orig = np.mean([abs(r.noisy_original - r.ideal_original) for r in rs])
        learned = np.mean([abs(r.noisy_learned - r.ideal_original) for r in rs])
        out[key] = (float(orig), float(learned))
    return out


def summarize(rows: Sequence[ComparisonRow]) -> list[str]:
    lines = []
    for (kind, d, name), (orig, learned) in mean_deviations(rows).items():
        mark = "learned better" if learned < orig else "original better"
        lines.append(
            f"{kind:12s} d={d:<3d} {name:5s} mean|dev| original {orig:.4f} learned {learned:.4f} ({mark})"
        )
    return lines


# -- gate counts ----------------------------------------------------------------


def original_counts(L: int, d: int, accounting: str) -> tuple[int, int]:
    circuit = evolution_circuit(ModelSpec(L, 0.1), d)
    if accounting == "template":
        circuit = circuit.decomposed()
    return gate_counts(circuit, accounting)


def ansatz_counts(L: int, D: int) -> tuple[int, int]:
    config = AnsatzConfig(L, D, tuple(0.5 for _ in range(L * (L - 1) // 2)))
    return gate_counts(build_ansatz(config, np.zeros(config.n_params)))


def break_even_depth(L: int, D: int, accounting: str, d_max: int = 10_000) -> int:
    """Smallest ``d`` at which the original circuit needs more gates than a depth-``D`` ansatz."""
    single, two = original_counts(L, 1, accounting)
    per_step = single + two
    target = sum(ansatz_counts(L, D))
    for d in range(1, d_max + 1):
        if d * per_step > target:
            return d
    raise ValueError("no break-even depth below d_max")


GATECOUNT_HEADER = (
    "L", "d", "D", "template_single", "template_cnot", "tally_single", "tally_cnot",
    "ansatz_single", "ansatz_cnot", "break_even_d",
)


def cmd_gatecount(cfg: ExperimentConfig) -> list[tuple]:
    rows = []
    for d in cfg.d:
        for D in cfg.depths(d):
            t = original_counts(cfg.L, d, "template")
            p = original_counts(cfg.L, d, "paper-tally")
            a = ansatz_counts(cfg.L, D)
            rows.append((cfg.L, d, D, *t, *p, *a, break_even_depth(cfg.L, D, cfg.accounting)))
    write_csv(Path(cfg.out_dir) / "gatecount.csv", GATECOUNT_HEADER, rows)
    print(f"break-even d uses {cfg.accounting} accounting")
    print("  ".join(GATECOUNT_HEADER))
    for row in rows:
        print("  ".join(str(v) for v in row))
    return rows


# -- reuse ----------------------------------------------------------------------


REUSE_HEADER = ("x", "n", "d_total", "learned", "exact", "abs_dev")


def reuse_curve(model: TrainedModel, n: int, xs: Sequence[float], observable: str = "Z1") -> list[tuple]:
    """The learned ansatz applied ``n`` times against exact ``n d``-step evolution."""
    if n < 1:
        raise ValueError("repetitions must be >= 1")
    spec = model.spec
    obs = named_observable(observable, spec)
    exact = original_expectations(spec, n * model.d, xs, [obs])[0]
    learned = model.a * circuit_expectations(model.config, model.theta, xs, [obs], None, n)[0]
    return [
        (float(x), n, n * model.d, float(lv), float(ev), float(abs(lv - ev)))
        for x, lv, ev in zip(xs, learned, exact)
    ]


def cmd_reuse(cfg: ExperimentConfig, model: TrainedModel, n: int | None = None) -> list[tuple]:
    if model.L != cfg.L or not np.isclose(model.delta, cfg.delta):
        raise ConfigError("model L/delta do not match config")
    n = cfg.repetitions if n is None else n
    xs = cfg.grid
    rows = reuse_curve(model, 1, xs) + (reuse_curve(model, n, xs) if n > 1 else [])
    write_csv(Path(cfg.out_dir) / f"reuse_n{n}.csv", REUSE_HEADER, rows)
    for k in sorted({r[1] for r in rows}):
        dev = np.mean([r[5] for r in rows if r[1] == k])
        print(f"n={k} (d={k * model.d}): mean |<Z1> learned - exact| = {dev:.4f}")
    return rows


# -- L=3 calibration --------------------------------------------------------


def calibrate_delta(target_h: float, x: float = -0.3, d: int = 5, L: int = 3, bounds=(1e-6, 0.2)) -> tuple[float, float]:
    """``delta`` in ``bounds`` whose ideal ``<H>`` at ``x`` after ``d`` steps is closest to ``target_h``."""

    def h(delta: float) -> float:
        spec = ModelSpec(L, delta)
        return float(original_expectations(spec, d, [x], [named_observable("H", spec)])[0, 0])

    res = minimize_scalar(lambda t: (h(t) - target_h) ** 2, bounds=bounds, method="bounded")
    return float(res.x), h(float(res.x))
