"""``spinqcl`` command line.

Exit codes: 0 on success, 2 for configuration or input errors, 3 when a
numerical validation fails.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

from . import bench
from .model import UnsupportedChargeError
from .optimize import OptimizerError
from .qcl import ModelFileError, load_model
from .quantum import ValidationError

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _noise_list(text: str) -> list[str]:
    return list(bench.CHANNELS) if text == "all" else [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file with ExperimentConfig keys")
    common.add_argument("--seed", type=int)
    common.add_argument("--noise", type=_noise_list, help="channel name, comma list or 'all'")
    common.add_argument("--p", type=float, help="noise probability (default per channel)")
    common.add_argument("--shots", type=int, help="0 for exact expectations")
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--accounting", choices=("template", "paper-tally"))
    common.add_argument("--L", type=int)
    common.add_argument("--delta", type=float)
    common.add_argument("--d", type=_int_list, help="evolution steps, comma separated")
    common.add_argument("--D", type=_int_list, help="ansatz layers, comma separated")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="spinqcl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="write training datasets")
    p = sub.add_parser("train", parents=[common], help="train learned circuits")
    p.add_argument("--dataset", help="dataset CSV (generated from the config if omitted)")
    p = sub.add_parser("sweep-D", parents=[common], help="train several depths and keep the best")
    p.add_argument("--dataset")
    p = sub.add_parser("benchmark", parents=[common], help="ideal/noisy comparison of original and learned")
    p.add_argument("--model", nargs="+", required=True)
    sub.add_parser("gatecount", parents=[common], help="gate tallies and break-even depth")
    p = sub.add_parser("reuse", parents=[common], help="apply a learned circuit n times")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, help="repetitions (config key 'repetitions')")
    return parser


def resolve_config(args) -> bench.ExperimentConfig:
    cfg = bench.load_config(args.config) if args.config else bench.ExperimentConfig()
    overrides = {
        key: getattr(args, key)
        for key in ("seed", "noise", "p", "shots", "out_dir", "accounting", "L", "delta", "d", "D")
    }
    return bench.config_from_mapping(overrides, cfg)


def run(args) -> list:
    cfg = resolve_config(args)
    started = time.time()
    cmd = args.command
    if cmd == "gen-data":
        outputs = [bench.dataset_path(cfg, d) for d in bench.cmd_gen_data(cfg)]
    elif cmd == "train":
        outputs = [path for path, _ in bench.cmd_train(cfg, args.dataset)]
    elif cmd == "sweep-D":
        bench.cmd_sweep_depth(cfg, args.dataset)
        outputs = [f"{cfg.out_dir}/sweep_D.csv"]
    elif cmd == "benchmark":
        bench.cmd_benchmark(cfg, [load_model(path) for path in args.model])
        outputs = [f"{cfg.out_dir}/benchmark.csv"]
    elif cmd == "gatecount":
        bench.cmd_gatecount(cfg)
        outputs = [f"{cfg.out_dir}/gatecount.csv"]
    elif cmd == "reuse":
        n = cfg.repetitions if args.n is None else args.n
        if n < 1:
            raise bench.ConfigError("--n must be >= 1")
        bench.cmd_reuse(cfg, load_model(args.model), n)
        outputs = [f"{cfg.out_dir}/reuse_n{n}.csv"]
    else:  # pragma: no cover - argparse rejects unknown commands
        raise bench.ConfigError(f"unknown command {cmd}")
    bench.write_manifest(cfg, cmd, outputs, started)
    return outputs


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s"
    )
    try:
        run(args)
    except (ValidationError, OptimizerError, FloatingPointError) as exc:
        print(f"numerical validation failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (bench.ConfigError, ModelFileError, UnsupportedChargeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
