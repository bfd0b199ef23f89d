"""Command-line entry point: generate/train/infer/eval/ablate workflows.

One JSON config document describes a run; command-line flags override
individual values. Logs go to stderr, data to stdout or files, so
commands compose in shell pipelines. Exit codes: 0 success, 1
configuration or validation failure, 2 runtime or numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from ._version import __version__
from .ablation import format_csv, format_table, run_ablation
from .data import (
    DatasetSchema,
    SyntheticSpec,
    generate_synthetic,
    load_csv,
    load_inputs_csv,
    save_csv,
    split,
)
from .exceptions import (
    ConfigError,
    DatasetFormatError,
    DimensionError,
    NegativeTargetError,
    OtregError,
)
from .lcot import LcotTrainConfig
from .matrices import marginals_of, vec
from .metrics import RSE_DEFINITION
from .pipeline import (
    KnownMarginal,
    evaluate,
    infer,
    load_model,
    save_model,
    train,
)
from .regressors import RandomForestConfig, SvrConfig, me_mse
from .solvers import BACKENDS, SolverConfig

log = logging.getLogger("otreg")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

DEFAULT_CONFIG = {
    "shapes": {"in": [3, 4], "out": [4, 5]},
    "data": {},
    "me": {"backend": "rf"},
    "lcot": {
        "hidden_dim": 10,
        "epochs": 200,
        "lr": 1e-2,
        "K": None,
        "batch_size": None,
        "seed": 0,
    },
    "solver": {
        "backend": "eot",
        "epsilon": 0.5,
        "gamma": 5e-5,
        "max_iterations": 1000,
        "mass_fraction": 1.0,
    },
    "split": {"ratio": 0.8, "seed": 0},
    "eval": {"subset": "test", "oracle_marginals": False, "normalized": False},
    "ablation": {"mass_fraction": 0.9},
}


class _Parser(argparse.ArgumentParser):
    """argparse with config-error exit code 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _load_config(args) -> dict:
    config = DEFAULT_CONFIG
    if args.config:
        with open(args.config, encoding="utf-8") as handle:
            try:
                user = json.load(handle)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{args.config}: not valid JSON ({exc})") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{args.config}: top level must be an object")
        config = _merge(config, user)
    # Flag overrides.
    solver = config["solver"]
    for flag, key in (
        ("solver", "backend"),
        ("epsilon", "epsilon"),
        ("tol", "gamma"),
        ("max_iter", "max_iterations"),
        ("mass_fraction", "mass_fraction"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            solver[key] = value
    if getattr(args, "seed", None) is not None:
        config["lcot"]["seed"] = args.seed
        config["split"]["seed"] = args.seed
        config.setdefault("data", {}).setdefault("synthetic", {})["seed"] = args.seed
        if "seed" in config["me"] or config["me"].get("backend") in ("rf", "random_forest"):
            config["me"]["seed"] = args.seed
    return config


def _schema(config: dict) -> DatasetSchema:
    shapes = config["shapes"]
    try:
        in_shape, out_shape = shapes["in"], shapes["out"]
    except (KeyError, TypeError):
        raise ConfigError("config.shapes must carry 'in' and 'out' [rows, cols]") from None
    return DatasetSchema(
        in_rows=int(in_shape[0]),
        in_cols=int(in_shape[1]),
        out_rows=int(out_shape[0]),
        out_cols=int(out_shape[1]),
    )


def _solver_config(config: dict) -> tuple[SolverConfig, float]:
    section = config["solver"]
    known = {"backend", "epsilon", "gamma", "max_iterations", "mass_fraction"}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown solver config keys: {sorted(unknown)}")
    solver = SolverConfig(
        epsilon=float(section["epsilon"]),
        tolerance=float(section["gamma"]),
        max_iterations=int(section["max_iterations"]),
        backend=str(section["backend"]),
    )
    mass_fraction = float(section["mass_fraction"])
    if not 0.0 < mass_fraction <= 1.0:
        raise ConfigError(f"mass_fraction must be in (0, 1], got {mass_fraction}")
    return solver, mass_fraction


def _me_config(config: dict):
    section = dict(config["me"])
    backend = section.pop("backend", "rf")
    if backend in ("rf", "random_forest"):
        return RandomForestConfig(**section)
    if backend in ("svm", "svr"):
        return SvrConfig(**section)
    raise ConfigError(f"unknown me backend {backend!r}; expected 'rf' or 'svm'")


def _lcot_config(config: dict, solver: SolverConfig) -> LcotTrainConfig:
    section = config["lcot"]
    known = {"hidden_dim", "epochs", "lr", "K", "batch_size", "seed"}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown lcot config keys: {sorted(unknown)}")
    return LcotTrainConfig(
        solver=solver,
        epochs=int(section["epochs"]),
        batch_size=None if section["batch_size"] is None else int(section["batch_size"]),
        seed=int(section["seed"]),
        hidden_dim=int(section["hidden_dim"]),
        learning_rate=float(section["lr"]),
        unroll_iterations=None if section["K"] is None else int(section["K"]),
    )


def _synthetic_spec(config: dict, schema: DatasetSchema) -> SyntheticSpec:
    section = dict(config["data"].get("synthetic", {}))
    solver, _ = _solver_config(config)
    spec = SyntheticSpec(
        in_shape=(schema.in_rows, schema.in_cols),
        out_shape=(schema.out_rows, schema.out_cols),
        n_samples=int(section.get("n_samples", 200)),
        seed=int(section.get("seed", 0)),
        teacher_hidden_dim=int(section.get("teacher_hidden_dim", 10)),
        teacher_gain=float(section.get("teacher_gain", 1.0)),
        marginal_alpha=float(section.get("marginal_alpha", 3.0)),
        mass_range=tuple(section.get("mass_range", (5.0, 50.0))),
        noise_sigma=float(section.get("noise_sigma", 0.0)),
        solver=solver,
    )
    return spec


def _load_dataset(config: dict, schema: DatasetSchema):
    data = config.get("data", {})
    if data.get("csv"):
        return load_csv(data["csv"], schema)
    if "synthetic" in data:
        return generate_synthetic(_synthetic_spec(config, schema))
    raise ConfigError("config.data needs either a 'csv' path or a 'synthetic' section")


def _load_known_marginal(path) -> KnownMarginal:
    values = np.loadtxt(path, delimiter=",", ndmin=1).ravel()
    return KnownMarginal(values=values)


def _subset(samples, config: dict, subset: str):
    if subset == "all":
        return samples
    section = config["split"]
    train_part, test_part = split(
        samples, float(section["ratio"]), int(section["seed"])
    )
    return train_part if subset == "train" else test_part


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_gen_synth(args) -> int:
    config = _load_config(args)
    schema = _schema(config)
    spec = _synthetic_spec(config, schema)
    if not args.out:
        raise ConfigError("gen-synth requires --out")
    samples = generate_synthetic(spec)
    save_csv(args.out, samples, schema)
    masses = [s.target.sum() for s in samples]
    log.info(
        "wrote %d samples (%dx%d -> %dx%d) to %s; target mass in [%.3f, %.3f]",
        len(samples),
        schema.in_rows,
        schema.in_cols,
        schema.out_rows,
        schema.out_cols,
        args.out,
        min(masses),
        max(masses),
    )
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_config(args)
    schema = _schema(config)
    solver, mass_fraction = _solver_config(config)
    me_config = _me_config(config)
    lcot_config = _lcot_config(config, solver)
    known_row = _load_known_marginal(args.known_row_marginals) if args.known_row_marginals else None
    known_col = _load_known_marginal(args.known_col_marginals) if args.known_col_marginals else None
    if not args.out:
        raise ConfigError("train requires --out for the model file")

    samples = _load_dataset(config, schema)
    train_part = _subset(samples, config, "train")
    log.info("training on %d samples", len(train_part))
    model = train(
        train_part,
        me_config,
        lcot_config,
        known_row=known_row,
        known_col=known_col,
        mass_fraction=mass_fraction,
    )
    save_model(model, args.out)

    for axis, component in (("row", model.me_row), ("col", model.me_col)):
        if isinstance(component, KnownMarginal):
            log.info("me %s: known marginals (no regressor trained)", axis)
            continue
        truths = [getattr(marginals_of(s.target), axis) for s in train_part]
        preds = [component.predict(vec(s.input)) for s in train_part]
        mse = float(np.mean([me_mse(p, t) for p, t in zip(preds, truths)]))
        log.info("me %s: training MSE %.6g", axis, mse)
    tail = ", ".join(f"{v:.4g}" for v in model.loss_trace[-5:])
    log.info("lcot loss trace tail: [%s]", tail)
    log.info("model written to %s", args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _load_config(args)
    schema = _schema(config)
    model = load_model(args.model)
    samples = _load_dataset(config, schema)
    section = config["eval"]
    subset = args.subset or section["subset"]
    oracle = args.oracle_marginals or bool(section["oracle_marginals"])
    normalized = args.normalized or bool(section["normalized"])
    part = _subset(samples, config, subset)
    summary = evaluate(
        model, part, oracle_marginals=oracle, normalize_by_mass=normalized
    )
    lines = [
        "rmse,rse,median_infer_ms,mean_infer_ms,n_samples,n_fallback",
        f"{summary.metrics.rmse!r},{summary.metrics.rse!r},"
        f"{summary.median_ms!r},{summary.mean_ms!r},"
        f"{summary.metrics.n_samples},{summary.n_fallback}",
    ]
    payload = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(payload)
    else:
        sys.stdout.write(payload)
    if args.per_sample:
        with open(args.per_sample, "w", encoding="utf-8") as handle:
            for index, report in enumerate(summary.reports):
                record = {"sample": index, "rmse": float(summary.metrics.per_sample_rmse[index])}
                record.update(report.to_json_dict())
                handle.write(json.dumps(record, sort_keys=True) + "\n")
    log.info(
        "eval subset=%s oracle=%s normalized=%s: rmse=%.6g rse=%.6g over %d samples",
        subset,
        oracle,
        normalized,
        summary.metrics.rmse,
        summary.metrics.rse,
        summary.metrics.n_samples,
    )
    log.info("%s", RSE_DEFINITION)
    return EXIT_OK


def cmd_infer(args) -> int:
    config = _load_config(args)
    schema = _schema(config)
    model = load_model(args.model)
    if (schema.in_rows, schema.in_cols) != model.in_shape:
        raise DimensionError(
            f"config input shape {(schema.in_rows, schema.in_cols)} != "
            f"model input shape {model.in_shape}"
        )
    samples = load_inputs_csv(args.input, schema)
    if not args.out:
        raise ConfigError("infer requires --out for the predictions file")
    header = ["id"] + [
        f"out_r{i}_c{j}"
        for i in range(model.out_shape[0])
        for j in range(model.out_shape[1])
    ]
    reports = []
    with open(args.out, "w", encoding="utf-8") as handle:
        handle.write(",".join(header) + "\n")
        for index, sample in enumerate(samples):
            prediction, report = infer(model, sample.input)
            reports.append(report)
            cells = [str(index)] + [repr(float(v)) for v in prediction.ravel()]
            handle.write(",".join(cells) + "\n")
    if args.report_out:
        with open(args.report_out, "w", encoding="utf-8") as handle:
            for index, report in enumerate(reports):
                record = {"sample": index}
                record.update(report.to_json_dict())
                handle.write(json.dumps(record, sort_keys=True) + "\n")
    log.info("wrote %d predictions to %s", len(samples), args.out)
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = _load_config(args)
    schema = _schema(config)
    solver, _ = _solver_config(config)
    me_config = _me_config(config)
    lcot_config = _lcot_config(config, solver)
    mass_fraction = float(config["ablation"]["mass_fraction"])
    samples = _load_dataset(config, schema)
    train_part = _subset(samples, config, "train")
    test_part = _subset(samples, config, "test")
    report = run_ablation(
        train_part, test_part, me_config, lcot_config, mass_fraction=mass_fraction
    )
    sys.stdout.write(format_table(report))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(format_csv(report))
        log.info("ablation CSV written to %s", args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="override all seeds in the config")
    parser.add_argument("--solver", choices=BACKENDS, help="OT backend")
    parser.add_argument("--epsilon", type=float, help="entropic regularization")
    parser.add_argument("--tol", type=float, help="Sinkhorn stopping tolerance")
    parser.add_argument("--max-iter", dest="max_iter", type=int, help="Sinkhorn iteration cap")
    parser.add_argument(
        "--mass-fraction", dest="mass_fraction", type=float, help="partial-OT mass"
    )
    parser.add_argument("--out", help="output path")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="otreg", description=__doc__)
    parser.add_argument("--version", action="version", version=f"otreg {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-synth", help="generate a synthetic dataset CSV")
    _add_common(gen)
    gen.set_defaults(func=cmd_gen_synth)

    tr = commands.add_parser("train", help="train a model and write the model file")
    _add_common(tr)
    tr.add_argument("--known-row-marginals", help="CSV of fixed row marginals")
    tr.add_argument("--known-col-marginals", help="CSV of fixed column marginals")
    tr.set_defaults(func=cmd_train)

    ev = commands.add_parser("eval", help="evaluate a model on a dataset")
    _add_common(ev)
    ev.add_argument("--model", required=True, help="model file from 'train'")
    ev.add_argument("--subset", choices=("train", "test", "all"))
    ev.add_argument("--oracle-marginals", action="store_true")
    ev.add_argument("--normalized", action="store_true", help="unit-mass metrics")
    ev.add_argument("--per-sample", help="write per-sample reports as JSON lines")
    ev.set_defaults(func=cmd_eval)

    inf = commands.add_parser("infer", help="predict target matrices for inputs")
    _add_common(inf)
    inf.add_argument("--model", required=True)
    inf.add_argument("--input", required=True, help="CSV with id and in_* columns")
    inf.add_argument("--report-out", help="write per-sample reports as JSON lines")
    inf.set_defaults(func=cmd_infer)

    ab = commands.add_parser("ablate-ot", help="compare the four OT backends")
    _add_common(ab)
    ab.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s"
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetFormatError, DimensionError, NegativeTargetError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except OtregError as exc:
        log.error("%s", exc)
        return EXIT_RUNTIME
    except FileNotFoundError as exc:
        log.error("file not found: %s", exc.filename)
        return EXIT_CONFIG
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
