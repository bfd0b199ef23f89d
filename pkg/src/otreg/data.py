"""Dataset ingestion, synthetic generation and split management.

The CSV layout is one sample per row: an ``id`` column, then the input
matrix entries ``in_r{i}_c{j}`` and target entries ``out_r{i}_c{j}``, both
in row-major order. The header is mandatory and checked verbatim.

Synthetic datasets are produced by a planted teacher: a random cost
network paired with Dirichlet marginals and a mass scale, so the targets
are exactly reachable by the pipeline.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .costnet import cost_forward, init_cost_network
from .exceptions import ConfigError, DatasetFormatError, NegativeTargetError
from .matrices import NEGATIVE_CLIP_TOL, MatrixSample, mat, vec
from .solvers import SolverConfig, TransportProblem, solve_sinkhorn


@dataclass(frozen=True)
class DatasetSchema:
    """Shapes of the per-sample input and target matrices."""

    in_rows: int
    in_cols: int
    out_rows: int
    out_cols: int

    def __post_init__(self):
        for name in ("in_rows", "in_cols", "out_rows", "out_cols"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")

    def header(self) -> list[str]:
        names = ["id"]
        names += [
            f"in_r{i}_c{j}"
            for i in range(self.in_rows)
            for j in range(self.in_cols)
        ]
        names += [
            f"out_r{i}_c{j}"
            for i in range(self.out_rows)
            for j in range(self.out_cols)
        ]
        return names

    @property
    def n_input(self) -> int:
        return self.in_rows * self.in_cols

    @property
    def n_output(self) -> int:
        return self.out_rows * self.out_cols


def _parse_cell(text: str, row_number: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DatasetFormatError(
            f"row {row_number}, column {column}: cannot parse {text!r} as a number"
        ) from None
    if not math.isfinite(value):
        raise DatasetFormatError(
            f"row {row_number}, column {column}: non-finite value {text!r}"
        )
    return value


def load_csv(path, schema: DatasetSchema) -> list[MatrixSample]:
    """Strict CSV parse against ``schema``; no silent coercion."""
    expected = schema.header()
    samples = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file, header row required") from None
        if header != expected:
            for got, want in zip(header, expected):
                if got != want:
                    raise DatasetFormatError(
                        f"{path}: header mismatch, expected {want!r} got {got!r}"
                    )
            raise DatasetFormatError(
                f"{path}: header has {len(header)} columns, expected {len(expected)}"
            )
        for row_number, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise DatasetFormatError(
                    f"row {row_number}: has {len(row)} cells, expected {len(expected)}"
                )
            values = [
                _parse_cell(cell, row_number, expected[k + 1])
                for k, cell in enumerate(row[1:])
            ]
            flat_in = np.array(values[: schema.n_input])
            flat_out = np.array(values[schema.n_input :])
            low = flat_out.min()
            if low < -NEGATIVE_CLIP_TOL:
                raise NegativeTargetError(
                    f"row {row_number}: negative target entry {low:.3e}"
                )
            flat_out = np.maximum(flat_out, 0.0)
            samples.append(
                MatrixSample(
                    input=mat(flat_in, schema.in_rows, schema.in_cols),
                    target=mat(flat_out, schema.out_rows, schema.out_cols),
                )
            )
    return samples


def load_inputs_csv(path, schema: DatasetSchema) -> list[MatrixSample]:
    """Parse an inputs-only CSV (``id`` plus ``in_*`` columns).

    Files in the full schema (with ``out_*`` columns) are accepted too;
    their targets are kept so predictions can be scored later.
    """
    with open(path, newline="", encoding="utf-8") as handle:
        try:
            header = next(csv.reader(handle))
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file, header row required") from None
    if header == schema.header():
        return load_csv(path, schema)
    expected = schema.header()[: 1 + schema.n_input]
    if header != expected:
        raise DatasetFormatError(
            f"{path}: header matches neither the full schema nor the "
            f"inputs-only layout ({expected[:3]}...)"
        )
    samples = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        next(reader)
        for row_number, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise DatasetFormatError(
                    f"row {row_number}: has {len(row)} cells, expected {len(expected)}"
                )
            values = [
                _parse_cell(cell, row_number, expected[k + 1])
                for k, cell in enumerate(row[1:])
            ]
            samples.append(
                MatrixSample(input=mat(np.array(values), schema.in_rows, schema.in_cols))
            )
    return samples


def save_csv(path, samples: list[MatrixSample], schema: DatasetSchema) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(schema.header())
        for index, sample in enumerate(samples):
            if sample.target is None:
                raise DatasetFormatError("cannot save samples without targets")
            row = [str(index)]
            row += [repr(float(v)) for v in vec(sample.input)]
            row += [repr(float(v)) for v in vec(sample.target)]
            writer.writerow(row)


@dataclass(frozen=True)
class SyntheticSpec:
    """Planted-teacher generator settings.

    Targets are ``mass * plan(teacher marginals, teacher cost)`` plus
    optional Gaussian noise clipped at zero. The drawn marginals (scaled by
    ``1 / mass_range[1]``) are written into the leading input entries so the
    ground truth is reachable by the pipeline: marginal estimation sees a
    noiseless linear map, and the cost network sees everything the teacher
    cost depended on. Inputs too small to hold all marginal entries get a
    truncated embedding.
    """

    in_shape: tuple[int, int] = (3, 4)
    out_shape: tuple[int, int] = (4, 5)
    n_samples: int = 200
    seed: int = 0
    teacher_hidden_dim: int = 10
    teacher_gain: float = 1.0  # 0 gives a uniform-cost teacher
    marginal_alpha: float = 3.0
    mass_range: tuple[float, float] = (5.0, 50.0)
    noise_sigma: float = 0.0
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if not 0 < self.mass_range[0] <= self.mass_range[1]:
            raise ConfigError(f"invalid mass_range {self.mass_range}")
        if min(*self.in_shape, *self.out_shape) < 1:
            raise ConfigError("shapes must be positive")

    def schema(self) -> DatasetSchema:
        return DatasetSchema(
            in_rows=self.in_shape[0],
            in_cols=self.in_shape[1],
            out_rows=self.out_shape[0],
            out_cols=self.out_shape[1],
        )


def _teacher_network(spec: SyntheticSpec, rng: np.random.Generator):
    teacher = init_cost_network(
        spec.in_shape, spec.out_shape, spec.teacher_hidden_dim, rng
    )
    params = {k: spec.teacher_gain * v for k, v in teacher.params().items()}
    return teacher.with_params(params)


def generate_synthetic(spec: SyntheticSpec) -> list[MatrixSample]:
    """Deterministic-under-seed dataset from a planted teacher model."""
    rng = np.random.default_rng(spec.seed)
    teacher = _teacher_network(spec, rng)
    m_out, n_out = spec.out_shape
    n_input = spec.in_shape[0] * spec.in_shape[1]
    samples = []
    for _ in range(spec.n_samples):
        row = rng.dirichlet(np.full(m_out, spec.marginal_alpha))
        col = rng.dirichlet(np.full(n_out, spec.marginal_alpha))
        mass = rng.uniform(*spec.mass_range)
        flat = rng.standard_normal(n_input)
        embedding = mass * np.concatenate([row, col]) / spec.mass_range[1]
        keep = min(n_input, embedding.size)
        flat[:keep] = embedding[:keep]
        input_matrix = mat(flat, *spec.in_shape)
        cost = cost_forward(teacher, input_matrix)
        plan = solve_sinkhorn(TransportProblem(row, col, cost), spec.solver)
        target = mass * plan.plan
        if spec.noise_sigma > 0:
            target = target + spec.noise_sigma * rng.standard_normal(target.shape)
            target = np.maximum(target, 0.0)
        samples.append(MatrixSample(input=input_matrix, target=target))
    return samples


def split(
    samples: list[MatrixSample], ratio: float, seed: int
) -> tuple[list[MatrixSample], list[MatrixSample]]:
    """Deterministic shuffled split into (train, test)."""
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio must be in (0, 1), got {ratio}")
    n = len(samples)
    if n < 2:
        raise ConfigError("need at least 2 samples to split")
    n_train = min(max(int(round(ratio * n)), 1), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    train = [samples[i] for i in order[:n_train]]
    test = [samples[i] for i in order[n_train:]]
    return train, test
