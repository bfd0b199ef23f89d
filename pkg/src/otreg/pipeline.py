"""End-to-end orchestration: train the two blocks, infer, evaluate.

The marginal-estimation and learnable-cost blocks are trained
independently and composed only at inference: marginals (predicted or
known a priori) plus the predicted cost matrix feed the configured
transport solver, and the unit-mass plan is rescaled back to target units.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, asdict, field, replace

import numpy as np

from ._version import __version__
from .costnet import CostNetwork, cost_forward, network_from_dict, network_to_dict
from .exceptions import ConfigError, DegenerateMarginalError, DimensionError
from .lcot import LcotTrainConfig, lcot_train
from .matrices import (
    MarginalPair,
    MatrixSample,
    as_vector,
    marginals_of,
    normalize_marginals,
    vec,
)
from .metrics import MetricSummary, summarize
from .regressors import Regressor, fit_marginal_regressor, regressor_from_dict
from .solvers import (
    FeasibilityReport,
    SolverConfig,
    TransportProblem,
    solve,
    validate_plan,
)

MODEL_FORMAT = "otreg-model"
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class KnownMarginal:
    """A marginal vector known a priori, in raw target units."""

    values: np.ndarray

    def __post_init__(self):
        values = as_vector(self.values, "known marginal")
        object.__setattr__(self, "values", values)
        if np.any(values < 0) or values.sum() <= 0:
            raise ConfigError(
                "known marginals must be non-negative with positive total"
            )


@dataclass
class TrainedModel:
    """Serializable bundle of both trained blocks plus solver settings."""

    me_row: Regressor | KnownMarginal
    me_col: Regressor | KnownMarginal
    cost_net: CostNetwork
    solver: SolverConfig
    mass_fraction: float
    in_shape: tuple[int, int]
    out_shape: tuple[int, int]
    fallback_mass: float
    dataset_fingerprint: str
    package_version: str = __version__
    loss_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass(frozen=True)
class PredictionReport:
    """Per-sample inference provenance and stage timings (milliseconds)."""

    marginal_source: str  # "predicted" | "known" | "mixed" | "fallback" | "oracle"
    feasibility: FeasibilityReport
    me_ms: float
    cost_ms: float
    ot_ms: float
    total_ms: float

    def to_json_dict(self) -> dict:
        data = asdict(self)
        return data


@dataclass(frozen=True)
class EvaluationSummary:
    metrics: MetricSummary
    mean_ms: float
    median_ms: float
    n_fallback: int
    reports: list[PredictionReport]


def dataset_fingerprint(samples: list[MatrixSample]) -> str:
    digest = hashlib.sha256()
    for sample in samples:
        digest.update(np.asarray(sample.input.shape, dtype=np.int64).tobytes())
        digest.update(sample.input.tobytes())
        if sample.target is not None:
            digest.update(sample.target.tobytes())
    return digest.hexdigest()


def _check_shapes(samples: list[MatrixSample]) -> tuple[tuple[int, int], tuple[int, int]]:
    if not samples:
        raise DimensionError("empty dataset")
    if any(s.target is None for s in samples):
        raise DimensionError("training requires targets on every sample")
    in_shape = samples[0].input.shape
    out_shape = samples[0].target.shape
    for sample in samples:
        if sample.input.shape != in_shape or sample.target.shape != out_shape:
            raise DimensionError("all samples in a dataset must share shapes")
    return in_shape, out_shape


def train(
    samples: list[MatrixSample],
    me_config,
    lcot_config: LcotTrainConfig,
    known_row: KnownMarginal | None = None,
    known_col: KnownMarginal | None = None,
    mass_fraction: float = 1.0,
) -> TrainedModel:
    """Train both blocks independently and bundle them.

    Axes with known marginals skip regressor training entirely. The
    learnable-cost block always trains against ground-truth marginals.
    """
    in_shape, out_shape = _check_shapes(samples)
    if known_row is not None and known_row.values.size != out_shape[0]:
        raise DimensionError(
            f"known row marginal has length {known_row.values.size}, "
            f"expected {out_shape[0]}"
        )
    if known_col is not None and known_col.values.size != out_shape[1]:
        raise DimensionError(
            f"known col marginal has length {known_col.values.size}, "
            f"expected {out_shape[1]}"
        )

    # Known axes skip regressor training entirely.
    me_row = known_row or fit_marginal_regressor(samples, me_config, "row")
    me_col = known_col or fit_marginal_regressor(samples, me_config, "col")

    cost_net, trace = lcot_train(samples, lcot_config)
    fallback = float(np.mean([s.target.sum() for s in samples]))
    return TrainedModel(
        me_row=me_row,
        me_col=me_col,
        cost_net=cost_net,
        solver=lcot_config.solver,
        mass_fraction=mass_fraction,
        in_shape=tuple(in_shape),
        out_shape=tuple(out_shape),
        fallback_mass=fallback,
        dataset_fingerprint=dataset_fingerprint(samples),
        loss_trace=trace,
    )


def _model_marginals(model: TrainedModel, input_matrix) -> tuple[MarginalPair, float, str]:
    """Resolve per-sample marginals, falling back to uniform on degeneracy."""
    row_known = isinstance(model.me_row, KnownMarginal)
    col_known = isinstance(model.me_col, KnownMarginal)
    flat = vec(input_matrix)
    try:
        row = (
            model.me_row.values
            if row_known
            else np.maximum(model.me_row.predict(flat), 0.0)
        )
        col = (
            model.me_col.values
            if col_known
            else np.maximum(model.me_col.predict(flat), 0.0)
        )
        raw = MarginalPair(row=row, col=col, mass=0.5 * float(row.sum() + col.sum()))
        normalized, scale = normalize_marginals(raw)
    except DegenerateMarginalError:
        normalized = MarginalPair(
            row=np.full(model.out_shape[0], 1.0 / model.out_shape[0]),
            col=np.full(model.out_shape[1], 1.0 / model.out_shape[1]),
            mass=1.0,
        )
        return normalized, model.fallback_mass, "fallback"
    if row_known and col_known:
        source = "known"
    elif row_known or col_known:
        source = "mixed"
    else:
        source = "predicted"
    return normalized, scale, source


def infer(
    model: TrainedModel,
    input_matrix,
    marginal_override: tuple[MarginalPair, float] | None = None,
) -> tuple[np.ndarray, PredictionReport]:
    """Predict the target matrix for one input.

    ``marginal_override`` supplies oracle (normalized pair, scale)
    marginals, bypassing the marginal-estimation block.
    """
    input_matrix = np.asarray(input_matrix, dtype=np.float64)
    if input_matrix.shape != model.in_shape:
        raise DimensionError(
            f"input shape {input_matrix.shape} != model input shape {model.in_shape}"
        )
    t_start = time.perf_counter()
    if marginal_override is not None:
        marginals, scale, source = *marginal_override, "oracle"
    else:
        marginals, scale, source = _model_marginals(model, input_matrix)
    t_me = time.perf_counter()
    cost = cost_forward(model.cost_net, input_matrix)
    t_cost = time.perf_counter()
    mass_fraction = (
        model.mass_fraction if model.solver.backend in ("epot", "lppot") else 1.0
    )
    problem = TransportProblem(marginals.row, marginals.col, cost, mass_fraction)
    plan = solve(problem, model.solver)
    t_ot = time.perf_counter()
    report = PredictionReport(
        marginal_source=source,
        feasibility=validate_plan(plan, problem),
        me_ms=(t_me - t_start) * 1e3,
        cost_ms=(t_cost - t_me) * 1e3,
        ot_ms=(t_ot - t_cost) * 1e3,
        total_ms=(t_ot - t_start) * 1e3,
    )
    return scale * plan.plan, report


def evaluate(
    model: TrainedModel,
    samples: list[MatrixSample],
    oracle_marginals: bool = False,
    normalize_by_mass: bool = False,
) -> EvaluationSummary:
    """Aggregate rMSE/RSE and inference timings over a dataset.

    With ``oracle_marginals`` the ground-truth marginals of each target are
    fed to the solver instead of the marginal-estimation block. With
    ``normalize_by_mass`` predictions and truths are divided by the true
    target mass before pooling, giving unit-mass metrics.
    """
    if not samples:
        raise DimensionError("empty dataset")
    if any(s.target is None for s in samples):
        raise DimensionError("evaluation requires targets")
    # Warm-up run excluded from timing statistics.
    infer(model, samples[0].input)
    preds, truths, reports = [], [], []
    for sample in samples:
        override = None
        if oracle_marginals:
            override = normalize_marginals(marginals_of(sample.target))
        prediction, report = infer(model, sample.input, marginal_override=override)
        truth = np.asarray(sample.target)
        if normalize_by_mass:
            mass = truth.sum()
            if mass <= 0:
                raise DegenerateMarginalError("cannot normalize a zero-mass target")
            prediction = prediction / mass
            truth = truth / mass
        preds.append(prediction)
        truths.append(truth)
        reports.append(report)
    times = np.array([r.total_ms for r in reports])
    return EvaluationSummary(
        metrics=summarize(preds, truths),
        mean_ms=float(times.mean()),
        median_ms=float(np.median(times)),
        n_fallback=sum(r.marginal_source == "fallback" for r in reports),
        reports=reports,
    )


def mean_target_baseline(train_samples: list[MatrixSample]) -> np.ndarray:
    """Flatten-and-mean baseline: the per-entry mean training target."""
    _check_shapes(train_samples)
    return np.mean([s.target for s in train_samples], axis=0)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _me_to_dict(component: Regressor | KnownMarginal) -> dict:
    if isinstance(component, KnownMarginal):
        return {"kind": "known", "values": component.values.tolist()}
    return component.to_dict()


def _me_from_dict(data: dict) -> Regressor | KnownMarginal:
    if data["kind"] == "known":
        return KnownMarginal(values=np.asarray(data["values"], dtype=np.float64))
    return regressor_from_dict(data)


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "package_version": model.package_version,
        "in_shape": list(model.in_shape),
        "out_shape": list(model.out_shape),
        "solver": asdict(model.solver),
        "mass_fraction": model.mass_fraction,
        "fallback_mass": model.fallback_mass,
        "dataset_fingerprint": model.dataset_fingerprint,
        "me_row": _me_to_dict(model.me_row),
        "me_col": _me_to_dict(model.me_col),
        "cost_net": network_to_dict(model.cost_net),
        "loss_trace": model.loss_trace.tolist(),
    }


def model_from_dict(data: dict) -> TrainedModel:
    if data.get("format") != MODEL_FORMAT:
        raise ConfigError("not a model file (bad format marker)")
    if data.get("format_version") != MODEL_FORMAT_VERSION:
        raise ConfigError(
            f"unsupported model format version {data.get('format_version')!r}"
        )
    return TrainedModel(
        me_row=_me_from_dict(data["me_row"]),
        me_col=_me_from_dict(data["me_col"]),
        cost_net=network_from_dict(data["cost_net"]),
        solver=SolverConfig(**data["solver"]),
        mass_fraction=float(data["mass_fraction"]),
        in_shape=tuple(data["in_shape"]),
        out_shape=tuple(data["out_shape"]),
        fallback_mass=float(data["fallback_mass"]),
        dataset_fingerprint=data["dataset_fingerprint"],
        package_version=data["package_version"],
        loss_trace=np.asarray(data["loss_trace"], dtype=np.float64),
    )


def save_model(model: TrainedModel, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(model_to_dict(model), handle, sort_keys=True, separators=(",", ":"))


def load_model(path) -> TrainedModel:
    with open(path, encoding="utf-8") as handle:
        return model_from_dict(json.load(handle))


def with_backend(
    model: TrainedModel, backend: str, mass_fraction: float | None = None
) -> TrainedModel:
    """Copy of ``model`` wired to a different solver backend at inference."""
    solver = replace(model.solver, backend=backend)
    return replace(
        model,
        solver=solver,
        mass_fraction=model.mass_fraction if mass_fraction is None else mass_fraction,
    )
