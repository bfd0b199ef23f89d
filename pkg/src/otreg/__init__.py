"""Matrix-valued regression via marginal estimation and learnable-cost OT."""

from ._version import __version__
from .matrices import (
    MarginalPair,
    MatrixSample,
    mat,
    marginals_of,
    normalize_marginals,
    vec,
)
from .solvers import (
    BACKENDS,
    SolverConfig,
    TransportPlan,
    TransportProblem,
    solve,
    solve_lp,
    solve_lp_partial,
    solve_sinkhorn,
    solve_sinkhorn_partial,
    validate_plan,
)
from .costnet import CostNetwork, cost_forward, init_cost_network
from .adam import AdamState, adam_step, init_adam
from .lcot import LcotTrainConfig, lcot_forward, lcot_loss, lcot_train
from .regressors import (
    RandomForestConfig,
    RandomForestRegressor,
    SupportVectorRegressor,
    SvrConfig,
    fit_me,
    me_mse,
    predict_marginals,
)
from .data import DatasetSchema, SyntheticSpec, generate_synthetic, load_csv, save_csv, split
from .metrics import MetricSummary, rmse, rse, summarize
from .pipeline import (
    EvaluationSummary,
    KnownMarginal,
    PredictionReport,
    TrainedModel,
    evaluate,
    infer,
    load_model,
    mean_target_baseline,
    save_model,
    train,
)
from .ablation import AblationReport, AblationRow, run_ablation

__all__ = [
    "__version__",
    "MarginalPair",
    "MatrixSample",
    "mat",
    "marginals_of",
    "normalize_marginals",
    "vec",
    "BACKENDS",
    "SolverConfig",
    "TransportPlan",
    "TransportProblem",
    "solve",
    "solve_lp",
    "solve_lp_partial",
    "solve_sinkhorn",
    "solve_sinkhorn_partial",
    "validate_plan",
    "CostNetwork",
    "cost_forward",
    "init_cost_network",
    "AdamState",
    "adam_step",
    "init_adam",
    "LcotTrainConfig",
    "lcot_forward",
    "lcot_loss",
    "lcot_train",
    "RandomForestConfig",
    "RandomForestRegressor",
    "SupportVectorRegressor",
    "SvrConfig",
    "fit_me",
    "me_mse",
    "predict_marginals",
    "DatasetSchema",
    "SyntheticSpec",
    "generate_synthetic",
    "load_csv",
    "save_csv",
    "split",
    "MetricSummary",
    "rmse",
    "rse",
    "summarize",
    "EvaluationSummary",
    "KnownMarginal",
    "PredictionReport",
    "TrainedModel",
    "evaluate",
    "infer",
    "load_model",
    "mean_target_baseline",
    "save_model",
    "train",
    "AblationReport",
    "AblationRow",
    "run_ablation",
]
