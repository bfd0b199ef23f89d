"""Learnable-cost OT block: cost network + unrolled Sinkhorn + Adam.

Training backpropagates the Frobenius reconstruction loss through a fixed
number of unrolled log-domain Sinkhorn iterations into the cost network.
Marginals enter the solver as constants; gradients flow through the plan
only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adam import init_adam, adam_step
from .costnet import (
    CostNetwork,
    cost_backward_batch,
    cost_forward,
    cost_forward_batch,
    init_cost_network,
)
from .exceptions import DimensionError, TrainingDivergedError
from .matrices import MarginalPair, MatrixSample, marginals_of, normalize_marginals, vec
from .solvers import SolverConfig, TransportPlan
from .unroll import SinkhornTape, sinkhorn_unrolled, sinkhorn_unrolled_backward

# Iterations actually unrolled for backprop are capped: deep unrolling
# buys little accuracy at the default epsilon and costs memory and time.
UNROLL_CAP = 100


@dataclass(frozen=True)
class LcotTrainConfig:
    """Training knobs for the learnable-cost block."""

    solver: SolverConfig = field(default_factory=SolverConfig)
    epochs: int = 200
    batch_size: int | None = None  # None: full batch
    seed: int = 0
    hidden_dim: int = 10
    learning_rate: float = 1e-2
    unroll_iterations: int | None = None  # None: min(solver.max_iterations, cap)

    @property
    def effective_unroll(self) -> int:
        if self.unroll_iterations is not None:
            return self.unroll_iterations
        return min(self.solver.max_iterations, UNROLL_CAP)


def lcot_loss(plan, target, scale: float) -> float:
    """Frobenius norm of (scale * plan - target)."""
    plan_arr = plan.plan if isinstance(plan, TransportPlan) else np.asarray(plan)
    target = np.asarray(target, dtype=np.float64)
    if plan_arr.shape != target.shape:
        raise DimensionError(
            f"plan shape {plan_arr.shape} != target shape {target.shape}"
        )
    return float(np.linalg.norm(scale * plan_arr - target))


def lcot_forward(
    net: CostNetwork,
    matrix,
    marginals: MarginalPair,
    config: LcotTrainConfig,
) -> tuple[TransportPlan, SinkhornTape]:
    """Cost prediction followed by K unrolled Sinkhorn iterations.

    ``marginals`` must be normalized (unit mass). The returned tape holds
    every intermediate needed for reverse-mode differentiation and can
    replay the forward pass bit-exactly.
    """
    cost = cost_forward(net, matrix)
    plan, tape = sinkhorn_unrolled(
        cost,
        marginals.row,
        marginals.col,
        config.solver.epsilon,
        config.effective_unroll,
    )
    row_violation = np.abs(plan.sum(axis=1) - marginals.row).sum()
    col_violation = np.abs(plan.sum(axis=0) - marginals.col).sum()
    result = TransportPlan(
        plan=plan,
        objective=float(np.sum(plan * cost)),
        iterations_used=config.effective_unroll,
        converged=bool(
            max(row_violation, col_violation) <= config.solver.tolerance
        ),
    )
    return result, tape


def _prepare_training_arrays(samples: list[MatrixSample]):
    inputs = np.stack([vec(s.input) for s in samples])
    targets = np.stack([s.target for s in samples])
    rows, cols, scales = [], [], []
    for sample in samples:
        normalized, scale = normalize_marginals(marginals_of(sample.target))
        rows.append(normalized.row)
        cols.append(normalized.col)
        scales.append(scale)
    return inputs, targets, np.stack(rows), np.stack(cols), np.asarray(scales)


def _batch_loss_and_grad(net, inputs, targets, rows, cols, scales, config):
    """Mean per-sample Frobenius loss and its parameter gradients."""
    cost, cache = cost_forward_batch(net, inputs)
    plans, tape = sinkhorn_unrolled(
        cost, rows, cols, config.solver.epsilon, config.effective_unroll
    )
    residual = scales[:, None, None] * plans - targets
    norms = np.sqrt((residual**2).sum(axis=(1, 2)))
    loss = float(norms.mean())
    # d||r||_F / d plan = scale * r / ||r||_F; zero residual has zero grad.
    safe = np.where(norms > 1e-300, norms, 1.0)
    grad_plan = (
        scales[:, None, None] * residual / safe[:, None, None] / len(norms)
    )
    grad_plan[norms <= 1e-300] = 0.0
    grad_cost = sinkhorn_unrolled_backward(tape, grad_plan)
    grads = cost_backward_batch(net, cache, grad_cost)
    return loss, grads


def lcot_dataset_loss(
    samples: list[MatrixSample], net: CostNetwork, config: LcotTrainConfig
) -> float:
    """Mean per-sample reconstruction loss of ``net`` over ``samples``."""
    inputs, targets, rows, cols, scales = _prepare_training_arrays(samples)
    cost, _ = cost_forward_batch(net, inputs)
    plans, _ = sinkhorn_unrolled(
        cost, rows, cols, config.solver.epsilon, config.effective_unroll
    )
    residual = scales[:, None, None] * plans - targets
    return float(np.sqrt((residual**2).sum(axis=(1, 2))).mean())


def lcot_train(
    samples: list[MatrixSample],
    config: LcotTrainConfig,
    initial_network: CostNetwork | None = None,
) -> tuple[CostNetwork, np.ndarray]:
    """Train the cost network on ground-truth marginals.

    Returns the final network and the per-epoch training-loss trace.

    Raises
    ------
    TrainingDivergedError
        If the loss becomes non-finite (epsilon too small for the cost
        scale, or learning rate too high).
    """
    if not samples:
        raise DimensionError("cannot train on an empty dataset")
    if any(s.target is None for s in samples):
        raise DimensionError("all training samples need targets")
    in_shape = samples[0].input.shape
    out_shape = samples[0].target.shape
    for sample in samples:
        if sample.input.shape != in_shape or sample.target.shape != out_shape:
            raise DimensionError("all samples in a dataset must share shapes")

    rng = np.random.default_rng(config.seed)
    net = initial_network
    if net is None:
        net = init_cost_network(in_shape, out_shape, config.hidden_dim, rng)

    inputs, targets, rows, cols, scales = _prepare_training_arrays(samples)
    n = len(samples)
    batch_size = config.batch_size or n
    adam = init_adam(net.params(), config.learning_rate)
    trace = []
    for _ in range(config.epochs):
        order = rng.permutation(n) if batch_size < n else np.arange(n)
        epoch_losses = []
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            loss, grads = _batch_loss_and_grad(
                net, inputs[idx], targets[idx], rows[idx], cols[idx], scales[idx], config
            )
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite training loss at epoch {len(trace)}; "
                    "try a larger epsilon or a smaller learning rate"
                )
            params = adam_step(adam, net.params(), grads)
            net = net.with_params(params)
            epoch_losses.append(loss)
        trace.append(float(np.mean(epoch_losses)))
    return net, np.asarray(trace)
