"""Unrolled log-domain Sinkhorn with hand-written reverse-mode gradients.

The forward pass runs a fixed number of scaling iterations on a batch of
problems and records every potential on a tape; the backward pass walks
the tape in reverse and accumulates the exact gradient of the plan with
respect to the cost matrices. Marginals are treated as constants: no
gradient flows into them.

Shapes: costs are (B, n1, n2); row/col marginals (B, n1) and (B, n2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp


@dataclass
class SinkhornTape:
    """Every intermediate needed to replay or differentiate the forward pass."""

    shifted_cost: np.ndarray  # (B, n1, n2), after the per-problem min shift
    log_row: np.ndarray  # (B, n1)
    log_col: np.ndarray  # (B, n2)
    epsilon: float
    n_iterations: int
    f_hist: np.ndarray  # (B, K, n1), row potentials after each iteration
    g_hist: np.ndarray  # (B, K+1, n2), col potentials; index 0 is the zero init
    plan: np.ndarray  # (B, n1, n2)

    def replay(self) -> np.ndarray:
        """Recompute the forward pass from the recorded inputs."""
        plan, _ = _forward_core(
            self.shifted_cost, self.log_row, self.log_col, self.epsilon, self.n_iterations
        )
        return plan


def _forward_core(shifted, log_row, log_col, epsilon, n_iterations):
    batch, n1, n2 = shifted.shape
    f_hist = np.empty((batch, n_iterations, n1))
    g_hist = np.empty((batch, n_iterations + 1, n2))
    g = np.zeros((batch, n2))
    g_hist[:, 0] = g
    f = np.zeros((batch, n1))
    with np.errstate(invalid="ignore"):
        for k in range(n_iterations):
            f = epsilon * (
                log_row - logsumexp((g[:, None, :] - shifted) / epsilon, axis=2)
            )
            g = epsilon * (
                log_col - logsumexp((f[:, :, None] - shifted) / epsilon, axis=1)
            )
            f_hist[:, k] = f
            g_hist[:, k + 1] = g
        plan = np.exp((f[:, :, None] + g[:, None, :] - shifted) / epsilon)
    return plan, (f_hist, g_hist)


def sinkhorn_unrolled(
    cost: np.ndarray,
    row_marginal: np.ndarray,
    col_marginal: np.ndarray,
    epsilon: float,
    n_iterations: int,
) -> tuple[np.ndarray, SinkhornTape]:
    """Run K Sinkhorn iterations and return (plans, tape).

    The cost is shifted by its per-problem minimum before exponentiation.
    The shift is treated as a constant in the backward pass, which is exact
    because the plan is invariant to constant cost shifts at every finite
    iteration count.
    """
    cost = np.asarray(cost, dtype=np.float64)
    squeeze = cost.ndim == 2
    if squeeze:
        cost = cost[None]
        row_marginal = np.asarray(row_marginal)[None]
        col_marginal = np.asarray(col_marginal)[None]
    with np.errstate(divide="ignore"):
        log_row = np.log(np.asarray(row_marginal, dtype=np.float64))
        log_col = np.log(np.asarray(col_marginal, dtype=np.float64))
    shifted = cost - cost.min(axis=(1, 2), keepdims=True)
    plan, (f_hist, g_hist) = _forward_core(shifted, log_row, log_col, epsilon, n_iterations)
    tape = SinkhornTape(
        shifted_cost=shifted,
        log_row=log_row,
        log_col=log_col,
        epsilon=epsilon,
        n_iterations=n_iterations,
        f_hist=f_hist,
        g_hist=g_hist,
        plan=plan,
    )
    if squeeze:
        return plan[0], tape
    return plan, tape


def _softmax_rows(f, g, shifted, log_row, epsilon):
    """Row-update weights: softmax over columns of (g - C)/eps, per row.

    Equals exp((f_i + g_j - C_ij)/eps - log a_i); rows with zero marginal
    get zero weight (their potential is a constant -inf).
    """
    with np.errstate(invalid="ignore"):
        w = np.exp((f[:, :, None] + g[:, None, :] - shifted) / epsilon - log_row[:, :, None])
    return np.where(np.isfinite(log_row[:, :, None]), np.nan_to_num(w), 0.0)


def _softmax_cols(f, g, shifted, log_col, epsilon):
    """Column-update weights: softmax over rows of (f - C)/eps, per column."""
    with np.errstate(invalid="ignore"):
        w = np.exp((f[:, :, None] + g[:, None, :] - shifted) / epsilon - log_col[:, None, :])
    return np.where(np.isfinite(log_col[:, None, :]), np.nan_to_num(w), 0.0)


def sinkhorn_unrolled_backward(tape: SinkhornTape, grad_plan: np.ndarray) -> np.ndarray:
    """Gradient of sum(grad_plan * plan) with respect to the cost matrices."""
    grad_plan = np.asarray(grad_plan, dtype=np.float64)
    squeeze = grad_plan.ndim == 2
    if squeeze:
        grad_plan = grad_plan[None]
    eps = tape.epsilon
    shifted = tape.shifted_cost
    scaled = grad_plan * tape.plan / eps
    grad_cost = -scaled
    gf = scaled.sum(axis=2)
    gg = scaled.sum(axis=1)
    for k in range(tape.n_iterations - 1, -1, -1):
        f_k = tape.f_hist[:, k]
        col_w = _softmax_cols(f_k, tape.g_hist[:, k + 1], shifted, tape.log_col, eps)
        grad_cost += col_w * gg[:, None, :]
        gf = gf - np.einsum("bij,bj->bi", col_w, gg)
        row_w = _softmax_rows(f_k, tape.g_hist[:, k], shifted, tape.log_row, eps)
        grad_cost += row_w * gf[:, :, None]
        gg = -np.einsum("bij,bi->bj", row_w, gf)
        gf = np.zeros_like(gf)
    if squeeze:
        return grad_cost[0]
    return grad_cost
