"""Optimal transport solver suite: entropic and LP, full and partial mass.

Four backends sit behind one interface:

- ``eot``   entropic OT via log-domain Sinkhorn iterations
- ``epot``  entropic partial OT via a dummy-node extension of ``eot``
- ``lpot``  exact OT solved as a linear program
- ``lppot`` exact partial OT via the dummy-node extension of ``lpot``

Problems are stated on probability marginals (each summing to one); partial
variants transport only ``mass_fraction`` of the unit mass, with marginal
constraints relaxed to inequalities.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.special import logsumexp

from .exceptions import ConfigError, FeasibilityError
from .matrices import as_matrix, as_vector

BACKENDS = ("eot", "epot", "lpot", "lppot")

# Marginal sums must match this closely for a balanced problem to be feasible.
MARGINAL_SUM_TOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    """Entropic-solver knobs; LP backends only read ``backend``.

    ``tolerance`` is the L1 marginal-violation threshold that stops the
    Sinkhorn loop.
    """

    epsilon: float = 0.5
    tolerance: float = 5e-5
    max_iterations: int = 1000
    backend: str = "eot"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.tolerance <= 0:
            raise ConfigError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ConfigError(
                f"max_iterations must be >= 1, got {self.max_iterations}"
            )
        if self.backend not in BACKENDS:
            raise ConfigError(
                f"unknown backend {self.backend!r}; expected one of {BACKENDS}"
            )


@dataclass(frozen=True)
class TransportProblem:
    """Marginals, cost matrix and transported mass fraction.

    ``row_marginal`` and ``col_marginal`` are probability vectors; ``cost``
    has non-negative entries and shape (len(row), len(col));
    ``mass_fraction`` is 1 for full transport, in (0, 1] for partial.
    """

    row_marginal: np.ndarray
    col_marginal: np.ndarray
    cost: np.ndarray
    mass_fraction: float = 1.0

    def __post_init__(self):
        row = as_vector(self.row_marginal, "row marginal")
        col = as_vector(self.col_marginal, "col marginal")
        cost = as_matrix(self.cost, "cost")
        object.__setattr__(self, "row_marginal", row)
        object.__setattr__(self, "col_marginal", col)
        object.__setattr__(self, "cost", cost)
        if np.any(row < 0) or np.any(col < 0):
            raise ConfigError("marginals must be non-negative")
        if abs(row.sum() - 1.0) > MARGINAL_SUM_TOL:
            raise ConfigError(f"row marginal sums to {row.sum()!r}, expected 1")
        if abs(col.sum() - 1.0) > MARGINAL_SUM_TOL:
            raise ConfigError(f"col marginal sums to {col.sum()!r}, expected 1")
        if cost.shape != (row.size, col.size):
            raise ConfigError(
                f"cost shape {cost.shape} does not match marginals "
                f"({row.size}, {col.size})"
            )
        if np.any(cost < 0):
            raise ConfigError("cost entries must be non-negative")
        if not 0.0 < self.mass_fraction <= 1.0:
            raise ConfigError(
                f"mass_fraction must be in (0, 1], got {self.mass_fraction}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.cost.shape


@dataclass(frozen=True)
class TransportPlan:
    """A transport plan with its cost objective and solver diagnostics."""

    plan: np.ndarray
    objective: float
    iterations_used: int
    converged: bool

    def __post_init__(self):
        object.__setattr__(self, "plan", as_matrix(self.plan, "plan"))


@dataclass(frozen=True)
class FeasibilityReport:
    """Constraint violations of a plan against its problem.

    For full transport the row/col violations are L1 distances to the
    marginals; for partial transport they are the L1 totals of the
    inequality excesses, with ``mass_error`` measured against the
    transported fraction ``s``.
    """

    partial: bool
    row_violation: float
    col_violation: float
    row_excess_max: float
    col_excess_max: float
    mass: float
    mass_error: float
    min_entry: float
    negative_entries: int

    def max_violation(self) -> float:
        return max(self.row_violation, self.col_violation, self.mass_error)


def _log_weights(values: np.ndarray) -> np.ndarray:
    """log of a non-negative vector with zeros mapped to -inf, warning-free."""
    with np.errstate(divide="ignore"):
        return np.log(values)


def _log_sinkhorn(
    row: np.ndarray,
    col: np.ndarray,
    cost: np.ndarray,
    epsilon: float,
    tolerance: float,
    max_iterations: int,
) -> tuple[np.ndarray, int, bool]:
    """Log-domain Sinkhorn scaling on a balanced problem.

    Returns the plan together with the iteration count and a convergence
    flag. Zero marginal entries force the corresponding plan row/column to
    zero via -inf potentials.
    """
    log_row = _log_weights(row)
    log_col = _log_weights(col)
    # The plan is invariant to a constant cost shift, so shift to zero
    # minimum; exp arguments stay moderate even for epsilon << max(cost).
    shifted = cost - cost.min()
    g = np.zeros(col.size)
    plan = np.zeros_like(shifted)
    iterations = 0
    converged = False
    with np.errstate(invalid="ignore"):
        for iterations in range(1, max_iterations + 1):
            f = epsilon * (log_row - logsumexp((g[None, :] - shifted) / epsilon, axis=1))
            g = epsilon * (log_col - logsumexp((f[:, None] - shifted) / epsilon, axis=0))
            plan = np.exp((f[:, None] + g[None, :] - shifted) / epsilon)
            row_violation = np.abs(plan.sum(axis=1) - row).sum()
            col_violation = np.abs(plan.sum(axis=0) - col).sum()
            if row_violation <= tolerance and col_violation <= tolerance:
                converged = True
                break
    return plan, iterations, converged


def solve_sinkhorn(problem: TransportProblem, config: SolverConfig) -> TransportPlan:
    """Entropic OT via Sinkhorn iterations (full mass).

    Stops when the L1 violation of both marginals drops to
    ``config.tolerance`` or ``config.max_iterations`` is reached.
    """
    if problem.mass_fraction != 1.0:
        raise ConfigError(
            "solve_sinkhorn handles full transport only; "
            "use solve_sinkhorn_partial for mass_fraction < 1"
        )
    plan, iterations, converged = _log_sinkhorn(
        problem.row_marginal,
        problem.col_marginal,
        problem.cost,
        config.epsilon,
        config.tolerance,
        config.max_iterations,
    )
    objective = float(np.sum(plan * problem.cost))
    return TransportPlan(plan, objective, iterations, converged)


def _augment_partial(problem: TransportProblem, slack_slack_cost: float):
    """Dummy-node extension: one slack cell of mass (1 - s) on each side.

    Slack-to-real arcs cost zero, so leaving mass unshipped is free; the
    slack-to-slack arc cost is the caller's choice. The augmented problem
    is balanced with total mass (2 - s) and is returned normalized to unit
    mass along with that total.
    """
    s = problem.mass_fraction
    n1, n2 = problem.shape
    total = 2.0 - s
    row = np.concatenate([problem.row_marginal, [1.0 - s]]) / total
    col = np.concatenate([problem.col_marginal, [1.0 - s]]) / total
    cost = np.zeros((n1 + 1, n2 + 1))
    cost[:n1, :n2] = problem.cost
    cost[n1, n2] = slack_slack_cost
    return TransportProblem(row, col, cost, 1.0), total


def solve_sinkhorn_partial(
    problem: TransportProblem, config: SolverConfig
) -> TransportPlan:
    """Entropic partial OT via the dummy-node reduction.

    Runs :func:`solve_sinkhorn` on the augmented (n1+1) x (n2+1) problem,
    strips the slack row/column, and projects the remaining block onto the
    mass constraint. The projection is needed because the entropic plan at
    finite epsilon places mass on the slack-slack cell, which inflates the
    stripped block's total above ``s``; rescaling restores the equality
    without disturbing the inequality constraints.
    """
    s = problem.mass_fraction
    if s == 1.0:
        return solve_sinkhorn(problem, config)
    n1, n2 = problem.shape
    augmented, total = _augment_partial(problem, slack_slack_cost=0.0)
    # Tighter inner tolerance so the stripped block still meets the
    # caller's tolerance after rescaling back by the augmented total and
    # projecting onto the mass constraint.
    inner = replace(config, tolerance=config.tolerance * s / (4.0 * total))
    solution = solve_sinkhorn(augmented, inner)
    block = solution.plan[:n1, :n2] * total
    block_mass = float(block.sum())
    if block_mass > 0.0:
        block = block * (s / block_mass)
    objective = float(np.sum(block * problem.cost))
    return TransportPlan(block, objective, solution.iterations_used, solution.converged)


def _transport_lp(
    row: np.ndarray, col: np.ndarray, cost: np.ndarray
) -> tuple[np.ndarray, int]:
    """Solve the balanced transportation LP exactly via HiGHS."""
    n1, n2 = cost.shape
    if abs(row.sum() - col.sum()) > MARGINAL_SUM_TOL:
        raise FeasibilityError(
            f"marginal totals differ: {row.sum()!r} vs {col.sum()!r}"
        )
    row_eq = sp.kron(sp.eye(n1), np.ones((1, n2)))
    col_eq = sp.kron(np.ones((1, n1)), sp.eye(n2))
    a_eq = sp.vstack([row_eq, col_eq], format="csr")
    b_eq = np.concatenate([row, col])
    result = linprog(
        cost.ravel(),
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0, None),
        method="highs",
        options={
            "primal_feasibility_tolerance": 1e-10,
            "dual_feasibility_tolerance": 1e-10,
        },
    )
    if result.status != 0:
        raise FeasibilityError(f"LP solver failed (status {result.status}): {result.message}")
    plan = np.maximum(result.x.reshape(n1, n2), 0.0)
    return plan, int(result.nit)


def solve_lp(problem: TransportProblem) -> TransportPlan:
    """Exact OT as a linear program (vertex solution)."""
    if problem.mass_fraction != 1.0:
        raise ConfigError(
            "solve_lp handles full transport only; "
            "use solve_lp_partial for mass_fraction < 1"
        )
    plan, iterations = _transport_lp(
        problem.row_marginal, problem.col_marginal, problem.cost
    )
    objective = float(np.sum(plan * problem.cost))
    return TransportPlan(plan, objective, iterations, True)


def solve_lp_partial(problem: TransportProblem) -> TransportPlan:
    """Exact partial OT via the dummy-node reduction solved as an LP.

    The slack-to-slack arc gets cost 2*max(cost)+1 rather than zero: with a
    zero-cost arc, ties through zero-cost real cells admit optima whose
    stripped block carries more than ``s`` mass, violating the transported-
    mass equality. A positive penalty makes every optimum ship exactly
    ``s`` without changing the optimal objective.
    """
    s = problem.mass_fraction
    if s == 1.0:
        return solve_lp(problem)
    n1, n2 = problem.shape
    penalty = 2.0 * float(problem.cost.max()) + 1.0
    augmented, total = _augment_partial(problem, slack_slack_cost=penalty)
    plan_aug, iterations = _transport_lp(
        augmented.row_marginal, augmented.col_marginal, augmented.cost
    )
    block = plan_aug[:n1, :n2] * total
    objective = float(np.sum(block * problem.cost))
    return TransportPlan(block, objective, iterations, True)


def solve(problem: TransportProblem, config: SolverConfig) -> TransportPlan:
    """Dispatch to the backend named in ``config``."""
    if config.backend == "eot":
        return solve_sinkhorn(problem, config)
    if config.backend == "epot":
        return solve_sinkhorn_partial(problem, config)
    if config.backend == "lpot":
        return solve_lp(problem)
    return solve_lp_partial(problem)


def validate_plan(plan: TransportPlan, problem: TransportProblem) -> FeasibilityReport:
    """Report constraint violations of ``plan`` against ``problem``."""
    x = plan.plan
    if x.shape != problem.shape:
        raise ConfigError(f"plan shape {x.shape} != problem shape {problem.shape}")
    row_sums = x.sum(axis=1)
    col_sums = x.sum(axis=0)
    mass = float(x.sum())
    partial = problem.mass_fraction < 1.0
    if partial:
        row_violation = float(np.maximum(row_sums - problem.row_marginal, 0.0).sum())
        col_violation = float(np.maximum(col_sums - problem.col_marginal, 0.0).sum())
    else:
        row_violation = float(np.abs(row_sums - problem.row_marginal).sum())
        col_violation = float(np.abs(col_sums - problem.col_marginal).sum())
    return FeasibilityReport(
        partial=partial,
        row_violation=row_violation,
        col_violation=col_violation,
        row_excess_max=float(np.maximum(row_sums - problem.row_marginal, 0.0).max()),
        col_excess_max=float(np.maximum(col_sums - problem.col_marginal, 0.0).max()),
        mass=mass,
        mass_error=abs(mass - problem.mass_fraction),
        min_entry=float(x.min()),
        negative_entries=int(np.sum(x < 0)),
    )
