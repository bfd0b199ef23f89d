"""Independent oracles used to freeze expected values in the tests.

These deliberately avoid the library's solver code paths: the LP oracle
enumerates basic feasible solutions directly, and the partial-transport
oracle does a brute-force grid search over feasible plans.
"""

from itertools import combinations

import numpy as np


def lp_objective_bfs(row, col, cost, atol=1e-9):
    """Exact OT objective by enumerating basic feasible solutions.

    Every vertex of the transportation polytope is the unique solution of
    the marginal equations restricted to some full-rank support of size
    n1 + n2 - 1, so enumerating all supports of that size and keeping the
    feasible ones covers all vertices.
    """
    row = np.asarray(row, dtype=float)
    col = np.asarray(col, dtype=float)
    cost = np.asarray(cost, dtype=float)
    n1, n2 = cost.shape
    cells = [(i, j) for i in range(n1) for j in range(n2)]
    # Equality system: n1 row-sum constraints and n2 column-sum constraints
    # (one is redundant; lstsq handles the rank deficiency).
    b = np.concatenate([row, col])
    best = np.inf
    for support in combinations(cells, n1 + n2 - 1):
        a = np.zeros((n1 + n2, len(support)))
        for k, (i, j) in enumerate(support):
            a[i, k] = 1.0
            a[n1 + j, k] = 1.0
        x, *_ = np.linalg.lstsq(a, b, rcond=None)
        if np.any(x < -1e-12):
            continue
        if np.abs(a @ x - b).max() > atol:
            continue
        value = sum(cost[i, j] * v for (i, j), v in zip(support, x))
        best = min(best, value)
    assert np.isfinite(best), "no basic feasible solution found"
    return best


def pot_objective_grid(row, col, cost, mass, resolution=1e-3):
    """Brute-force partial-OT objective for 2x2 problems.

    Scans (x00, x01, x10) on a grid with x11 fixed by the mass constraint,
    keeping plans that satisfy the marginal inequalities.
    """
    a1, a2 = row
    b1, b2 = col
    (c00, c01), (c10, c11) = np.asarray(cost, dtype=float)
    best = np.inf
    x00_grid = np.arange(0.0, min(a1, b1, mass) + resolution / 2, resolution)
    x01_vals = np.arange(0.0, min(a1, b2, mass) + resolution / 2, resolution)
    x10_vals = np.arange(0.0, min(a2, b1, mass) + resolution / 2, resolution)
    x01m, x10m = np.meshgrid(x01_vals, x10_vals, indexing="ij")
    for x00 in x00_grid:
        x11 = mass - x00 - x01m - x10m
        ok = (
            (x11 >= -1e-12)
            & (x00 + x01m <= a1 + 1e-12)
            & (x10m + x11 <= a2 + 1e-12)
            & (x00 + x10m <= b1 + 1e-12)
            & (x01m + x11 <= b2 + 1e-12)
        )
        if not ok.any():
            continue
        values = c00 * x00 + c01 * x01m + c10 * x10m + c11 * x11
        best = min(best, float(values[ok].min()))
    assert np.isfinite(best), "grid search found no feasible plan"
    return best


def random_problem(rng, n1=None, n2=None, max_size=8):
    """Random transport problem with strictly positive uniform costs."""
    n1 = n1 or int(rng.integers(2, max_size + 1))
    n2 = n2 or int(rng.integers(2, max_size + 1))
    row = rng.dirichlet(np.ones(n1))
    col = rng.dirichlet(np.ones(n2))
    cost = rng.uniform(0.05, 1.0, size=(n1, n2))
    return row, col, cost


def grid_marginal(rng, n, denominator=12):
    """Marginal on a 1/denominator grid (entries may be zero)."""
    counts = rng.multinomial(denominator, np.ones(n) / n)
    return counts / denominator


def central_difference(fn, params, step=1e-5):
    """Central finite-difference gradient of a scalar function of a dict."""
    grads = {}
    for name, value in params.items():
        grad = np.zeros_like(value)
        it = np.nditer(value, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            plus = {k: v.copy() for k, v in params.items()}
            minus = {k: v.copy() for k, v in params.items()}
            plus[name][idx] += step
            minus[name][idx] -= step
            grad[idx] = (fn(plus) - fn(minus)) / (2 * step)
            it.iternext()
        grads[name] = grad
    return grads


def relative_error(got, want, floor=1e-6):
    """Max elementwise relative error with an absolute floor."""
    got = np.asarray(got, dtype=float)
    want = np.asarray(want, dtype=float)
    return float(np.max(np.abs(got - want) / np.maximum(np.abs(want), floor)))
