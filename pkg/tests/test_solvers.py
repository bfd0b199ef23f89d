import numpy as np
import pytest
from oracles import lp_objective_bfs, pot_objective_grid, random_problem

from otreg.exceptions import ConfigError
from otreg.solvers import (
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

CROSS_COST = [[0.0, 1.0], [1.0, 0.0]]
CROSS = dict(row_marginal=[0.7, 0.3], col_marginal=[0.4, 0.6], cost=CROSS_COST)

# Tight settings for checks that need the entropic solver to act as an
# eps -> 0 surrogate of the exact solution.
SHARP = SolverConfig(epsilon=0.004, tolerance=1e-9, max_iterations=200_000)


class TestSolverConfig:
    def test_defaults_match_production_settings(self):
        cfg = SolverConfig()
        assert cfg.epsilon == 0.5
        assert cfg.tolerance == 5e-5
        assert cfg.max_iterations == 1000

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"epsilon": 0.0},
            {"epsilon": -1.0},
            {"tolerance": 0.0},
            {"max_iterations": 0},
            {"backend": "simplex"},
        ],
    )
    def test_invalid_config(self, kwargs):
        with pytest.raises(ConfigError):
            SolverConfig(**kwargs)


class TestTransportProblem:
    def test_rejects_unnormalized_marginals(self):
        with pytest.raises(ConfigError):
            TransportProblem([0.7, 0.4], [0.5, 0.5], np.zeros((2, 2)))

    def test_rejects_negative_cost(self):
        with pytest.raises(ConfigError):
            TransportProblem([0.5, 0.5], [0.5, 0.5], [[-0.1, 0.0], [0.0, 0.0]])

    @pytest.mark.parametrize("fraction", [0.0, -0.5, 1.5])
    def test_rejects_bad_mass_fraction(self, fraction):
        with pytest.raises(ConfigError):
            TransportProblem(
                [0.5, 0.5], [0.5, 0.5], np.zeros((2, 2)), mass_fraction=fraction
            )


class TestSinkhorn:
    def test_uniform_cost_gives_independence_coupling(self):
        problem = TransportProblem([0.5, 0.5], [0.5, 0.5], np.zeros((2, 2)))
        plan = solve_sinkhorn(problem, SolverConfig())
        np.testing.assert_allclose(plan.plan, 0.25 * np.ones((2, 2)), atol=1e-9)
        assert plan.objective == 0.0

    def test_sharp_limit_matches_lp_oracle(self):
        problem = TransportProblem(**CROSS)
        plan = solve_sinkhorn(problem, SHARP)
        oracle = lp_objective_bfs([0.7, 0.3], [0.4, 0.6], CROSS_COST)
        assert oracle == pytest.approx(0.3, abs=1e-12)
        assert plan.objective == pytest.approx(oracle, abs=1e-3)
        np.testing.assert_allclose(plan.plan, [[0.4, 0.3], [0.0, 0.3]], atol=1e-3)

    def test_diagonal_advantage_recovers_identity_coupling(self):
        rng = np.random.default_rng(3)
        marginal = rng.dirichlet(np.ones(2))
        cost = 1.0 - np.eye(2)
        problem = TransportProblem(marginal, marginal, cost)
        plan = solve_sinkhorn(problem, SHARP)
        oracle = lp_objective_bfs(marginal, marginal, cost)
        assert oracle == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(plan.plan, np.diag(marginal), atol=1e-3)

    def test_partial_problem_rejected(self):
        problem = TransportProblem(**CROSS, mass_fraction=0.5)
        with pytest.raises(ConfigError):
            solve_sinkhorn(problem, SolverConfig())

    def test_zero_marginal_entry_zeroes_plan_row(self):
        problem = TransportProblem([0.0, 1.0], [0.5, 0.5], CROSS_COST)
        plan = solve_sinkhorn(problem, SolverConfig())
        np.testing.assert_array_equal(plan.plan[0], [0.0, 0.0])
        assert plan.converged

    def test_stops_within_tolerance(self):
        rng = np.random.default_rng(4)
        row, col, cost = random_problem(rng, 5, 6)
        plan = solve_sinkhorn(TransportProblem(row, col, cost), SolverConfig())
        assert plan.converged
        report = validate_plan(plan, TransportProblem(row, col, cost))
        assert report.row_violation <= 5e-5
        assert report.col_violation <= 5e-5


class TestSinkhornPartial:
    def test_full_mass_matches_full_solver(self):
        problem = TransportProblem(**CROSS, mass_fraction=1.0)
        full = solve_sinkhorn(TransportProblem(**CROSS), SolverConfig())
        partial = solve_sinkhorn_partial(problem, SolverConfig())
        np.testing.assert_allclose(partial.plan, full.plan, atol=1e-6)

    def test_sharp_limit_objective_matches_grid_oracle(self):
        problem = TransportProblem(**CROSS, mass_fraction=0.4)
        plan = solve_sinkhorn_partial(problem, SHARP)
        oracle = pot_objective_grid([0.7, 0.3], [0.4, 0.6], CROSS_COST, 0.4)
        assert oracle == pytest.approx(0.0, abs=1e-9)
        assert plan.objective == pytest.approx(oracle, abs=1e-3)

    def test_mass_constraint_with_flat_cost(self):
        problem = TransportProblem(
            [0.5, 0.5], [0.5, 0.5], 0.3 * np.ones((2, 2)), mass_fraction=0.4
        )
        plan = solve_sinkhorn_partial(problem, SolverConfig())
        assert plan.plan.sum() == pytest.approx(0.4, abs=1e-6)

    def test_rejects_bad_fraction_via_problem(self):
        with pytest.raises(ConfigError):
            TransportProblem(**CROSS, mass_fraction=2.0)


class TestLp:
    def test_cross_cost_vertex(self):
        plan = solve_lp(TransportProblem(**CROSS))
        np.testing.assert_allclose(plan.plan, [[0.4, 0.3], [0.0, 0.3]], atol=1e-10)
        assert plan.objective == pytest.approx(0.3, abs=1e-10)

    def test_zero_cost_any_feasible_plan(self):
        problem = TransportProblem([0.7, 0.3], [0.4, 0.6], np.zeros((2, 2)))
        plan = solve_lp(problem)
        assert plan.objective == 0.0
        report = validate_plan(plan, problem)
        assert report.row_violation <= 1e-9
        assert report.col_violation <= 1e-9

    def test_one_by_one(self):
        plan = solve_lp(TransportProblem([1.0], [1.0], [[2.5]]))
        np.testing.assert_allclose(plan.plan, [[1.0]])
        assert plan.objective == pytest.approx(2.5)

    def test_partial_problem_rejected(self):
        with pytest.raises(ConfigError):
            solve_lp(TransportProblem(**CROSS, mass_fraction=0.5))

    def test_matches_bfs_enumeration(self):
        from oracles import grid_marginal

        rng = np.random.default_rng(5)
        for _ in range(20):
            row = grid_marginal(rng, 3)
            col = grid_marginal(rng, 3)
            cost = rng.uniform(0.0, 1.0, size=(3, 3))
            plan = solve_lp(TransportProblem(row, col, cost))
            assert plan.objective == pytest.approx(
                lp_objective_bfs(row, col, cost), abs=1e-9
            )


class TestLpPartial:
    def test_full_mass_equals_lp(self):
        problem = TransportProblem(**CROSS, mass_fraction=1.0)
        np.testing.assert_allclose(
            solve_lp_partial(problem).plan,
            solve_lp(TransportProblem(**CROSS)).plan,
            atol=1e-9,
        )

    def test_objective_matches_grid_oracle_low_mass(self):
        problem = TransportProblem(**CROSS, mass_fraction=0.4)
        plan = solve_lp_partial(problem)
        assert plan.objective == pytest.approx(0.0, abs=1e-9)
        assert plan.plan.sum() == pytest.approx(0.4, abs=1e-9)

    def test_objective_matches_grid_oracle_high_mass(self):
        problem = TransportProblem(**CROSS, mass_fraction=0.9)
        plan = solve_lp_partial(problem)
        oracle = pot_objective_grid([0.7, 0.3], [0.4, 0.6], CROSS_COST, 0.9)
        assert plan.objective == pytest.approx(oracle, abs=2e-3)


class TestValidatePlan:
    def test_exact_lp_plan(self):
        problem = TransportProblem(**CROSS)
        report = validate_plan(solve_lp(problem), problem)
        assert report.row_violation <= 1e-9
        assert report.col_violation <= 1e-9
        assert report.negative_entries == 0

    def test_sinkhorn_plan_within_default_tolerance(self):
        rng = np.random.default_rng(6)
        row, col, cost = random_problem(rng, 4, 4)
        problem = TransportProblem(row, col, cost)
        report = validate_plan(solve_sinkhorn(problem, SolverConfig()), problem)
        assert report.row_violation <= 5e-5
        assert report.col_violation <= 5e-5

    def test_corrupted_plan_flags_negativity(self):
        problem = TransportProblem(**CROSS)
        plan = solve_lp(problem).plan.copy()
        plan[0, 0] = -0.1
        report = validate_plan(
            TransportPlan(plan, 0.0, 0, True), problem
        )
        assert report.negative_entries == 1
        assert report.min_entry == pytest.approx(-0.1)


class TestSolverProperties:
    def test_feasibility_all_backends(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            row, col, cost = random_problem(rng)
            fraction = float(rng.uniform(0.2, 1.0))
            full = TransportProblem(row, col, cost)
            part = TransportProblem(row, col, cost, mass_fraction=fraction)
            for problem, cfg in [
                (full, SolverConfig(backend="eot")),
                (part, SolverConfig(backend="epot")),
                (full, SolverConfig(backend="lpot")),
                (part, SolverConfig(backend="lppot")),
            ]:
                report = validate_plan(solve(problem, cfg), problem)
                tol = 1e-9 if cfg.backend.startswith("lp") else 5e-5
                assert report.row_violation <= tol
                assert report.col_violation <= tol
                assert report.mass_error <= max(tol, 1e-6)
                assert report.negative_entries == 0

    def test_lp_never_worse_than_sinkhorn(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            row, col, cost = random_problem(rng, 4, 5)
            problem = TransportProblem(row, col, cost)
            lp = solve_lp(problem)
            sk = solve_sinkhorn(problem, SolverConfig())
            assert lp.objective <= sk.objective + 1e-4

    def test_entropic_convergence_to_lp(self):
        rng = np.random.default_rng(9)
        for _ in range(3):
            row, col, cost = random_problem(rng, 3, 3)
            problem = TransportProblem(row, col, cost)
            objectives = []
            for epsilon in (0.5, 0.1, 0.02, 0.004):
                cfg = SolverConfig(
                    epsilon=epsilon, tolerance=1e-9, max_iterations=500_000
                )
                objectives.append(solve_sinkhorn(problem, cfg).objective)
            # Non-increasing up to float noise in the converged objectives.
            for earlier, later in zip(objectives, objectives[1:]):
                assert later <= earlier + 1e-9
            assert objectives[-1] == pytest.approx(
                solve_lp(problem).objective, abs=1e-3
            )

    def test_pot_objective_monotone_in_mass(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            row, col, cost = random_problem(rng, 3, 4)
            values = [
                solve_lp_partial(
                    TransportProblem(row, col, cost, mass_fraction=s)
                ).objective
                for s in (0.2, 0.4, 0.6, 0.8, 1.0)
            ]
            for earlier, later in zip(values, values[1:]):
                assert later >= earlier - 1e-12

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(11)
        row, col, cost = random_problem(rng, 4, 3)
        perm = rng.permutation(4)
        base_problem = TransportProblem(row, col, cost)
        perm_problem = TransportProblem(row[perm], col, cost[perm])
        lp_base = solve_lp(base_problem).plan
        lp_perm = solve_lp(perm_problem).plan
        np.testing.assert_allclose(lp_perm, lp_base[perm], atol=1e-12)
        sk_base = solve_sinkhorn(base_problem, SolverConfig()).plan
        sk_perm = solve_sinkhorn(perm_problem, SolverConfig()).plan
        np.testing.assert_allclose(sk_perm, sk_base[perm], atol=1e-8)

    def test_cost_shift_leaves_plan_unchanged(self):
        rng = np.random.default_rng(12)
        row, col, cost = random_problem(rng, 3, 3)
        base = solve_sinkhorn(TransportProblem(row, col, cost), SolverConfig())
        shifted = solve_sinkhorn(
            TransportProblem(row, col, cost + 2.5), SolverConfig()
        )
        np.testing.assert_allclose(shifted.plan, base.plan, atol=1e-10)
        assert shifted.objective == pytest.approx(
            base.objective + 2.5, abs=1e-8
        )
