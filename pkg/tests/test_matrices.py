import numpy as np
import pytest

from otreg.exceptions import (
    DegenerateMarginalError,
    DimensionError,
    NegativeTargetError,
)
from otreg.matrices import (
    MarginalPair,
    MatrixSample,
    marginals_of,
    mat,
    normalize_marginals,
    vec,
)
from otreg.solvers import SolverConfig, TransportProblem, solve_sinkhorn


class TestVecMat:
    def test_vec_row_major(self):
        np.testing.assert_array_equal(vec([[1, 2], [3, 4]]), [1, 2, 3, 4])

    def test_vec_scalar_matrix(self):
        np.testing.assert_array_equal(vec([[7]]), [7])

    def test_vec_single_row(self):
        np.testing.assert_array_equal(vec([[0, 1, 2]]), [0, 1, 2])

    def test_mat_inverse_of_vec(self):
        np.testing.assert_array_equal(mat([1, 2, 3, 4], 2, 2), [[1, 2], [3, 4]])
        np.testing.assert_array_equal(mat([5], 1, 1), [[5]])
        np.testing.assert_array_equal(mat([1, 2, 3, 4, 5, 6], 2, 3), [[1, 2, 3], [4, 5, 6]])

    def test_mat_length_mismatch(self):
        with pytest.raises(DimensionError):
            mat([1, 2, 3], 2, 2)

    def test_round_trip_exact(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            rows, cols = rng.integers(1, 7, size=2)
            m = rng.standard_normal((rows, cols))
            np.testing.assert_array_equal(mat(vec(m), rows, cols), m)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            vec([[1.0, np.nan]])
        with pytest.raises(ValueError):
            mat([1.0, np.inf], 1, 2)


class TestMarginalsOf:
    def test_hand_sums(self):
        pair = marginals_of([[1, 2], [3, 4]])
        np.testing.assert_allclose(pair.row, [3, 7])
        np.testing.assert_allclose(pair.col, [4, 6])
        assert pair.mass == 10

    def test_zero_matrix(self):
        pair = marginals_of(np.zeros((2, 2)))
        np.testing.assert_array_equal(pair.row, [0, 0])
        np.testing.assert_array_equal(pair.col, [0, 0])
        assert pair.mass == 0

    def test_transport_fixture(self):
        pair = marginals_of([[0.4, 0.3], [0.0, 0.3]])
        np.testing.assert_allclose(pair.row, [0.7, 0.3])
        np.testing.assert_allclose(pair.col, [0.4, 0.6])
        np.testing.assert_allclose(pair.mass, 1.0)

    def test_mass_conservation(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            m = rng.uniform(0, 5, size=rng.integers(1, 6, size=2))
            pair = marginals_of(m)
            assert abs(pair.row.sum() - pair.mass) <= 1e-9 * max(1.0, pair.mass)
            assert abs(pair.col.sum() - pair.mass) <= 1e-9 * max(1.0, pair.mass)

    def test_float_noise_clipped_with_warning(self):
        with pytest.warns(UserWarning):
            pair = marginals_of([[1.0, -1e-13], [0.5, 0.5]])
        assert np.all(pair.row >= 0)

    def test_genuine_negative_rejected(self):
        with pytest.raises(NegativeTargetError):
            marginals_of([[1.0, -1e-6], [0.5, 0.5]])


class TestNormalizeMarginals:
    def test_simple_scale(self):
        pair, scale = normalize_marginals(MarginalPair([3.0, 7.0], [4.0, 6.0], 10.0))
        np.testing.assert_allclose(pair.row, [0.3, 0.7])
        np.testing.assert_allclose(pair.col, [0.4, 0.6])
        assert scale == 10.0

    def test_unit_case(self):
        pair, scale = normalize_marginals(MarginalPair([1.0], [1.0], 1.0))
        np.testing.assert_array_equal(pair.row, [1.0])
        assert scale == 1.0

    def test_mismatched_sums_reconciled(self):
        raw = MarginalPair([0.7, 0.35], [0.5, 0.5], 1.0)
        pair, scale = normalize_marginals(raw)
        assert scale == pytest.approx(1.025, abs=1e-12)
        assert pair.row.sum() == pytest.approx(1.0, abs=1e-12)
        assert pair.col.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(pair.row, [2 / 3, 1 / 3])
        np.testing.assert_allclose(pair.col, [0.5, 0.5])

    def test_degenerate_mass(self):
        with pytest.raises(DegenerateMarginalError):
            normalize_marginals(MarginalPair([0.0, 0.0], [1.0, 0.0], 0.0))

    def test_output_feeds_solver(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            m = rng.uniform(0, 3, size=(3, 4)) + 0.01
            pair, _ = normalize_marginals(marginals_of(m))
            problem = TransportProblem(pair.row, pair.col, np.ones((3, 4)))
            plan = solve_sinkhorn(problem, SolverConfig())
            assert plan.converged


class TestValueSemantics:
    def test_arrays_read_only(self):
        pair = marginals_of([[1.0, 2.0]])
        with pytest.raises(ValueError):
            pair.row[0] = 5.0
        sample = MatrixSample(input=np.ones((2, 2)), target=np.ones((2, 2)))
        with pytest.raises(ValueError):
            sample.input[0, 0] = 3.0

    def test_inference_sample_without_target(self):
        sample = MatrixSample(input=np.ones((2, 3)))
        assert sample.target is None
