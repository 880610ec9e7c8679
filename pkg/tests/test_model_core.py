import math

import numpy as np
import pytest

from errors import DimensionError, InvalidCorrelationError, NotSpdError
from model_core import (
    AR1,
    EXCHANGEABLE,
    IDENTITY,
    CandidateModel,
    CorrelationSpec,
    Dataset,
    TrueModelSpec,
    build_correlation,
    projector_pieces,
    spd_factorize,
)


class TestDataset:
    def test_default_names(self):
        data = Dataset(y=[1.0, 2.0], X=[[1.0, 0.0], [0.0, 1.0]])
        assert data.names == ("x1", "x2")
        assert (data.n, data.p) == (2, 2)

    def test_arrays_are_read_only(self, tiny_data):
        with pytest.raises(ValueError):
            tiny_data.y[0] = 5.0

    def test_row_mismatch(self):
        with pytest.raises(DimensionError):
            Dataset(y=[1.0, 2.0, 3.0], X=np.ones((2, 1)))

    def test_non_finite(self):
        with pytest.raises(DimensionError):
            Dataset(y=[1.0, math.nan], X=np.ones((2, 1)))


class TestCandidateModel:
    def test_of_sorts_and_dedups(self):
        assert CandidateModel.of([3, 1, 3]).active == (1, 3)

    def test_unsorted_rejected(self):
        with pytest.raises(DimensionError):
            CandidateModel((2, 1))

    def test_out_of_range(self):
        with pytest.raises(DimensionError):
            CandidateModel.of([1, 4], p=3)

    def test_contains_and_label(self):
        full = CandidateModel((1, 2, 5))
        assert full.contains(CandidateModel((1, 5)))
        assert not CandidateModel((1,)).contains(full)
        assert CandidateModel().label() == "{}"
        assert full.label(["a", "b", "c", "d", "e"]) == "{a,b,e}"


class TestBuildCorrelation:
    def test_ar1_zero_is_identity(self):
        np.testing.assert_array_equal(build_correlation(CorrelationSpec(AR1, (0.0,)), 3), np.eye(3))

    def test_ar1_logdet(self, ar1_logdet):
        W = build_correlation(CorrelationSpec(AR1, (0.5,)), 3)
        np.testing.assert_allclose(W[0], [1.0, 0.5, 0.25])
        assert spd_factorize(W).logdet == pytest.approx(2.0 * math.log(0.75), abs=1e-12)
        assert ar1_logdet(0.5, 3) == pytest.approx(-0.575364, abs=1e-6)

    @pytest.mark.parametrize("theta", [-0.8, 0.3, 0.95])
    def test_ar1_logdet_matches_factorization(self, theta, ar1_logdet):
        W = build_correlation(CorrelationSpec(AR1, (theta,)), 12)
        assert spd_factorize(W).logdet == pytest.approx(ar1_logdet(theta, 12), abs=1e-9)

    def test_exchangeable_boundary_rejected(self):
        with pytest.raises(InvalidCorrelationError):
            build_correlation(CorrelationSpec(EXCHANGEABLE, (1.0,)), 4)

    def test_exchangeable_lower_bound_depends_on_n(self):
        # 下限 −1/(n−1) は開区間
        with pytest.raises(InvalidCorrelationError):
            build_correlation(CorrelationSpec(EXCHANGEABLE, (-1.0 / 3.0,)), 4)
        W = build_correlation(CorrelationSpec(EXCHANGEABLE, (-0.3,)), 4)
        assert np.all(np.linalg.eigvalsh(W) > 0)

    def test_random_theta_factorizes(self):
        rng = np.random.default_rng(123)
        for _ in range(300):
            family = (AR1, EXCHANGEABLE)[int(rng.integers(0, 2))]
            n = int(rng.integers(2, 51))
            lo, hi = CorrelationSpec(family, (0.5,)).validity_region(n)
            margin = 1e-3 * (hi - lo)
            W = build_correlation(CorrelationSpec(family, (float(rng.uniform(lo + margin, hi - margin)),)), n)
            factor = spd_factorize(W)
            assert np.isfinite(factor.logdet)
            np.testing.assert_allclose(factor.reconstruct(), W, atol=1e-10)

    def test_wrong_parameter_count(self):
        with pytest.raises(InvalidCorrelationError):
            CorrelationSpec(IDENTITY, (0.1,))
        with pytest.raises(InvalidCorrelationError):
            CorrelationSpec(AR1)

    def test_n_below_one(self):
        with pytest.raises(DimensionError):
            build_correlation(CorrelationSpec(), 0)


class TestSpdFactorize:
    def test_identity(self):
        assert spd_factorize(np.eye(3)).logdet == 0.0

    def test_diagonal(self):
        f = spd_factorize([[4.0, 0.0], [0.0, 9.0]])
        assert f.logdet == pytest.approx(math.log(36.0), abs=1e-12)
        np.testing.assert_allclose(f.reconstruct(), [[4.0, 0.0], [0.0, 9.0]])

    def test_indefinite(self):
        with pytest.raises(NotSpdError):
            spd_factorize([[1.0, 2.0], [2.0, 1.0]])

    def test_near_singular_pivot(self):
        with pytest.raises(NotSpdError):
            spd_factorize([[1.0, 1.0], [1.0, 1.0 + 1e-14]])

    def test_solve(self):
        M = np.array([[4.0, 1.0], [1.0, 3.0]])
        b = np.array([1.0, 2.0])
        np.testing.assert_allclose(spd_factorize(M).solve(b), np.linalg.solve(M, b), rtol=1e-12)


class TestProjectorPieces:
    def test_mean_model(self, tiny_data):
        pieces = projector_pieces(tiny_data, CandidateModel((1,)))
        assert pieces.q == pytest.approx(2.0, abs=1e-12)
        assert pieces.logdet_xx == pytest.approx(math.log(3.0), abs=1e-12)

    def test_empty_model(self, tiny_data):
        pieces = projector_pieces(tiny_data, CandidateModel())
        assert pieces.q == pytest.approx(14.0)
        assert pieces.logdet_xwx == 0.0
        assert pieces.logdet_xx == 0.0

    def test_duplicated_column_names_model(self):
        data = Dataset(y=[1.0, 2.0, 3.0], X=np.ones((3, 2)))
        with pytest.raises(NotSpdError, match=r"\{1,2\}"):
            projector_pieces(data, CandidateModel((1, 2)))

    def test_column_space_invariance(self, random_data):
        rng = np.random.default_rng(5)
        model = CandidateModel((1, 2, 4))
        W = build_correlation(CorrelationSpec(AR1, (0.4,)), random_data.n)
        base = projector_pieces(random_data, model, W)
        for _ in range(20):
            T = rng.standard_normal((3, 3)) + 3.0 * np.eye(3)
            X = random_data.X.copy()
            X[:, model.columns] = X[:, model.columns] @ T
            moved = projector_pieces(random_data.with_design(X), model, W)
            assert moved.q == pytest.approx(base.q, rel=1e-8)


class TestTrueModelSpec:
    def test_active_set(self, sparse_truth):
        assert sparse_truth.active_set == CandidateModel((1, 2, 5))
        assert sparse_truth.k0 == 3

    def test_truncated(self, sparse_truth):
        short = sparse_truth.truncated(20)
        assert short.n == 20
        np.testing.assert_array_equal(short.design, sparse_truth.design[:20])
        with pytest.raises(DimensionError):
            sparse_truth.truncated(51)

    def test_invalid_correlation_for_n(self):
        with pytest.raises(InvalidCorrelationError):
            TrueModelSpec(np.ones(1), 1.0, CorrelationSpec(EXCHANGEABLE, (-0.4,)), np.ones((4, 1)))
