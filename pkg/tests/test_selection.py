import numpy as np
import pytest

from criteria import CriterionKind, evaluate_criterion
from errors import ConfigError, EmptyWinnerError, TooLargeError
from model_core import AR1, CandidateModel, Dataset, TrueModelSpec
from selection import CandidateRow, enumerate_candidates, pick_winners, select
from settings import RIC_STAR_FULL_RATE_FLOORS
from simulate import ExperimentConfig, generate_design, sample_dgp


class TestEnumerateCandidates:
    def test_all_subsets(self):
        models = enumerate_candidates(3)
        assert len(models) == 8
        assert models[0] == CandidateModel()
        assert [m.active for m in models[1:4]] == [(1,), (2,), (3,)]
        assert models[-1] == CandidateModel((1, 2, 3))

    def test_forced(self):
        models = enumerate_candidates(3, forced=[1])
        assert len(models) == 4
        assert all(m.contains(CandidateModel((1,))) for m in models)

    def test_max_k(self):
        assert len(enumerate_candidates(6, max_k=2)) == 1 + 6 + 15

    def test_too_large(self):
        with pytest.raises(TooLargeError, match="max-k"):
            enumerate_candidates(26)

    def test_max_k_below_forced(self):
        with pytest.raises(ConfigError):
            enumerate_candidates(4, forced=[1, 2], max_k=1)


class TestPickWinners:
    def test_smaller_k_wins_ties(self):
        rows = [
            CandidateRow(CandidateModel((1, 2)), fit=object(), values={CriterionKind.BIC: 1.5}),
            CandidateRow(CandidateModel((3,)), fit=object(), values={CriterionKind.BIC: 1.5}),
        ]
        assert pick_winners(rows, [CriterionKind.BIC])[CriterionKind.BIC].model == CandidateModel((3,))

    def test_lexicographic_tie_break(self):
        rows = [
            CandidateRow(CandidateModel((2,)), fit=object(), values={CriterionKind.AIC: 0.0}),
            CandidateRow(CandidateModel((1,)), fit=object(), values={CriterionKind.AIC: 0.0}),
        ]
        assert pick_winners(rows, [CriterionKind.AIC])[CriterionKind.AIC].model == CandidateModel((1,))

    def test_empty_winner(self):
        rows = [CandidateRow(CandidateModel((1,)), reason="rank deficient")]
        with pytest.raises(EmptyWinnerError):
            pick_winners(rows, [CriterionKind.RICC])
        assert pick_winners(rows, [CriterionKind.RICC], strict=False) == {CriterionKind.RICC: None}


class TestSelect:
    def test_rank_deficient_candidate_is_skipped(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(25)
        X = np.column_stack([x, x, rng.standard_normal(25)])
        data = Dataset(y=2.0 * x + rng.standard_normal(25), X=X)
        report = select(data, kinds=[CriterionKind.BIC])
        skipped = [r for r in report.rows if not r.feasible]
        assert [r.model.active for r in skipped] == [(1, 2), (1, 2, 3)]
        assert all("rank deficient" in r.reason for r in skipped)
        assert report.winner(CriterionKind.BIC).model in (CandidateModel((1,)), CandidateModel((2,)))

    def test_report_dict(self, random_data):
        report = select(random_data, kinds=[CriterionKind.RIC, CriterionKind.AIC])
        out = report.to_dict()
        assert out["criteria"] == ["RIC", "AIC"]
        assert len(out["rows"]) == 16
        assert out["winners"]["RIC"]["label"].startswith("{")

    def test_threads_match_serial(self, random_data):
        kinds = list(CriterionKind)
        serial = select(random_data, kinds=kinds)
        threaded = select(random_data, kinds=kinds, workers=3)
        assert serial.to_dict() == threaded.to_dict()

    def test_bic_recovers_true_model(self, sparse_truth):
        big = TrueModelSpec(sparse_truth.beta0, 1.0, sparse_truth.correlation, generate_design(200, 6, design_seed=11))
        hits = 0
        for rep in range(20):
            report = select(sample_dgp(big, 200, seed=5, replication=rep), kinds=[CriterionKind.BIC])
            hits += report.winner(CriterionKind.BIC).model == big.active_set
        assert hits > 10

    @pytest.mark.slow
    @pytest.mark.parametrize("n", sorted(RIC_STAR_FULL_RATE_FLOORS))
    def test_ric_star_prefers_full_model(self, n):
        config = ExperimentConfig(replications=300)
        truth = config.truth(n)
        full = CandidateModel(tuple(range(1, 7)))
        hits = 0
        for rep in range(config.replications):
            report = select(sample_dgp(truth, n, config.seed, rep), kinds=[CriterionKind.RIC_STAR])
            hits += report.winner(CriterionKind.RIC_STAR).model == full
        assert hits / config.replications > RIC_STAR_FULL_RATE_FLOORS[n]

    def test_winner_value_reproduced_from_stored_fit(self, random_data):
        kinds = list(CriterionKind)
        report = select(random_data, AR1, kinds=kinds)
        rows = {row.model: row for row in report.rows}
        for kind in kinds:
            winner = report.winner(kind)
            again = evaluate_criterion(rows[winner.model].fit, kind, random_data.n)
            assert again == pytest.approx(winner.value, abs=1e-12)
