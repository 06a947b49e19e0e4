import numpy as np
import pytest

from spmlab.metrics import (
    MetricReport,
    MonteCarloConfig,
    average_precision,
    compute_metric_report,
    coverage,
    estimate_proposition_bounds,
    mean_average_precision,
    monte_carlo_proposition_check,
    noisy_metric_transform,
    ranking_loss,
    thresholded_metrics,
)
from spmlab.net import make_rng

from oracles import (
    brute_coverage,
    brute_mean_average_precision,
    brute_ranking_loss,
)


def random_instance(rng, tie_free=True):
    n = int(rng.integers(2, 31))
    n_classes = int(rng.integers(2, 9))
    scores = rng.standard_normal((n, n_classes))
    if not tie_free:
        scores = np.round(scores, 1)  # force frequent ties
    labels = (rng.random((n, n_classes)) < 0.4).astype(float)
    labels[labels.sum(axis=1) == 0, 0] = 1.0
    full = np.flatnonzero(labels.sum(axis=1) == n_classes)
    labels[full, 0] = 1.0  # keep rows from being all-positive only sometimes
    return scores, labels


class TestAveragePrecision:
    def test_hand_enumerated_case(self):
        ap = average_precision([0.9, 0.8, 0.1], [1, 0, 1])
        assert abs(ap - (1.0 + 2.0 / 3.0) / 2.0) < 1e-12

    def test_perfect_ranking(self):
        assert average_precision([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_reversed_ranking(self):
        assert average_precision([0.9, 0.8, 0.7, 0.1], [0, 0, 0, 1]) == 0.25

    def test_zero_positives_rejected(self):
        with pytest.raises(ValueError, match="no positive"):
            average_precision([0.5, 0.4], [0, 0])

    def test_ties_break_by_ascending_index(self):
        # equal scores: sample 0 is ranked first by convention
        assert average_precision([0.5, 0.5], [1, 0]) == 1.0
        assert average_precision([0.5, 0.5], [0, 1]) == 0.5

    def test_monotone_in_positive_score(self):
        rng = make_rng(0)
        for _ in range(50):
            scores = rng.standard_normal(12)
            labels = (rng.random(12) < 0.4).astype(float)
            if labels.sum() == 0:
                labels[3] = 1.0
            base = average_precision(scores, labels)
            k = int(rng.choice(np.flatnonzero(labels == 1.0)))
            raised = scores.copy()
            raised[k] += abs(rng.standard_normal()) + 1e-3
            assert average_precision(raised, labels) >= base - 1e-12


class TestMeanAveragePrecision:
    def test_perfect(self):
        value, _ = mean_average_precision(
            [[0.9, 0.1], [0.2, 0.8]], [[1, 0], [0, 1]]
        )
        assert value == 1.0

    def test_mean_of_mixed_classes(self):
        scores = np.array([[0.9, 0.1], [0.8, 0.9], [0.1, 0.2]])
        labels = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        value, per_class = mean_average_precision(scores, labels)
        assert per_class[0] == 1.0
        assert abs(value - (per_class[0] + per_class[1]) / 2.0) < 1e-15

    def test_non_evaluable_class_excluded(self):
        scores = np.array([[0.9, 0.1], [0.2, 0.8]])
        labels = np.array([[1.0, 0.0], [1.0, 0.0]])
        value, per_class = mean_average_precision(scores, labels)
        assert np.isnan(per_class[1])
        assert value == per_class[0]

    def test_no_evaluable_class_rejected(self):
        with pytest.raises(ValueError, match="mAP undefined"):
            mean_average_precision([[0.5]], [[0.0]])


class TestCoverage:
    def test_hand_ranked_row(self):
        assert coverage([[0.9, 0.5, 0.1]], [[1.0, 0.0, 1.0]]) == 2.0

    def test_top_one_truth(self):
        assert coverage([[0.9, 0.5, 0.1]], [[1.0, 0.0, 0.0]]) == 0.0

    def test_all_positive_row_is_forced(self):
        assert coverage([[0.3, 0.9, 0.5]], [[1.0, 1.0, 1.0]]) == 2.0

    def test_row_without_positive_rejected(self):
        with pytest.raises(ValueError, match="row 0"):
            coverage([[0.5, 0.5]], [[0.0, 0.0]])


class TestRankingLoss:
    def test_hand_pair_enumeration(self):
        assert ranking_loss([[0.9, 0.5, 0.1]], [[1.0, 0.0, 1.0]]) == 0.5

    def test_perfectly_separated(self):
        assert ranking_loss([[0.9, 0.8, 0.1]], [[1.0, 1.0, 0.0]]) == 0.0

    def test_tie_counts_as_violation(self):
        assert ranking_loss([[0.5, 0.5]], [[1.0, 0.0]]) == 1.0

    def test_invalid_rows_skipped(self):
        scores = [[0.9, 0.1], [0.7, 0.3]]
        labels = [[1.0, 1.0], [1.0, 0.0]]  # first row has no negative
        assert ranking_loss(scores, labels) == 0.0

    def test_no_valid_rows_rejected(self):
        with pytest.raises(ValueError, match="no row"):
            ranking_loss([[0.9, 0.1]], [[1.0, 1.0]])


class TestThresholded:
    def test_perfect_predictions(self):
        probs = np.array([[0.9, 0.1], [0.2, 0.8]])
        labels = np.array([[1.0, 0.0], [0.0, 1.0]])
        oa, mf1, mprec, mrec, *_ = thresholded_metrics(probs, labels, 0.5)
        assert oa == 1.0 and mf1 == 1.0 and mprec == 1.0 and mrec == 1.0

    def test_zero_division_rule(self):
        probs = np.array([[0.1], [0.2]])
        labels = np.array([[1.0], [1.0]])
        _, mf1, mprec, mrec, prec, rec, f1 = thresholded_metrics(probs, labels)
        assert prec[0] == 0.0 and rec[0] == 0.0 and f1[0] == 0.0

    def test_two_by_two_confusion(self):
        probs = np.array([[0.9, 0.2], [0.4, 0.7]])
        labels = np.array([[1.0, 0.0], [1.0, 1.0]])
        oa, mf1, mprec, mrec, prec, rec, f1 = thresholded_metrics(probs, labels, 0.5)
        assert oa == 0.75
        np.testing.assert_allclose(prec, [1.0, 1.0])
        np.testing.assert_allclose(rec, [0.5, 1.0])
        np.testing.assert_allclose(f1, [2.0 / 3.0, 1.0])
        assert abs(mf1 - 5.0 / 6.0) < 1e-15


class TestOracleAgreement:
    def test_ranking_metrics_match_brute_force(self):
        rng = make_rng(42)
        for k in range(40):
            scores, labels = random_instance(rng, tie_free=(k % 2 == 0))
            value, _ = mean_average_precision(scores, labels)
            assert abs(value - brute_mean_average_precision(scores, labels)) <= 1e-12
            assert abs(coverage(scores, labels) - brute_coverage(scores, labels)) <= 1e-12
            try:
                rl = ranking_loss(scores, labels)
            except ValueError:
                continue
            assert abs(rl - brute_ranking_loss(scores, labels)) <= 1e-12

    def test_permutation_invariance(self):
        rng = make_rng(43)
        scores, labels = random_instance(rng)
        perm = rng.permutation(scores.shape[0])
        v1, _ = mean_average_precision(scores, labels)
        v2, _ = mean_average_precision(scores[perm], labels[perm])
        assert abs(v1 - v2) <= 1e-12
        assert abs(coverage(scores, labels) - coverage(scores[perm], labels[perm])) <= 1e-12
        assert abs(ranking_loss(scores, labels) - ranking_loss(scores[perm], labels[perm])) <= 1e-12


class TestNoisyMetricTransform:
    def test_worked_counts(self):
        (res,) = noisy_metric_transform([10], [8], [9], [7], [6])
        assert abs(res.noisy_recall - 2.0 / 3.0) < 1e-15
        assert res.noisy_recall == res.noisy_recall_parametric
        assert abs(res.noisy_precision - 2.0 / 9.0) < 1e-15
        assert res.noisy_precision == res.noisy_precision_parametric

    def test_no_flips_means_noisy_equals_clean(self):
        (res,) = noisy_metric_transform([10], [6], [8], [0], [0])
        assert res.noisy_recall == res.clean_recall
        assert res.noisy_recall_parametric == res.clean_recall
        assert res.noisy_precision_parametric == res.clean_precision

    def test_perfect_model_keeps_unit_recall(self):
        (res,) = noisy_metric_transform([10], [10], [10], [4], [4])
        assert res.noisy_recall == 1.0
        assert res.noisy_recall_parametric == 1.0

    def test_degenerate_cases_flagged(self):
        (res,) = noisy_metric_transform([5], [0], [0], [3], [0])
        assert "no_predicted_positives" in res.degenerate

    def test_invalid_counts_rejected(self):
        with pytest.raises(ValueError, match="PF <= F <= P"):
            noisy_metric_transform([5], [5], [5], [6], [0])
        with pytest.raises(ValueError, match="PF <= TP"):
            noisy_metric_transform([5], [1], [5], [3], [2])

    def test_identity_on_random_integer_fixtures(self):
        rng = make_rng(44)
        for _ in range(100):
            p = int(rng.integers(1, 50))
            f = int(rng.integers(0, p + 1))
            tp = int(rng.integers(0, p + 1))
            pf = int(rng.integers(0, min(f, tp) + 1))
            pp = int(rng.integers(tp, tp + 30))
            results = noisy_metric_transform([p], [tp], [pp], [f], [pf])
            res = results[0]
            if np.isnan(res.noisy_recall) or np.isnan(res.noisy_recall_parametric):
                continue
            assert res.noisy_recall == res.noisy_recall_parametric
            if not np.isnan(res.noisy_precision_parametric):
                assert res.noisy_precision == res.noisy_precision_parametric


class TestPropositionBounds:
    def test_uniform_beta_has_no_covariance_term(self):
        value = estimate_proposition_bounds([0.9, 0.5], [0.3, 0.3], "random")
        assert abs(value - 0.7 * 0.7) < 1e-15

    def test_two_class_worked_example(self):
        value = estimate_proposition_bounds([0.9, 0.5], [0.2, 0.8], "random")
        assert abs(value - 0.41) < 1e-12

    def test_dominant_uniform_scale(self):
        value = estimate_proposition_bounds([0.6, 0.8], [0.5, 0.5], "dominant")
        assert abs(value - 2.0 * 0.7) < 1e-12

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            estimate_proposition_bounds([0.5], [0.5, 0.6], "random")
        with pytest.raises(ValueError):
            estimate_proposition_bounds([0.5], [1.0], "random")
        with pytest.raises(ValueError):
            estimate_proposition_bounds([0.5], [0.5], "weird")


class TestMonteCarlo:
    def test_small_smoke_random_direction(self):
        cfg = MonteCarloConfig(n_samples=400, n_classes=6, seed=1)
        rep = monte_carlo_proposition_check(cfg, "random", 100)
        assert rep.frac_below_clean > 0.95
        assert rep.measured_mean < rep.clean_map

    def test_small_smoke_dominant_direction(self):
        cfg = MonteCarloConfig(n_samples=400, n_classes=6, seed=1)
        rep = monte_carlo_proposition_check(cfg, "dominant", 100)
        assert rep.frac_above_clean > 0.95

    def test_too_few_trials_rejected(self):
        with pytest.raises(ValueError, match="100"):
            monte_carlo_proposition_check(MonteCarloConfig(), "random", 50)


class TestMetricReport:
    def test_report_round_trips_through_json(self):
        rng = make_rng(45)
        scores, labels = random_instance(rng)
        report = compute_metric_report(np.clip(scores, 0.01, 0.99), labels)
        back = MetricReport.from_json_dict(report.to_json_dict())
        assert back.map == report.map
        assert back.coverage == report.coverage
        np.testing.assert_array_equal(
            np.isnan(back.ap_per_class), np.isnan(report.ap_per_class)
        )

    def test_report_keys_match_table_names(self):
        probs = np.array([[0.9, 0.1], [0.2, 0.8]])
        labels = np.array([[1.0, 0.0], [0.0, 1.0]])
        d = compute_metric_report(probs, labels).to_json_dict()
        for key in ("map", "coverage", "rankloss", "oa", "mf1", "mprecision", "mrecall"):
            assert key in d
