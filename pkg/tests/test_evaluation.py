from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from pcsinfer.core_data import DataMatrix
from pcsinfer.errors import BadConfig, DegenerateTruth
from pcsinfer.evaluation import (
    RocCurve,
    average_roc,
    baseline_ols_pvalues,
    evaluate_replicate,
    ols_baseline_scores,
    roc_from_scores,
    run_roc_benchmark,
)
from pcsinfer.pcs_core import PcsConfig, ScreeningRule, run_pcs
from pcsinfer.simgen import SimConfig, simulate


class TestRoc:
    def test_perfect_ranking(self):
        curve = roc_from_scores([0.9, 0.8, 0.1, 0.2], {0, 1})
        assert curve.auc == pytest.approx(1.0)
        assert curve.points[0] == (0.0, 0.0)
        assert curve.points[-1] == (1.0, 1.0)

    def test_reversed_ranking(self):
        assert roc_from_scores([0.9, 0.8, 0.1, 0.2], {2, 3}).auc == pytest.approx(0.0)

    def test_all_tied_is_the_diagonal(self):
        curve = roc_from_scores([0.5] * 6, {0, 3})
        assert curve.points == [(0.0, 0.0), (1.0, 1.0)]
        assert curve.auc == pytest.approx(0.5)

    def test_lower_is_positive(self):
        assert roc_from_scores([0.01, 0.02, 0.9, 0.8], {0, 1}, higher_is_positive=False).auc == pytest.approx(1.0)

    @pytest.mark.parametrize("truth", [set(), {0, 1, 2}, {5}])
    def test_degenerate_truth(self, truth):
        with pytest.raises(DegenerateTruth):
            roc_from_scores([0.1, 0.2, 0.3], truth)

    def test_monotone_points(self):
        rng = np.random.default_rng(0)
        curve = roc_from_scores(rng.random(30), range(0, 30, 3))
        assert np.all(np.diff(curve.fpr) >= 0)
        assert np.all(np.diff(curve.tpr) >= 0)


class TestAverageRoc:
    def test_hand_computed_average(self):
        a = RocCurve.from_points([0.0, 0.5, 1.0], [0.0, 1.0, 1.0])
        b = RocCurve.from_points([0.0, 1.0], [0.0, 1.0])
        avg = average_roc([a, b], grid=[0.0, 0.5, 1.0])
        assert avg.points == [(0.0, 0.0), (0.5, 0.75), (1.0, 1.0)]
        assert avg.auc == pytest.approx(0.625)

    def test_vertical_step_counts_at_its_top(self):
        step = RocCurve.from_points([0.0, 0.0, 1.0], [0.0, 1.0, 1.0])
        avg = average_roc([step], grid=[0.0, 0.5, 1.0])
        assert avg.points == [(0.0, 0.0), (0.0, 1.0), (0.5, 1.0), (1.0, 1.0)]

    def test_single_curve_is_resampled_unchanged(self):
        curve = roc_from_scores([0.9, 0.1, 0.7, 0.3, 0.5], {0, 2})
        avg = average_roc([curve])
        assert avg.auc == pytest.approx(curve.auc, abs=0.01)

    def test_needs_curves(self):
        with pytest.raises(BadConfig):
            average_roc([])


class TestBaseline:
    def test_unselected_features_get_one(self, signal_data):
        out = baseline_ols_pvalues(signal_data, frozenset({0, 1}))
        assert np.all(out.pvalues[2:] == 1.0)
        assert np.all(out.pvalues[:2] < 1e-6)
        np.testing.assert_array_equal(out.scores, 1.0 - out.pvalues)
        assert out.method == "ols_on_selected"

    def test_empty_selection(self, signal_data):
        assert np.all(baseline_ols_pvalues(signal_data, frozenset()).pvalues == 1.0)

    def test_exact_fit_gives_zero_pvalue(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((40, 3))
        data = DataMatrix(x, 2.0 * x[:, 0], ("a", "b", "c"))
        out = baseline_ols_pvalues(data, frozenset({0}))
        assert out.pvalues[0] < 1e-300

    def test_collinear_column_dropped_keeping_smallest_index(self):
        rng = np.random.default_rng(2)
        base = rng.standard_normal((30, 2))
        x = np.column_stack([base[:, 0], base[:, 1], base[:, 0]])
        data = DataMatrix(x, base[:, 0] + rng.standard_normal(30), ("a", "b", "a_copy"))
        out = baseline_ols_pvalues(data, frozenset({0, 2}))
        assert out.dropped == (2,)
        assert out.pvalues[2] == 1.0
        assert out.pvalues[0] < 1.0

    def test_scores_on_report_halves(self, signal_data, small_config):
        report = run_pcs(signal_data, small_config)
        scores = ols_baseline_scores(signal_data, report, small_config)
        assert scores.shape == (signal_data.p,)
        assert np.all((scores >= 0) & (scores <= 1))
        assert scores[0] > 0.99 and scores[1] > 0.99


TINY_PCS = PcsConfig(master_seed=3, bootstrap_replicates=5, nlambda=20, screening=ScreeningRule.top_k(5))


class TestBenchmark:
    def test_evaluate_replicate_methods(self, small_sim):
        curves = evaluate_replicate(small_sim.data, small_sim.truth, TINY_PCS)
        assert set(curves) == {"pcs", "ols_baseline"}
        assert all(0.0 <= c.auc <= 1.0 for c in curves.values())

    def test_unknown_method_and_positives(self, small_sim):
        with pytest.raises(BadConfig):
            evaluate_replicate(small_sim.data, small_sim.truth, TINY_PCS, methods=("lars",))
        with pytest.raises(BadConfig):
            evaluate_replicate(small_sim.data, small_sim.truth, TINY_PCS, positives="some")

    def test_positives_all_counts_removed_features(self):
        sim = simulate(SimConfig.from_setting("drop_active", n=60, p_base=5, seed=2, misspec_k=1))
        visible = evaluate_replicate(sim.data, sim.truth, TINY_PCS, ("pcs",), "visible")["pcs"]
        everything = evaluate_replicate(sim.data, sim.truth, TINY_PCS, ("pcs",), "all")["pcs"]
        assert everything.tpr[-2] < 1.0
        assert everything.auc <= visible.auc

    def test_two_replicates(self):
        sim_config = SimConfig.from_setting("gaussian", n=60, p_base=4, seed=1)
        summary = run_roc_benchmark(sim_config, TINY_PCS, replicates=2)
        assert set(summary) == {"pcs", "ols_baseline"}
        assert len(summary["pcs"].aucs) == 2
        assert summary["pcs"].to_dict()["replicates"] == 2
        assert summary["pcs"].curve.points[0] == (0.0, 0.0)
        assert summary["pcs"].curve.points[-1] == (1.0, 1.0)

    def test_single_replicate_average_matches_curve(self):
        sim_config = SimConfig.from_setting("gaussian", n=60, p_base=4, seed=1)
        summary = run_roc_benchmark(sim_config, TINY_PCS, replicates=1, methods=("pcs",))
        assert summary["pcs"].auc_sd == 0.0
        assert summary["pcs"].curve.auc == pytest.approx(summary["pcs"].aucs[0], abs=0.02)


def test_random_scores_give_chance_auc():
    rng = np.random.default_rng(20240101)
    curve = roc_from_scores(rng.random(4000), range(0, 4000, 2))
    assert curve.auc == pytest.approx(0.5, abs=0.03)


@pytest.mark.slow
def test_null_feature_pvalues_are_uniform():
    pvalues = []
    for seed in range(500):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((10_000, 5))
        y = x[:, 0] + rng.standard_normal(10_000)
        out = baseline_ols_pvalues(DataMatrix(x, y, tuple("abcde")), frozenset(range(5)))
        pvalues.extend(out.pvalues[1:])
    assert stats.kstest(pvalues, "uniform").statistic < 0.05


ACCEPTANCE_PCS = PcsConfig(master_seed=20240101, bootstrap_replicates=50, screening=ScreeningRule.top_k(10))


@pytest.mark.slow
def test_desk_scale_gaussian_benchmark():
    sim_config = SimConfig.from_setting("gaussian", n=250, p_base=10, seed=20240101)
    summary = run_roc_benchmark(sim_config, ACCEPTANCE_PCS, replicates=20, n_jobs=2)
    assert summary["pcs"].auc_mean >= 0.85
    assert summary["pcs"].auc_mean >= summary["ols_baseline"].auc_mean


@pytest.mark.slow
def test_desk_scale_drop_active_benchmark():
    sim_config = SimConfig.from_setting("drop_active", n=250, p_base=10, seed=20240101, misspec_k=3)
    summary = run_roc_benchmark(sim_config, ACCEPTANCE_PCS, replicates=20, n_jobs=2)
    assert summary["pcs"].auc_mean >= summary["ols_baseline"].auc_mean
