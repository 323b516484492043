from __future__ import annotations

import pytest

from spectral_ensemble.bench import rank_histogram, run_bench
from spectral_ensemble.config import build_config


def test_rank_histogram_counts_failed_runs_as_misses() -> None:
    rows = [(0, "ranking", "rank_of_best", 1.0), (1, "ranking", "rank_of_best", 3.0),
            (2, "ranking", "rank_of_best", 1.0), (2, "ranking", "kendall_tau", 0.4)]

    histogram = rank_histogram(rows, M=10, runs=4)

    assert histogram["failed_runs"] == 1
    assert histogram["top1_rate"] == pytest.approx(0.5)
    assert histogram["top5_rate"] == pytest.approx(0.75)
    assert histogram["probability_by_rank"] == {"1": 0.5, "3": 0.25}


def test_ensemble_preset_reports_rank_histogram() -> None:
    config = build_config("bench", {"preset": "fig2a", "M": 12, "S": 200, "pool_size": 0, "runs": 3,
                                    "pi_min": 0.6, "pi_max": 0.9, "meta": "vote,sml", "seed": 2})

    result = run_bench(config)

    histogram = result.summary["rank_of_best"]
    assert histogram["runs"] == 3
    assert histogram["failed_runs"] == len(result.failures)
    assert "top1_abs_hit" in result.summary["ranking"]


@pytest.fixture(scope="module")
def default_fig2a():
    config = build_config("bench", {"preset": "fig2a", "runs": 300, "pool_size": 10000,
                                    "meta": "vote,sml,imle-sml", "workers": 4, "seed": 0})
    return run_bench(config)


@pytest.mark.slow
def test_best_classifier_is_found_over_all_runs(default_fig2a) -> None:
    histogram = default_fig2a.summary["rank_of_best"]

    assert histogram["runs"] == 300
    assert histogram["top1_rate"] >= 0.75
    assert histogram["top5_rate"] >= 0.97


@pytest.mark.slow
def test_sml_beats_voting_and_em_keeps_the_gain(default_fig2a) -> None:
    summary = default_fig2a.summary
    vote = summary["vote"]["balanced_accuracy"]["mean"]
    sml = summary["sml"]["balanced_accuracy"]["mean"]
    refined = summary["imle-sml"]["balanced_accuracy"]["mean"]

    assert sml - vote >= 0.02
    assert refined >= sml - 0.005


@pytest.mark.slow
def test_sml_resists_a_fifth_of_the_ensemble_in_a_cartel() -> None:
    config = build_config("bench", {"preset": "fig2b", "cartel_r": 0.2, "runs": 100, "pool_size": 10000,
                                    "meta": "vote,sml,imle-sml,imle-vote", "workers": 4, "seed": 1})

    result = run_bench(config)

    vote = result.summary["vote"]["balanced_accuracy"]["mean"]
    sml = result.summary["sml"]["balanced_accuracy"]["mean"]
    assert result.summary["rank_of_best"]["failed_runs"] == 0
    assert sml >= 0.95
    assert sml - vote >= 0.05
    refined = result.summary["imle-sml"]["balanced_accuracy"]["mean"]
    assert refined >= result.summary["imle-vote"]["balanced_accuracy"]["mean"] - 0.005
