"""Monte-Carlo presets for the simulation studies.

Every preset yields long-form rows ``(run, method, metric, value)`` and a
summary. Stochastic presets give each run its own generator spawned from the
root seed, run in a thread pool, and are aggregated in run order, so the
output depends only on the configuration.
"""
from __future__ import annotations

import logging
import sys
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from tqdm import tqdm

from .errors import SpectralEnsembleError
from .evaluation import (brute_force_sensitivities, hoeffding_gap_bound,
                         lemma_voting_sml_sensitivities, monte_carlo_summary, ranking_quality)
from .generators import SimulatedEnsemble, simulate_ensemble, spectrum_angles, split_ensemble
from .meta import EmState, combine
from .model import CartelBlock, balanced_accuracy
from .recovery import RecoveryMethod, rank_classifiers
from .structure import ExperimentConfig

logger = logging.getLogger(__name__)

CARTEL_SWEEP = tuple(round(0.05 * i, 2) for i in range(10))
HEATMAP_K1 = np.linspace(-1.0, 1.0, 41)
HEATMAP_K2 = np.linspace(0.1, 4.0, 40)
SMALL_ANGLE_DEG = 6.0
LEMMA_GRID = np.round(np.linspace(0.0, 1.0, 101), 2)

Row = tuple[int, str, str, float]


@dataclass
class BenchResult:
    preset: str
    rows: list[Row]
    summary: dict
    runs_requested: int
    failures: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def draw_ensemble(config: ExperimentConfig, rng: np.random.Generator, cartel_r: float) -> SimulatedEnsemble:
    honest, cartel_size = split_ensemble(config.M, cartel_r)
    pis = rng.uniform(config.pi_min, config.pi_max, size=honest)
    cartel = CartelBlock(config.pi_c, (config.xi,) * cartel_size) if cartel_size else None
    return simulate_ensemble(config.S, config.b, pis, rng, cartel=cartel, pool_size=config.pool_size)


def _ensemble_run(config: ExperimentConfig, rng: np.random.Generator, cartel_r: float) -> tuple[list, list]:
    """Ranking quality and meta-learner accuracies for one simulated ensemble."""
    sim = draw_ensemble(config, rng, cartel_r)
    tie_seed = int(rng.integers(2**31))
    accuracies = np.array([p.pi for p in sim.performances])
    estimate = rank_classifiers(sim.predictions, config.method, factor=config.factor, theta=config.theta,
                                sign_rule=config.sign_rule)
    quality = ranking_quality(accuracies, estimate.ranking, estimate.v_hat)
    rows = [
        ("setting", "cartel_fraction", cartel_r),
        ("ranking", "rank_of_best", quality.rank_of_best),
        ("ranking", "top1_hit", float(quality.top_k_hit[1])),
        ("ranking", "top5_hit", float(quality.top_k_hit[5])),
        ("ranking", "top1_abs_hit", float(quality.magnitude_hit)),
        ("ranking", "kendall_tau", quality.kendall_tau),
        ("ranking", "unidentified", float(len(estimate.unidentified))),
        ("best_inferred", "balanced_accuracy", float(accuracies[estimate.ranking[0]])),
        ("median_member", "balanced_accuracy", float(np.median(accuracies))),
    ]
    outcomes = combine(sim.predictions, config.meta, v_hat=estimate.v_hat, performances=sim.performances,
                       seed=tie_seed, clamp=config.clamp, max_iter=config.max_iter)
    warnings = list(estimate.warnings)
    for name, outcome in outcomes.items():
        rows.append((name, "balanced_accuracy", balanced_accuracy(outcome.labels.labels, sim.truth)))
        if isinstance(outcome, EmState):
            rows.append((name, "iterations", outcome.iteration))
            rows.append((name, "log_likelihood", outcome.log_likelihood))
            warnings += outcome.warnings
    return rows, warnings


def _method_comparison_run(config: ExperimentConfig, rng: np.random.Generator, cartel_r: float) -> tuple[list, list]:
    """Kendall tau between the true accuracies and v_hat, for every recovery method."""
    sim = draw_ensemble(config, rng, cartel_r)
    accuracies = np.array([p.pi for p in sim.performances])
    rows, warnings = [], []
    for method in RecoveryMethod:
        estimate = rank_classifiers(sim.predictions, method, factor=config.factor, theta=config.theta,
                                    sign_rule=config.sign_rule)
        quality = ranking_quality(accuracies, estimate.ranking, estimate.v_hat)
        rows.append((method.value, "kendall_tau", quality.kendall_tau))
        rows.append((method.value, "rank_of_best", quality.rank_of_best))
        warnings += estimate.warnings
    return rows, warnings


def run_parallel(config: ExperimentConfig, task: Callable, settings: list[float]) -> BenchResult:
    """Run ``task(config, rng, setting)`` once per entry of ``settings`` across a thread pool."""
    children = np.random.SeedSequence(config.seed).spawn(len(settings))
    results: list = [None] * len(settings)
    failures = []
    with ThreadPoolExecutor(max_workers=config.workers) as executor:
        future_to_idx = {
            executor.submit(task, config, np.random.default_rng(child), setting): idx
            for idx, (child, setting) in enumerate(zip(children, settings))
        }
        for future in tqdm(as_completed(future_to_idx), total=len(settings), desc=f"bench {config.preset}",
                           file=sys.stderr):
            idx = future_to_idx[future]
            try:
                results[idx] = future.result()
            except (SpectralEnsembleError, ValueError, np.linalg.LinAlgError) as e:
                logger.warning("run %d failed: %s: %s", idx, type(e).__name__, e)
                failures.append({"run": idx, "error": f"{type(e).__name__}: {e}"})
    rows: list[Row] = []
    warnings: set[str] = set()
    for idx, result in enumerate(results):
        if result is None:
            continue
        run_rows, run_warnings = result
        rows += [(idx, method, metric, float(value)) for method, metric, value in run_rows]
        warnings.update(run_warnings)
    failures.sort(key=lambda failure: failure["run"])
    return BenchResult(config.preset, rows, {}, len(settings), failures, sorted(warnings))


def summarize_rows(rows: list[Row], skip_methods: tuple[str, ...] = ("setting",)) -> dict:
    grouped: dict[str, dict[str, list[float]]] = {}
    for _, method, metric, value in rows:
        if method in skip_methods:
            continue
        grouped.setdefault(method, {}).setdefault(metric, []).append(value)
    return {method: {metric: asdict(monte_carlo_summary(values)) for metric, values in metrics.items()}
            for method, metrics in grouped.items()}


def rank_histogram(rows: list[Row], M: int, runs: int) -> dict:
    """Where the truly best classifier lands, as a fraction of all ``runs``; failed runs count as misses."""
    ranks = [int(value) for _, method, metric, value in rows if method == "ranking" and metric == "rank_of_best"]
    if runs < 1:
        return {}
    counts = np.bincount(ranks, minlength=M + 1)[1:M + 1]
    return {
        "runs": runs,
        "failed_runs": runs - len(ranks),
        "probability_by_rank": {str(rank + 1): float(count / runs) for rank, count in enumerate(counts) if count},
        "top1_rate": float(counts[:1].sum() / runs),
        "top5_rate": float(counts[:5].sum() / runs),
    }


def heatmap(config: ExperimentConfig) -> BenchResult:
    """|alpha| over a (k1, k2) grid, from the block spectrum with unit honest mass."""
    rows: list[Row] = []
    small = 0
    for idx, (k1, k2) in enumerate((k1, k2) for k1 in HEATMAP_K1 for k2 in HEATMAP_K2):
        alpha, beta, lam1, lam2 = spectrum_angles(float(k1), float(k2))
        alpha_deg = float(np.degrees(alpha))
        small += abs(alpha_deg) <= SMALL_ANGLE_DEG
        rows += [(idx, "spectrum", "k1", float(k1)), (idx, "spectrum", "k2", float(k2)),
                 (idx, "spectrum", "alpha_deg", alpha_deg), (idx, "spectrum", "abs_alpha_deg", abs(alpha_deg)),
                 (idx, "spectrum", "beta_deg", float(np.degrees(beta))),
                 (idx, "spectrum", "lambda1", lam1), (idx, "spectrum", "lambda2", lam2)]
    cells = len(HEATMAP_K1) * len(HEATMAP_K2)
    summary = {"grid_cells": cells, "small_angle_deg": SMALL_ANGLE_DEG, "small_angle_fraction": small / cells}
    return BenchResult("figS1", rows, summary, 0)


def lemma_curve(config: ExperimentConfig) -> BenchResult:
    """Voting and SML sensitivities as the first classifier's sensitivity sweeps [0, 1]."""
    M, psi = config.lemma_m, config.psi
    rows: list[Row] = []
    gaps_vote, gaps_block = [], []
    for idx, psi1 in enumerate(LEMMA_GRID):
        vote, sml = lemma_voting_sml_sensitivities(M, psi, float(psi1), config.convention)
        gaps_vote.append(sml - vote)
        gaps_block.append(sml - psi)
        rows += [(idx, "setting", "psi1", float(psi1)), (idx, "vote", "sensitivity", vote),
                 (idx, "sml", "sensitivity", sml)]
    _, sml_at_one = lemma_voting_sml_sensitivities(M, psi, 1.0, config.convention)
    summary = {
        "M": M, "psi": psi, "convention": config.convention,
        "min_sml_minus_vote": float(min(gaps_vote)),
        "min_sml_minus_psi": float(min(gaps_block)),
        "gap_at_psi1_one": 1.0 - sml_at_one,
        "hoeffding_bound": hoeffding_gap_bound(M, psi),
    }
    if M <= 11:
        vote_bf, sml_bf = brute_force_sensitivities(M, psi, 0.5)
        summary["brute_force_at_half"] = {"vote": vote_bf, "sml": sml_bf}
    return BenchResult("lemma", rows, summary, 0)


def run_bench(config: ExperimentConfig) -> BenchResult:
    preset = config.preset
    if preset == "figS1":
        return heatmap(config)
    if preset == "lemma":
        return lemma_curve(config)
    if preset == "figS6":
        settings = [r for r in CARTEL_SWEEP for _ in range(config.runs)]
        result = run_parallel(config, _ensemble_run, settings)
        by_fraction = {}
        for r in CARTEL_SWEEP:
            runs = {run for run, method, metric, value in result.rows
                    if method == "setting" and metric == "cartel_fraction" and value == r}
            picked = [row for row in result.rows if row[0] in runs]
            by_fraction[f"{r:.2f}"] = {"rank_of_best": rank_histogram(picked, config.M, config.runs),
                                       **(summarize_rows(picked) if picked else {})}
        result.summary = {"by_cartel_fraction": by_fraction}
        return result
    task = _method_comparison_run if preset == "figS3" else _ensemble_run
    result = run_parallel(config, task, [config.cartel_r] * config.runs)
    result.summary = summarize_rows(result.rows) if result.rows else {}
    if task is _ensemble_run:
        result.summary = {"rank_of_best": rank_histogram(result.rows, config.M, config.runs), **result.summary}
    return result
