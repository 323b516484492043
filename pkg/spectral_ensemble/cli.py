"""Command-line entry point.

Exit codes:
    0: success (bench counts failed runs in its summary and still exits 0)
    1: invalid input, infeasible parameters or invalid configuration
    2: processing error
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from . import config as config_mod
from . import errors, io
from .bench import run_bench as bench_presets
from .covariance import summarize
from .errors import (DisconnectedClassifier, EmptyInput, InfeasibleImbalance, InfeasibleTarget, InvalidConfig,
                     InvalidPredictionMatrix, ParseError, SingularSystem, SpectralEnsembleError)
from .evaluation import conditional_independence_deviation
from .generators import DEFAULT_POOL_SIZE, make_rng, simulate_ensemble, split_ensemble
from .meta import EmState, combine
from .model import CartelBlock, balanced_accuracy, confusion_stats
from .recovery import RecoveryMethod, rank_from_summary
from .structure import ExperimentConfig, Report

logger = logging.getLogger(__name__)

INPUT_ERRORS = (ParseError, InvalidConfig, InfeasibleTarget, InfeasibleImbalance, InvalidPredictionMatrix,
                EmptyInput, FileNotFoundError)


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse command-line arguments.

    Every option defaults to None so that only flags given on the command line
    override the config file.
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="flat key = value config file")
    common.add_argument("--seed", type=int, help="root seed")
    common.add_argument("--out-dir", dest="out_dir", type=str, help="output directory")
    common.add_argument("--out", type=str, help="report path")
    common.add_argument("--log-level", dest="log_level", type=str, help="DEBUG, INFO, WARNING or ERROR")

    recovery = argparse.ArgumentParser(add_help=False)
    recovery.add_argument("--method", type=str, help="linear, weighted, trace or eigen")
    recovery.add_argument("--factor", type=float, help="significance threshold in standard errors")
    recovery.add_argument("--theta", type=float, help="trace relaxation penalty")
    recovery.add_argument("--sign-rule", dest="sign_rule", type=str, help="sum or majority")

    meta = argparse.ArgumentParser(add_help=False)
    meta.add_argument("--meta", type=str, help="comma-separated subset of vote,sml,mle,imle-sml,imle-vote")
    meta.add_argument("--clamp", type=float, help="psi/eta clamp for MLE weights")
    meta.add_argument("--max-iter", dest="max_iter", type=int, help="EM iteration cap")

    ensemble = argparse.ArgumentParser(add_help=False)
    ensemble.add_argument("--M", type=int, help="number of classifiers")
    ensemble.add_argument("--S", type=int, help="number of test instances")
    ensemble.add_argument("--b", type=float, help="class imbalance")
    ensemble.add_argument("--pi-min", dest="pi_min", type=float, help="lowest honest balanced accuracy")
    ensemble.add_argument("--pi-max", dest="pi_max", type=float, help="highest honest balanced accuracy")
    ensemble.add_argument("--cartel-r", dest="cartel_r", type=float, help="cartel fraction")
    ensemble.add_argument("--pi-c", dest="pi_c", type=float, help="cartel target balanced accuracy")
    ensemble.add_argument("--xi", type=float, help="members' balanced accuracy w.r.t. the target")
    ensemble.add_argument("--pool-size", dest="pool_size", type=int,
                          help=f"RDFBA pool size (default {DEFAULT_POOL_SIZE}; 0 builds on the test set)")

    parser = argparse.ArgumentParser(prog="spectral-ensemble",
                                     description="Rank and combine binary classifiers without labels")
    sub = parser.add_subparsers(dest="mode", required=True)

    rank = sub.add_parser("rank", parents=[common, recovery], help="rank classifiers by the leading eigenvector")
    rank.add_argument("--input", type=str, help="prediction CSV")

    predict = sub.add_parser("predict", parents=[common, recovery, meta], help="combine predictions")
    predict.add_argument("--input", type=str, help="prediction CSV")
    predict.add_argument("--labels", type=str, help="truth CSV for scoring")

    sub.add_parser("simulate", parents=[common, ensemble], help="generate a synthetic ensemble")

    bench = sub.add_parser("bench", parents=[common, recovery, meta, ensemble], help="run a simulation preset")
    bench.add_argument("--preset", type=str, help="fig2a, fig2b, figS2, figS3, figS6, figS1 or lemma")
    bench.add_argument("--runs", type=int, help="runs per setting")
    bench.add_argument("--workers", type=int, help="parallel workers")
    bench.add_argument("--lemma-m", dest="lemma_m", type=int, help="ensemble size of the lemma sweep")
    bench.add_argument("--psi", type=float, help="homogeneous sensitivity of the lemma sweep")
    bench.add_argument("--convention", type=str, help="tie convention of the lemma sweep")
    return parser.parse_args(argv)


def _report_path(config: ExperimentConfig, default_name: str) -> str:
    return config.out or os.path.join(config.out_dir, default_name)


def _dump(config: ExperimentConfig) -> dict:
    return config.model_dump(mode="json")


def run_rank(config: ExperimentConfig) -> Report:
    P = io.load_predictions(config.input)
    summary = summarize(P, config.factor)
    estimate = rank_from_summary(summary, config.method, factor=config.factor, theta=config.theta,
                                 sign_rule=config.sign_rule)
    names = P.names()
    M = P.classifier_count
    position = {int(idx): rank for rank, idx in enumerate(estimate.ranking, start=1)}
    results = {
        "method": estimate.method.value,
        "lambda_hat": float(estimate.lambda_hat),
        "ranking": [names[int(i)] for i in estimate.ranking],
        "classifiers": [{"index": i + 1, "name": names[i], "v_hat": float(estimate.v_hat[i]), "rank": position[i]}
                        for i in range(M)],
        "mask": {"significant_pairs": len(estimate.summary.masked_pairs()), "total_pairs": M * (M - 1) // 2,
                 "factor": config.factor},
        "low_confidence": [names[i] for i in estimate.low_confidence],
        "unidentified": [names[i] for i in estimate.unidentified],
        "iterations": estimate.iterations,
    }
    if estimate.diagonal_fit is not None:
        results["diagonal_fit"] = {"residual": float(estimate.diagonal_fit.residual),
                                   "equations_used": estimate.diagonal_fit.equations_used}
    report = Report(config=_dump(config), seed=config.seed, results=results, warnings=list(estimate.warnings))
    io.write_report(report, _report_path(config, "rank_report.json"))
    return report


def run_predict(config: ExperimentConfig) -> Report:
    P = io.load_predictions(config.input)
    truth = io.load_labels(config.labels) if config.labels else None
    if truth is not None and len(truth) != P.instance_count:
        raise InvalidConfig(f"{len(truth)} labels for {P.instance_count} instances")
    if "mle" in config.meta and truth is None:
        raise InvalidConfig("the fixed-weight MLE needs --labels to measure classifier performances")
    warnings: list[str] = []
    v_hat = None
    if any(m in ("sml", "imle-sml") for m in config.meta):
        summary = summarize(P, config.factor)
        try:
            estimate = rank_from_summary(summary, config.method, factor=config.factor, theta=config.theta,
                                         sign_rule=config.sign_rule)
        except (DisconnectedClassifier, SingularSystem) as e:
            logger.warning("%s recovery failed (%s); weighting SML by the eigenvector of Q itself", config.method, e)
            warnings.append(errors.EIGEN_FALLBACK)
            estimate = rank_from_summary(summary, RecoveryMethod.EIGEN, sign_rule=config.sign_rule)
        v_hat = estimate.v_hat
        warnings += estimate.warnings
    performances = None
    if truth is not None:
        performances = [confusion_stats(P.column(i), truth) for i in range(P.classifier_count)]
    outcomes = combine(P, config.meta, v_hat=v_hat, performances=performances, seed=config.seed,
                       clamp=config.clamp, max_iter=config.max_iter)
    methods = {}
    for name, outcome in outcomes.items():
        entry = {"positives": outcome.labels.positives, "negatives": outcome.labels.negatives}
        if isinstance(outcome, EmState):
            entry.update(iterations=outcome.iteration, converged=outcome.converged,
                         log_likelihood=outcome.log_likelihood)
            warnings += outcome.warnings
        else:
            entry["tie_count"] = outcome.tie_count
        if truth is not None:
            entry["balanced_accuracy"] = balanced_accuracy(outcome.labels.labels, truth)
        methods[name] = entry
    results: dict = {"methods": methods}
    if truth is not None:
        results["classifiers"] = [{"name": name, "psi": perf.psi, "eta": perf.eta, "balanced_accuracy": perf.pi}
                                  for name, perf in zip(P.names(), performances)]
        results["conditional_independence_deviation"] = conditional_independence_deviation(P, truth)
    labels_path = os.path.join(config.out_dir, "predicted_labels.csv")
    io.write_label_columns({name: outcome.labels for name, outcome in outcomes.items()}, labels_path)
    results["labels_file"] = labels_path
    report = Report(config=_dump(config), seed=config.seed, results=results,
                    warnings=sorted(set(warnings)))
    io.write_report(report, _report_path(config, "predict_report.json"))
    return report


def run_simulate(config: ExperimentConfig) -> Report:
    rng = make_rng(config.seed)
    honest, cartel_size = split_ensemble(config.M, config.cartel_r)
    pis = rng.uniform(config.pi_min, config.pi_max, size=honest)
    cartel = CartelBlock(config.pi_c, (config.xi,) * cartel_size) if cartel_size else None
    sim = simulate_ensemble(config.S, config.b, pis, rng, cartel=cartel, pool_size=config.pool_size)
    io.write_predictions(sim.predictions, os.path.join(config.out_dir, "predictions.csv"))
    io.write_labels(sim.truth, os.path.join(config.out_dir, "truth.csv"))
    names = sim.predictions.names()
    classifiers = [{"name": names[i], "role": "honest" if i < sim.honest_count else "cartel",
                    "requested_pi": sim.requested[i], "psi": perf.psi, "eta": perf.eta, "pi": perf.pi}
                   for i, perf in enumerate(sim.performances)]
    results: dict = {
        "instances": sim.truth.labels.shape[0],
        "positives": sim.truth.positives,
        "negatives": sim.truth.negatives,
        "pool_size": sim.pool_size,
        "classifiers": classifiers,
        "conditional_independence_deviation": conditional_independence_deviation(sim.predictions, sim.truth),
    }
    if sim.spec.cartel is not None:
        target = sim.spec.cartel.target_performance()
        results["cartel"] = {
            "target": {"psi": target.psi, "eta": target.eta, "pi": target.pi},
            "members": [{"name": names[sim.honest_count + j], "p": m.psi, "n": m.eta, "xi": m.pi}
                        for j, m in enumerate(sim.spec.cartel.member_performances)],
        }
    report = Report(config=_dump(config), seed=config.seed, results=results)
    io.write_report(report, _report_path(config, "spec.json"))
    return report


def run_bench(config: ExperimentConfig) -> Report:
    result = bench_presets(config)
    csv_path = os.path.join(config.out_dir, f"bench_{result.preset}.csv")
    io.write_long_csv(result.rows, csv_path)
    if result.failures:
        print(f"⚠️  {len(result.failures)} of {result.runs_requested} runs failed", file=sys.stderr)
    results = {"preset": result.preset, "runs_requested": result.runs_requested,
               "failed_runs": len(result.failures), "failures": result.failures,
               "summary": result.summary, "results_file": csv_path}
    report = Report(config=_dump(config), seed=config.seed, results=results, warnings=result.warnings)
    io.write_report(report, _report_path(config, f"bench_{result.preset}_summary.json"))
    return report


RUNNERS = {"rank": run_rank, "predict": run_predict, "simulate": run_simulate, "bench": run_bench}


def main(argv: list[str] | None = None) -> int:
    config_mod.load_env()
    args = parse_args(argv)
    level = (args.log_level or config_mod.default_log_level()).upper()
    # logging.getLevelNamesMapping() is 3.11+; _nameToLevel is the same mapping on 3.10.
    level_names = getattr(logging, "getLevelNamesMapping", lambda: dict(logging._nameToLevel))()
    if level not in level_names:
        print(f"❌ InvalidConfig: unknown log level {level!r}", file=sys.stderr)
        return 1
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s")
    explicit = {key: value for key, value in vars(args).items() if key not in ("mode", "config", "log_level")}
    try:
        config = config_mod.build_config(args.mode, explicit, args.config)
        RUNNERS[config.mode](config)
    except INPUT_ERRORS as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except SpectralEnsembleError as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
