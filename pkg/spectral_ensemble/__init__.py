"""Unsupervised ranking and combination of binary classifiers from their predictions alone."""
from .covariance import CovarianceSummary, entry_variance, sample_covariance, significance_mask, summarize
from .errors import SpectralEnsembleError
from .evaluation import (RankingQuality, binomial_cdf, eigen_alignment, kendall_tau, lemma_voting_sml_sensitivities,
                         monte_carlo_summary)
from .generators import (RankTwoSpectrum, cartel_ensemble, generate_truth, independent_ensemble,
                         population_covariance, rank_two_spectrum, rdfba, simulate_ensemble)
from .meta import (EmState, MetaPrediction, exact_mle_enumeration, imle, majority_vote, mle_predict, mle_weights,
                   sml_predict)
from .model import (CartelBlock, ClassifierPerformance, EnsembleSpec, LabelVector, PredictionMatrix,
                    balanced_accuracy, class_imbalance, confusion_stats)
from .recovery import (DiagonalFit, RankOneEstimate, RecoveryMethod, fit_diagonal_linear, fit_diagonal_weighted,
                       leading_eigenpair, rank_classifiers, recover_trace_relaxation, resolve_sign_and_rank)

__version__ = "0.1.0"

__all__ = [
    "CartelBlock", "ClassifierPerformance", "CovarianceSummary", "DiagonalFit", "EmState", "EnsembleSpec",
    "LabelVector", "MetaPrediction", "PredictionMatrix", "RankOneEstimate", "RankTwoSpectrum", "RankingQuality",
    "RecoveryMethod", "SpectralEnsembleError",
    "balanced_accuracy", "binomial_cdf", "cartel_ensemble", "class_imbalance", "confusion_stats", "eigen_alignment",
    "entry_variance", "exact_mle_enumeration", "fit_diagonal_linear", "fit_diagonal_weighted", "generate_truth",
    "imle", "independent_ensemble", "kendall_tau", "leading_eigenpair", "lemma_voting_sml_sensitivities",
    "majority_vote", "mle_predict", "mle_weights", "monte_carlo_summary", "population_covariance",
    "rank_classifiers", "rank_two_spectrum", "rdfba", "recover_trace_relaxation", "resolve_sign_and_rank",
    "sample_covariance", "significance_mask", "simulate_ensemble", "sml_predict", "summarize",
]
