"""Meta-learners: majority vote, SML, fixed-weight MLE and the EM-refined iMLE."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from . import errors
from .errors import GuardExceeded
from .model import ClassifierPerformance, LabelVector, PredictionMatrix

logger = logging.getLogger(__name__)

DEFAULT_CLAMP = 1e-3
ENUMERATION_GUARD = 12
META_METHODS = ("vote", "sml", "mle", "imle-sml", "imle-vote")

TieRule = Literal["coin", "positive"]


@dataclass(frozen=True)
class MetaPrediction:
    labels: LabelVector
    method: str
    weights: np.ndarray | None = None
    tie_count: int = 0
    rng_seed: int | None = None


@dataclass(frozen=True)
class EmState:
    labels: LabelVector
    performances: tuple[ClassifierPerformance, ...]
    iteration: int
    log_likelihood: float
    converged: bool
    history: tuple[float, ...] = ()
    warnings: tuple[str, ...] = ()


def _resolve_signs(scores: np.ndarray, scale: float, tie: TieRule, seed: int | None) -> tuple[np.ndarray, int]:
    """sign(scores) with zeros (relative to ``scale``) broken by ``tie``.

    The coin draws one flip per instance, used or not, so every rule sharing a
    seed resolves a given tied instance the same way.
    """
    ties = np.abs(scores) <= 1e-12 * max(scale, 1.0)
    labels = np.where(scores > 0, 1, -1).astype(np.int8)
    if tie == "coin":
        flips = np.random.default_rng(seed).integers(0, 2, size=scores.shape[0]) * 2 - 1
        labels[ties] = flips[ties]
    else:
        labels[ties] = 1
    return labels, int(ties.sum())


def weighted_vote(P: PredictionMatrix, weights, bias: float = 0.0, *, seed: int | None = 0,
                  tie: TieRule = "coin", method: str = "weighted") -> MetaPrediction:
    w = np.asarray(weights, dtype=float)
    if w.shape != (P.classifier_count,):
        raise ValueError(f"expected {P.classifier_count} weights, got shape {w.shape}")
    scores = P.entries @ w + bias
    labels, tie_count = _resolve_signs(scores, float(np.abs(w).sum() + abs(bias)), tie, seed)
    if tie_count:
        logger.debug("%s: %d tied instances resolved by %s rule", method, tie_count, tie)
    return MetaPrediction(LabelVector(labels), method, w, tie_count, seed if tie == "coin" else None)


def majority_vote(P: PredictionMatrix, seed: int | None = 0) -> MetaPrediction:
    return weighted_vote(P, np.ones(P.classifier_count), seed=seed, method="vote")


def sml_predict(P: PredictionMatrix, v_hat, seed: int | None = 0) -> MetaPrediction:
    """Spectral Meta-Learner: sign of the eigenvector-weighted vote."""
    return weighted_vote(P, v_hat, seed=seed, method="sml")


def mle_weights(perfs: Sequence[ClassifierPerformance], clamp: float = DEFAULT_CLAMP) -> tuple[np.ndarray, np.ndarray]:
    """log alpha_i and log beta_i of the linear MLE rule, after clamping psi, eta into [clamp, 1-clamp]."""
    psi = np.clip([p.psi for p in perfs], clamp, 1 - clamp)
    eta = np.clip([p.eta for p in perfs], clamp, 1 - clamp)
    log_alpha = np.log(psi) + np.log(eta) - np.log1p(-psi) - np.log1p(-eta)
    log_beta = np.log(psi) + np.log1p(-psi) - np.log(eta) - np.log1p(-eta)
    return log_alpha, log_beta


def mle_predict(P: PredictionMatrix, log_alpha, log_beta, seed: int | None = 0,
                tie: TieRule = "coin") -> MetaPrediction:
    """sign(sum_i f_i log alpha_i + sum_i log beta_i)."""
    log_beta = np.asarray(log_beta, dtype=float)
    return weighted_vote(P, log_alpha, float(log_beta.sum()), seed=seed, tie=tie, method="mle")


def exact_mle_enumeration(P: PredictionMatrix, perfs: Sequence[ClassifierPerformance]) -> LabelVector:
    """Per-instance argmax of the two class likelihoods by direct products; ties go to +1."""
    M = P.classifier_count
    if M > ENUMERATION_GUARD:
        raise GuardExceeded(f"direct likelihood products are limited to {ENUMERATION_GUARD} classifiers, got {M}")
    if len(perfs) != M:
        raise ValueError(f"expected {M} performances, got {len(perfs)}")
    psi = np.array([p.psi for p in perfs])
    eta = np.array([p.eta for p in perfs])
    positive = P.entries == 1
    like_pos = np.prod(np.where(positive, psi, 1 - psi), axis=1)
    like_neg = np.prod(np.where(positive, 1 - eta, eta), axis=1)
    return LabelVector(np.where(like_pos >= like_neg, 1, -1))


def classification_log_likelihood(P: PredictionMatrix, labels: LabelVector,
                                  perfs: Sequence[ClassifierPerformance]) -> float:
    """sum_k sum_i log Pr(f_i(x_k) | y_k) for hard labels y."""
    psi = np.array([p.psi for p in perfs])
    eta = np.array([p.eta for p in perfs])
    positive = P.entries == 1
    y_pos = (labels.labels == 1)[:, None]
    prob = np.where(y_pos, np.where(positive, psi, 1 - psi), np.where(positive, 1 - eta, eta))
    return float(np.log(prob).sum())


def _estimate_performances(P: PredictionMatrix, labels: np.ndarray, previous: tuple[ClassifierPerformance, ...] | None,
                           clamp: float) -> tuple[tuple[ClassifierPerformance, ...], bool]:
    pos = labels == 1
    neg = ~pos
    P_count, N_count = int(pos.sum()), int(neg.sum())
    X = P.entries
    M = P.classifier_count
    prev_psi = np.array([p.psi for p in previous]) if previous else np.full(M, 0.5)
    prev_eta = np.array([p.eta for p in previous]) if previous else np.full(M, 0.5)
    psi = (X[pos] == 1).sum(axis=0) / P_count if P_count else prev_psi
    eta = (X[neg] == -1).sum(axis=0) / N_count if N_count else prev_eta
    perfs = tuple(ClassifierPerformance(float(np.clip(s, clamp, 1 - clamp)), float(np.clip(e, clamp, 1 - clamp)),
                                        "empirical") for s, e in zip(psi, eta))
    return perfs, P_count == 0 or N_count == 0


def imle(P: PredictionMatrix, init: MetaPrediction | LabelVector, clamp: float = DEFAULT_CLAMP,
         max_iter: int = 100) -> EmState:
    """Hard-label EM for the joint maximum-likelihood labels and classifier parameters.

    Each iteration re-estimates (psi, eta) against the current labels (clamped)
    and relabels with the linear MLE rule, ties toward +1. Stops at a label
    fixed point or after ``max_iter`` iterations. When the labels collapse to
    one class, the undefined parameter keeps its previous estimate and the
    state is flagged DegenerateLabels.
    """
    labels = (init.labels if isinstance(init, MetaPrediction) else init).labels
    if labels.shape != (P.instance_count,):
        raise ValueError(f"initial labels of length {labels.shape} for {P.instance_count} instances")
    perfs: tuple[ClassifierPerformance, ...] | None = None
    history: list[float] = []
    warnings: list[str] = []
    converged = False
    log_likelihood = float("-inf")
    iteration = 0
    for iteration in range(1, max_iter + 1):
        perfs, degenerate = _estimate_performances(P, labels, perfs, clamp)
        if degenerate and errors.DEGENERATE_LABELS not in warnings:
            warnings.append(errors.DEGENERATE_LABELS)
            logger.warning("EM labels collapsed to one class at iteration %d", iteration)
        log_alpha, log_beta = mle_weights(perfs, clamp)
        new_labels = mle_predict(P, log_alpha, log_beta, tie="positive").labels.labels
        log_likelihood = classification_log_likelihood(P, LabelVector(new_labels), perfs)
        history.append(log_likelihood)
        logger.debug("EM iteration %d: log-likelihood %.6f, %d labels changed", iteration, log_likelihood,
                     int(np.count_nonzero(new_labels != labels)))
        if np.array_equal(new_labels, labels):
            converged = True
            break
        labels = new_labels
    if not converged:
        logger.warning("EM stopped at max_iter=%d without reaching a label fixed point", max_iter)
    return EmState(LabelVector(new_labels), perfs, iteration, log_likelihood, converged, tuple(history),
                   tuple(warnings))


def combine(P: PredictionMatrix, methods: Sequence[str], *, v_hat=None,
            performances: Sequence[ClassifierPerformance] | None = None, seed: int | None = 0,
            clamp: float = DEFAULT_CLAMP, max_iter: int = 100) -> dict[str, MetaPrediction | EmState]:
    """Run the requested meta-learners; iMLE variants start from the vote or SML labels.

    "sml" and "imle-sml" need ``v_hat``; "mle" needs known ``performances``.
    """
    unknown = [m for m in methods if m not in META_METHODS]
    if unknown:
        raise ValueError(f"unknown meta-learners {unknown}")
    needs_sml = any(m in ("sml", "imle-sml") for m in methods)
    if needs_sml and v_hat is None:
        raise ValueError("SML needs the leading eigenvector v_hat")
    if "mle" in methods and performances is None:
        raise ValueError("the fixed-weight MLE needs known classifier performances")
    vote = majority_vote(P, seed) if any(m in ("vote", "imle-vote") for m in methods) else None
    sml = sml_predict(P, v_hat, seed) if needs_sml else None
    out: dict[str, MetaPrediction | EmState] = {}
    for method in methods:
        if method == "vote":
            out[method] = vote
        elif method == "sml":
            out[method] = sml
        elif method == "mle":
            out[method] = mle_predict(P, *mle_weights(performances, clamp), seed=seed)
        elif method == "imle-sml":
            out[method] = imle(P, sml, clamp, max_iter)
        else:
            out[method] = imle(P, vote, clamp, max_iter)
    return out
