"""Scoring and analytic oracles."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy import special, stats

from .errors import EmptyInput, InvalidHomogeneousAccuracy
from .model import LabelVector, PredictionMatrix
from .recovery import leading_eigenpair

logger = logging.getLogger(__name__)

TieConvention = Literal["left", "right", "coin"]
_INTEGER_SNAP = 1e-9


@dataclass(frozen=True)
class RankingQuality:
    kendall_tau: float
    rank_of_best: int
    top_k_hit: dict[int, bool] = field(default_factory=dict)
    magnitude_hit: bool = False


def kendall_tau(a, b) -> float:
    """Kendall tau-a: (concordant - discordant) / (n(n-1)/2); tied pairs count as neither."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"kendall_tau needs two 1-D vectors of equal length, got {a.shape} and {b.shape}")
    n = a.shape[0]
    if n < 2:
        raise ValueError("kendall_tau needs at least 2 entries")
    da = np.sign(a[:, None] - a[None, :])
    db = np.sign(b[:, None] - b[None, :])
    return float((da * db).sum() / (n * (n - 1)))


def ranking_quality(true_accuracies, ranking: Sequence[int], v_hat, ks: Sequence[int] = (1, 5)) -> RankingQuality:
    """Compare an inferred ranking (0-based classifier indices, best first) to known accuracies.

    ``ranking`` sorts the sign-resolved v_hat, so a classifier far below 1/2
    ranks last rather than first. ``magnitude_hit`` says whether the truly
    best classifier also holds the largest |v_hat| entry.
    """
    truth = np.asarray(true_accuracies, dtype=float)
    order = [int(i) for i in ranking]
    best = int(np.argmax(truth))
    rank_of_best = order.index(best) + 1
    magnitude_hit = int(np.argmax(np.abs(np.asarray(v_hat, dtype=float)))) == best
    return RankingQuality(kendall_tau(truth, v_hat), rank_of_best, {k: rank_of_best <= k for k in ks},
                          magnitude_hit)


def binomial_cdf(k: float, n: int, p: float) -> float:
    """F(k; n, p) = sum_{i=0}^{floor k} C(n, i) p^i (1-p)^(n-i), summed in log space."""
    if n < 0 or not 0.0 <= p <= 1.0:
        raise ValueError(f"binomial_cdf needs n >= 0 and p in [0, 1], got n={n}, p={p}")
    nearest = round(k)
    if abs(k - nearest) < _INTEGER_SNAP:
        k = nearest
    top = int(np.floor(k))
    if top < 0:
        return 0.0
    if top >= n:
        return 1.0
    with np.errstate(divide="ignore"):
        log_terms = stats.binom.logpmf(np.arange(top + 1), n, p)
    return float(np.clip(np.exp(special.logsumexp(log_terms)), 0.0, 1.0))


def _tail(x: float, n: int, p: float, strict: bool) -> float:
    """Pr[J > x] (strict) or Pr[J >= x] for J ~ Bin(n, p)."""
    nearest = round(x)
    if abs(x - nearest) < _INTEGER_SNAP:
        x = nearest
    if strict:
        return 1.0 - binomial_cdf(x, n, p)
    return 1.0 - binomial_cdf(np.ceil(x) - 1, n, p)


def _check_homogeneous(M: int, psi: float, psi1: float) -> None:
    if M < 3 or M % 2 == 0:
        raise ValueError(f"the voting/SML sensitivities are defined for odd M >= 3, got {M}")
    if psi <= 0.5 or psi > 1.0:
        raise InvalidHomogeneousAccuracy(f"homogeneous sensitivity must lie in (1/2, 1], got {psi}")
    if not 0.0 <= psi1 <= 1.0:
        raise ValueError(f"psi1 must lie in [0, 1], got {psi1}")


def lemma_voting_sml_sensitivities(M: int, psi: float, psi1: float,
                                   convention: TieConvention = "left") -> tuple[float, float]:
    """Sensitivities of majority voting and oracle-weight SML, M-1 classifiers at psi and one at psi1.

    With J ~ Bin(M-1, psi) the number of correct homogeneous votes, c = (M-1)/2
    and the first classifier's relative weight theta = (2 psi1 - 1)/(2 psi - 1):

        psi_vote = psi1 Pr[J > M/2 - 1] + (1 - psi1) Pr[J > M/2]
        psi_sml  = psi1 Pr[J > c - theta/2] + (1 - psi1) Pr[J > c + theta/2]

    The SML tails jump where c -/+ theta/2 is an integer. ``convention`` picks
    the value at those points: "left" (first tail strict, second inclusive),
    "right" (the reverse) or "coin" (a zero weighted sum counted as half right).
    All three keep psi_sml >= psi_vote and psi_sml >= psi.
    """
    if convention not in ("left", "right", "coin"):
        raise ValueError(f"unknown tie convention {convention!r}")
    _check_homogeneous(M, psi, psi1)
    n = M - 1
    center = n / 2
    theta = (2 * psi1 - 1) / (2 * psi - 1)
    psi_vote = psi1 * _tail(M / 2 - 1, n, psi, True) + (1 - psi1) * _tail(M / 2, n, psi, True)

    def tail(x: float, strict: bool | None) -> float:
        if strict is None:
            return (_tail(x, n, psi, True) + _tail(x, n, psi, False)) / 2
        return _tail(x, n, psi, strict)

    first, second = {"left": (True, False), "right": (False, True), "coin": (None, None)}[convention]
    psi_sml = psi1 * tail(center - theta / 2, first) + (1 - psi1) * tail(center + theta / 2, second)
    return float(psi_vote), float(psi_sml)


def brute_force_sensitivities(M: int, psi: float, psi1: float) -> tuple[float, float]:
    """Same quantities as lemma_voting_sml_sensitivities by summing over all 2^M correctness patterns.

    A zero weighted sum counts as half right.
    """
    _check_homogeneous(M, psi, psi1)
    if M > 20:
        raise ValueError(f"enumeration over 2^M patterns is limited to M <= 20, got {M}")
    theta = (2 * psi1 - 1) / (2 * psi - 1)
    patterns = (np.arange(2**M)[:, None] >> np.arange(M)) & 1
    accuracy = np.array([psi1] + [psi] * (M - 1))
    prob = np.prod(np.where(patterns == 1, accuracy, 1 - accuracy), axis=1)
    votes = 2 * patterns - 1

    def correct(scores: np.ndarray) -> np.ndarray:
        return np.where(np.abs(scores) < _INTEGER_SNAP, 0.5, (scores > 0).astype(float))

    weights = np.array([theta] + [1.0] * (M - 1))
    return float(prob @ correct(votes.sum(axis=1))), float(prob @ correct(votes @ weights))


def hoeffding_gap_bound(M: int, psi: float) -> float:
    """exp(-2 eps^2 (M-1)), eps = (1 + (M-1)(2psi-1)^2) / (2(M-1)(2psi-1)); bounds 1 - psi_sml at psi1 = 1."""
    if psi <= 0.5:
        raise InvalidHomogeneousAccuracy(f"homogeneous sensitivity must exceed 1/2, got {psi}")
    n = M - 1
    eps = (1 + n * (2 * psi - 1) ** 2) / (2 * n * (2 * psi - 1))
    return float(np.exp(-2 * eps**2 * n))


def eigen_alignment(w, v, lam: float) -> tuple[float, float, bool]:
    """(w.v)^2 against the gap bound 1 - 2/lambda."""
    if lam <= 0:
        raise ValueError(f"eigenvalue must be positive, got {lam}")
    cos2 = float(np.dot(w, v) ** 2)
    bound = 1 - 2 / lam
    return cos2, bound, cos2 >= bound - 1e-12


@dataclass(frozen=True)
class MonteCarloSummary:
    count: int
    mean: float
    median: float
    q1: float
    q3: float
    stderr: float
    minimum: float
    maximum: float


def monte_carlo_summary(values: Sequence[float]) -> MonteCarloSummary:
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise EmptyInput("no runs to summarize")
    q1, median, q3 = np.percentile(x, [25, 50, 75])
    stderr = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
    return MonteCarloSummary(int(x.size), float(x.mean()), float(median), float(q1), float(q3), stderr,
                             float(x.min()), float(x.max()))


def conditional_independence_deviation(P: PredictionMatrix, truth: LabelVector) -> float:
    """Largest |Pr[f_i=a, f_j=a' | y] - Pr[f_i=a | y] Pr[f_j=a' | y]| over pairs, classes and label values."""
    if truth.labels.shape != (P.instance_count,):
        raise ValueError("truth length does not match the prediction matrix")
    worst = 0.0
    for y in (1, -1):
        rows = P.entries[truth.labels == y]
        if rows.shape[0] == 0:
            continue
        for a in (1, -1):
            hit_a = (rows == a).astype(float)
            marg_a = hit_a.mean(axis=0)
            for a2 in (1, -1):
                hit_b = (rows == a2).astype(float)
                joint = hit_a.T @ hit_b / rows.shape[0]
                gap = np.abs(joint - np.outer(marg_a, hit_b.mean(axis=0)))
                np.fill_diagonal(gap, 0.0)
                worst = max(worst, float(gap.max()))
    return worst


def first_order_perturbation(R, R_hat) -> np.ndarray:
    """First-order change of the leading eigenvector of rank-one R when perturbed to R_hat.

    v1 = (1/lambda) (I - v v^T) (R_hat - R) v.
    """
    R = np.asarray(R, dtype=float)
    lam, v = leading_eigenpair(R)
    if lam == 0:
        raise ValueError("unperturbed matrix has a zero leading eigenvalue")
    B = np.asarray(R_hat, dtype=float) - R
    Bv = B @ v
    return (Bv - v * (v @ Bv)) / lam
