"""Sample covariance of classifier outputs, entry variances and the significance mask."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import TooFewInstances
from .model import PredictionMatrix

logger = logging.getLogger(__name__)

DEFAULT_FACTOR = 2.0


@dataclass(frozen=True)
class CovarianceSummary:
    q_hat: np.ndarray
    mu_hat: np.ndarray
    instance_count: int
    var_hat: np.ndarray | None = None
    mask: np.ndarray | None = None

    @property
    def classifier_count(self) -> int:
        return self.q_hat.shape[0]

    def masked_pairs(self) -> list[tuple[int, int]]:
        if self.mask is None:
            raise ValueError("significance mask not computed")
        i, j = np.nonzero(np.triu(self.mask, k=1))
        return list(zip(i.tolist(), j.tolist()))


def sample_covariance(P: PredictionMatrix) -> CovarianceSummary:
    """Unbiased (S-1 denominator) covariance and column means of the predictions.

    The +/-1 entries make the cross products exact integers, so
    q_ij = (G_ij - s_i s_j / S) / (S - 1) is evaluated from the integer Gram
    matrix G and column sums s; the result is symmetric bit for bit.
    """
    X = P.entries.astype(np.int64)
    S = X.shape[0]
    if S < 2:
        raise TooFewInstances(f"covariance needs at least 2 instances, got {S}")
    sums = X.sum(axis=0)
    gram = X.T @ X
    q_hat = (gram - np.outer(sums, sums) / S) / (S - 1)
    q_hat = (q_hat + q_hat.T) / 2
    return CovarianceSummary(q_hat=q_hat, mu_hat=sums / S, instance_count=S)


def entry_variance(summary: CovarianceSummary, S: int | None = None) -> np.ndarray:
    """Plug-in variance of every covariance entry.

    Var[q_ij] = (1-mu_i^2)(1-mu_j^2)/(S-1) + q_ij/S * (4 mu_i mu_j - (S-2)/(S-1) q_ij)
    with the sample means and covariances substituted for the population
    ones. The plug-in is not bias-corrected. Negative round-off is clipped to 0.
    """
    S = summary.instance_count if S is None else S
    if S < 2:
        raise TooFewInstances(f"entry variance needs S >= 2, got {S}")
    mu = summary.mu_hat
    q = summary.q_hat
    spread = 1 - mu**2
    var = np.outer(spread, spread) / (S - 1) + q / S * (4 * np.outer(mu, mu) - (S - 2) / (S - 1) * q)
    var = (var + var.T) / 2
    return np.clip(var, 0.0, None)


def significance_mask(summary: CovarianceSummary, S: int | None = None, factor: float = DEFAULT_FACTOR) -> np.ndarray:
    if factor < 0:
        raise ValueError(f"threshold factor must be nonnegative, got {factor}")
    var = summary.var_hat if summary.var_hat is not None else entry_variance(summary, S)
    mask = np.abs(summary.q_hat) > factor * np.sqrt(var)
    np.fill_diagonal(mask, False)
    return mask


def summarize(P: PredictionMatrix, factor: float = DEFAULT_FACTOR) -> CovarianceSummary:
    """Covariance, entry variances and mask in one call."""
    summary = sample_covariance(P)
    summary = replace(summary, var_hat=entry_variance(summary))
    mask = significance_mask(summary, factor=factor)
    M = summary.classifier_count
    logger.debug("significance mask keeps %d of %d pairs (factor %.3g)",
                 int(np.triu(mask, 1).sum()), M * (M - 1) // 2, factor)
    return replace(summary, mask=mask)
