"""Rank-one recovery from the sample covariance and classifier ranking.

The off-diagonal entries of the population covariance equal those of a
rank-one matrix R = lambda v v^T with v_i proportional to 2 pi_i - 1. Only the
diagonal of R is unobserved; it is recovered here by one of four methods
before the leading eigenvector is extracted and sign-resolved.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Literal, Sequence

import numpy as np

from . import errors
from .covariance import DEFAULT_FACTOR, CovarianceSummary, entry_variance, significance_mask, summarize
from .errors import DisconnectedClassifier, NonConvergence, SingularSystem
from .model import PredictionMatrix

logger = logging.getLogger(__name__)

DENSE_LIMIT = 512
LOW_CONFIDENCE_PAIRS = 3

SignRule = Literal["sum", "majority"]
OnUnidentified = Literal["zero", "raise"]


class RecoveryMethod(str, Enum):
    LINEAR = "linear"
    WEIGHTED = "weighted"
    TRACE = "trace"
    EIGEN = "eigen"


@dataclass(frozen=True)
class DiagonalFit:
    t_hat: np.ndarray
    residual: float
    equations_used: int
    pair_counts: np.ndarray

    @property
    def diagonal(self) -> np.ndarray:
        return np.exp(2 * self.t_hat)

    def low_confidence(self, min_pairs: int = LOW_CONFIDENCE_PAIRS) -> tuple[int, ...]:
        return tuple(int(i) for i in np.nonzero(self.pair_counts < min_pairs)[0])


@dataclass(frozen=True)
class SignResolution:
    v_hat: np.ndarray
    ranking: np.ndarray
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class RankOneEstimate:
    """Reconstructed R, its leading eigenpair and the induced ranking.

    ``ranking`` lists 0-based classifier indices from best to worst.
    ``unidentified`` lists classifiers left out of the diagonal fit; their
    rows and columns of R are zero, so their v_hat entries are 0.
    """

    r_hat: np.ndarray
    lambda_hat: float
    v_hat: np.ndarray
    ranking: np.ndarray
    method: RecoveryMethod
    diagonal_fit: DiagonalFit | None = None
    iterations: int = 0
    warnings: tuple[str, ...] = ()
    low_confidence: tuple[int, ...] = ()
    unidentified: tuple[int, ...] = ()
    summary: CovarianceSummary | None = field(default=None, repr=False)


def _with_mask(summary: CovarianceSummary, factor: float = DEFAULT_FACTOR) -> CovarianceSummary:
    if summary.var_hat is None:
        summary = replace(summary, var_hat=entry_variance(summary))
    if summary.mask is None:
        summary = replace(summary, mask=significance_mask(summary, factor=factor))
    return summary


def solve_log_system(pairs: Sequence[tuple[int, int]], log_abs: Sequence[float], weights: Sequence[float] | None,
                     M: int) -> DiagonalFit:
    """Weighted least squares for t in log|q_ij| = t_i + t_j over the given pairs.

    Zero-weight equations are dropped before the connectivity check. The
    normal equations A^T W A t = A^T W y are solved directly; a rank-deficient
    normal matrix (for instance a bipartite pair graph) raises SingularSystem.
    """
    pairs = [tuple(p) for p in pairs]
    y = np.asarray(log_abs, dtype=float)
    w = np.ones(len(pairs)) if weights is None else np.asarray(weights, dtype=float)
    if not (len(pairs) == len(y) == len(w)):
        raise ValueError("pairs, log_abs and weights must have the same length")
    keep = w > 0
    pairs = [p for p, k in zip(pairs, keep) if k]
    y, w = y[keep], w[keep]

    A = np.zeros((len(pairs), M))
    for row, (i, j) in enumerate(pairs):
        A[row, i] = 1.0
        A[row, j] = 1.0
    counts = A.sum(axis=0).astype(int)
    missing = np.nonzero(counts == 0)[0]
    if missing.size:
        raise DisconnectedClassifier(int(missing[0]))

    normal = A.T @ (w[:, None] * A)
    rhs = A.T @ (w * y)
    if np.linalg.matrix_rank(normal) < M:
        raise SingularSystem(f"normal equations of rank {np.linalg.matrix_rank(normal)} for {M} unknowns "
                             f"({len(pairs)} equations)")
    t_hat = np.linalg.solve(normal, rhs)
    residual = float(np.sum((y - A @ t_hat) ** 2))
    return DiagonalFit(t_hat=t_hat, residual=residual, equations_used=len(pairs), pair_counts=counts)


def _masked_equations(summary: CovarianceSummary):
    pairs = summary.masked_pairs()
    values = np.array([summary.q_hat[i, j] for i, j in pairs])
    return pairs, values


def fit_diagonal_linear(summary: CovarianceSummary) -> DiagonalFit:
    """Unweighted log-linear fit over the masked (significant) pairs."""
    summary = _with_mask(summary)
    pairs, values = _masked_equations(summary)
    return solve_log_system(pairs, np.log(np.abs(values)), None, summary.classifier_count)


def fit_diagonal_weighted(summary: CovarianceSummary) -> DiagonalFit:
    """Log-linear fit weighted by q_ij^2 / Var[q_ij]; zero-variance pairs are excluded."""
    summary = _with_mask(summary)
    pairs, values = _masked_equations(summary)
    var = np.array([summary.var_hat[i, j] for i, j in pairs])
    weights = np.zeros_like(values)
    positive = var > 0
    weights[positive] = values[positive] ** 2 / var[positive]
    return solve_log_system(pairs, np.log(np.abs(values)), weights, summary.classifier_count)


def _restrict(summary: CovarianceSummary, keep: np.ndarray) -> CovarianceSummary:
    block = np.ix_(keep, keep)
    return replace(summary, q_hat=summary.q_hat[block], mu_hat=summary.mu_hat[keep],
                   var_hat=summary.var_hat[block], mask=summary.mask[block])


def fit_identifiable(summary: CovarianceSummary, method: RecoveryMethod | str = RecoveryMethod.LINEAR,
                     min_classifiers: int = 3) -> tuple[DiagonalFit, tuple[int, ...]]:
    """Diagonal fit over the classifiers whose diagonal entry is identifiable.

    Classifiers reported by DisconnectedClassifier are dropped and the rest is
    refit. The returned fit spans all M classifiers, with t = -inf (a zero
    diagonal) and no pairs for the dropped ones. The first DisconnectedClassifier
    is re-raised when fewer than ``min_classifiers`` remain; SingularSystem on
    the remaining block propagates.
    """
    method = RecoveryMethod(method)
    if method not in (RecoveryMethod.LINEAR, RecoveryMethod.WEIGHTED):
        raise ValueError(f"{method.value} does not fit the diagonal by least squares")
    fit_block = fit_diagonal_linear if method is RecoveryMethod.LINEAR else fit_diagonal_weighted
    summary = _with_mask(summary)
    M = summary.classifier_count
    keep = np.flatnonzero(summary.mask.any(axis=1))
    first_error: DisconnectedClassifier | None = None
    if keep.size < M:
        first_error = DisconnectedClassifier(int(np.setdiff1d(np.arange(M), keep)[0]))
    while True:
        if first_error is not None and keep.size < min_classifiers:
            raise first_error
        try:
            fit = fit_block(_restrict(summary, keep))
            break
        except DisconnectedClassifier as e:
            first_error = first_error or DisconnectedClassifier(int(keep[e.index]))
            keep = np.delete(keep, e.index)
    dropped = tuple(int(i) for i in np.setdiff1d(np.arange(M), keep))
    if not dropped:
        return fit, ()
    t_hat = np.full(M, -np.inf)
    t_hat[keep] = fit.t_hat
    counts = np.zeros(M, dtype=int)
    counts[keep] = fit.pair_counts
    return DiagonalFit(t_hat=t_hat, residual=fit.residual, equations_used=fit.equations_used,
                       pair_counts=counts), dropped


def _power_iteration(A: np.ndarray, tol: float, max_iter: int) -> tuple[float, np.ndarray, bool]:
    n = A.shape[0]
    rng = np.random.default_rng(0)
    x = np.ones(n) / np.sqrt(n) + 1e-3 * rng.normal(size=n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for it in range(max_iter):
        y = A @ x
        y_norm = np.linalg.norm(y)
        if y_norm == 0:
            return 0.0, x, True
        x = y / y_norm
        Ax = A @ x
        lam = float(x @ Ax)
        # residual test on the Rayleigh quotient
        if np.linalg.norm(Ax - lam * x) < tol * max(1.0, abs(lam)):
            logger.debug("power iteration converged after %d iterations", it + 1)
            return lam, x, True
    return lam, x, False


def leading_eigenpair(matrix, *, dense_limit: int = DENSE_LIMIT, tol: float = 1e-12, max_iter: int = 10_000,
                      strict: bool = False) -> tuple[float, np.ndarray]:
    """Eigenpair of largest |eigenvalue| of a symmetric matrix, unit-norm vector.

    Full symmetric decomposition up to ``dense_limit``, power iteration above.
    When power iteration stalls (nearly degenerate top magnitudes) it raises
    NonConvergence if ``strict``, otherwise falls back to the full decomposition.
    """
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    A = (A + A.T) / 2
    if A.shape[0] > dense_limit:
        lam, v, converged = _power_iteration(A, tol, max_iter)
        if converged:
            return lam, v / np.linalg.norm(v)
        if strict:
            raise NonConvergence(max_iter, "power iteration did not converge; spectrum may be degenerate")
        logger.warning("power iteration did not converge in %d iterations, using full decomposition", max_iter)
    w, V = np.linalg.eigh(A)
    idx = int(np.argmax(np.abs(w)))
    return float(w[idx]), V[:, idx] / np.linalg.norm(V[:, idx])


def resolve_sign_and_rank(v, rule: SignRule = "sum") -> SignResolution:
    """Orient v so most classifiers look better than random, then rank.

    ``sum``: flip when sum(v) < 0. ``majority``: flip when more entries are
    negative than positive. An exact balance keeps the sign and is flagged.
    Ties in the ranking go to the lower classifier index.
    """
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise ValueError("cannot resolve the sign of a zero vector")
    if rule == "sum":
        score = float(np.sum(v))
    elif rule == "majority":
        score = float(np.count_nonzero(v > 0) - np.count_nonzero(v < 0))
    else:
        raise ValueError(f"unknown sign rule {rule!r}")
    warnings: tuple[str, ...] = ()
    if score < 0:
        v = -v
    elif score == 0:
        warnings = (errors.EXACT_BALANCE,)
        logger.warning("eigenvector entries balance exactly; sign left unresolved")
    ranking = np.argsort(-v, kind="stable")
    return SignResolution(v_hat=v, ranking=ranking, warnings=warnings)


def default_theta(summary: CovarianceSummary) -> float:
    """0.1 mean |q_ij| over the significant pairs, or over all pairs when none is significant."""
    summary = _with_mask(summary)
    M = summary.classifier_count
    picked = summary.mask if summary.mask.any() else ~np.eye(M, dtype=bool)
    off = np.abs(summary.q_hat[picked])
    return 0.1 * float(off.mean()) if off.size else 0.0


def _prox_trace_psd(Y: np.ndarray, shrink: float) -> np.ndarray:
    w, V = np.linalg.eigh((Y + Y.T) / 2)
    w = np.maximum(w - shrink, 0.0)
    R = (V * w) @ V.T
    return (R + R.T) / 2


def trace_relaxation_matrix(q_hat: np.ndarray, theta: float, tol: float = 1e-9,
                            max_iter: int = 5000) -> tuple[np.ndarray, int, bool]:
    """Accelerated proximal gradient for min 1/2 sum_{i!=j}(q_ij - R_ij)^2 + theta/2 Tr R, R PSD.

    The data term's gradient off(R - Q) has Lipschitz constant 1, so the step
    is 1 and the eigenvalue shrinkage is theta/2. Returns the final iterate,
    the iteration count and a convergence flag.
    """
    if theta <= 0:
        raise ValueError(f"theta must be positive, got {theta}")
    Q = np.asarray(q_hat, dtype=float)
    M = Q.shape[0]
    off_q = Q * (1 - np.eye(M))
    R = _prox_trace_psd(Q, theta / 2)
    Z, t = R, 1.0
    for it in range(1, max_iter + 1):
        # gradient step on Z keeps only its diagonal: Z - off(Z - Q) = diag(Z) + off(Q)
        R_next = _prox_trace_psd(np.diag(np.diag(Z)) + off_q, theta / 2)
        t_next = (1 + np.sqrt(1 + 4 * t * t)) / 2
        change = np.linalg.norm(R_next - R)
        Z = R_next + ((t - 1) / t_next) * (R_next - R)
        R, t = R_next, t_next
        if change < tol:
            logger.debug("trace relaxation converged after %d iterations", it)
            return R, it, True
    return R, max_iter, False


def recover_trace_relaxation(summary: CovarianceSummary, theta: float | None = None, tol: float = 1e-9,
                             max_iter: int = 5000, sign_rule: SignRule = "sum") -> RankOneEstimate:
    theta = default_theta(summary) if theta is None else theta
    if theta == 0.0:
        # all off-diagonal covariances vanish; the minimizer is R = 0
        M = summary.classifier_count
        return _finish(np.zeros((M, M)), RecoveryMethod.TRACE, summary, sign_rule)
    R, iterations, converged = trace_relaxation_matrix(summary.q_hat, theta, tol, max_iter)
    warnings: tuple[str, ...] = ()
    if not converged:
        warnings = (errors.NON_CONVERGENCE,)
        logger.warning("trace relaxation stopped at max_iter=%d without reaching tol=%g", max_iter, tol)
    return _finish(R, RecoveryMethod.TRACE, summary, sign_rule, iterations=iterations, warnings=warnings)


def _finish(R: np.ndarray, method: RecoveryMethod, summary: CovarianceSummary, sign_rule: SignRule, *,
            diagonal_fit: DiagonalFit | None = None, iterations: int = 0, warnings: tuple[str, ...] = (),
            unidentified: tuple[int, ...] = ()) -> RankOneEstimate:
    lam, v = leading_eigenpair(R)
    resolved = resolve_sign_and_rank(v, sign_rule)
    warnings = warnings + resolved.warnings
    if lam < 0:
        warnings += (errors.NEGATIVE_EIGENVALUE,)
        logger.warning("leading eigenvalue of the reconstructed matrix is negative (%.4g)", lam)
    if unidentified:
        warnings += (errors.UNIDENTIFIED,)
        logger.warning("classifiers %s have no significant pair; left out of the diagonal fit with zero weight",
                       list(unidentified))
    low = diagonal_fit.low_confidence() if diagonal_fit is not None else ()
    low = tuple(i for i in low if i not in unidentified)
    if low:
        warnings += (errors.LOW_CONFIDENCE,)
        logger.warning("diagonal entries of classifiers %s rest on fewer than %d pairs",
                       list(low), LOW_CONFIDENCE_PAIRS)
    return RankOneEstimate(r_hat=R, lambda_hat=lam, v_hat=resolved.v_hat, ranking=resolved.ranking, method=method,
                           diagonal_fit=diagonal_fit, iterations=iterations, warnings=warnings, low_confidence=low,
                           unidentified=unidentified, summary=summary)


def rank_from_summary(summary: CovarianceSummary, method: RecoveryMethod | str = RecoveryMethod.LINEAR, *,
                      factor: float = DEFAULT_FACTOR, theta: float | None = None, tol: float = 1e-9,
                      max_iter: int = 5000, sign_rule: SignRule = "sum",
                      on_unidentified: OnUnidentified = "zero") -> RankOneEstimate:
    """Recover R with ``method`` and rank by its leading eigenvector.

    For the least-squares methods, ``on_unidentified="zero"`` drops classifiers
    without a significant pair from the fit and gives them zero weight;
    ``"raise"`` propagates DisconnectedClassifier instead.
    """
    method = RecoveryMethod(method)
    summary = _with_mask(summary, factor)
    if method is RecoveryMethod.EIGEN:
        return _finish(summary.q_hat.copy(), method, summary, sign_rule)
    if method is RecoveryMethod.TRACE:
        return recover_trace_relaxation(summary, theta, tol, max_iter, sign_rule)
    if on_unidentified == "raise":
        fit = fit_diagonal_linear(summary) if method is RecoveryMethod.LINEAR else fit_diagonal_weighted(summary)
        unidentified: tuple[int, ...] = ()
    elif on_unidentified == "zero":
        fit, unidentified = fit_identifiable(summary, method)
    else:
        raise ValueError(f"unknown on_unidentified rule {on_unidentified!r}")
    R = summary.q_hat.copy()
    if unidentified:
        R[list(unidentified), :] = 0.0
        R[:, list(unidentified)] = 0.0
    np.fill_diagonal(R, fit.diagonal)
    return _finish(R, method, summary, sign_rule, diagonal_fit=fit, unidentified=unidentified)


def rank_classifiers(P: PredictionMatrix, method: RecoveryMethod | str = RecoveryMethod.LINEAR, *,
                     factor: float = DEFAULT_FACTOR, theta: float | None = None, tol: float = 1e-9,
                     max_iter: int = 5000, sign_rule: SignRule = "sum",
                     on_unidentified: OnUnidentified = "zero") -> RankOneEstimate:
    """Rank classifiers by the sign-resolved leading eigenvector of the recovered R."""
    summary = summarize(P, factor)
    return rank_from_summary(summary, method, factor=factor, theta=theta, tol=tol, max_iter=max_iter,
                             sign_rule=sign_rule, on_unidentified=on_unidentified)
