"""Synthetic ground truths and ensembles, and the analytic population oracles.

Classifiers are random detectors with a fixed empirical balanced accuracy
(RDFBA): start from the labels they track, then flip FP negatives and FN
positives, where FN is tied to FP by the balanced-accuracy target.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np

from . import errors
from .errors import InfeasibleImbalance, InfeasibleTarget, InvalidConfig
from .model import (CartelBlock, ClassifierPerformance, EnsembleSpec, LabelVector, PredictionMatrix,
                    confusion_stats)

logger = logging.getLogger(__name__)

DEFAULT_POOL_SIZE = 10000
_INTEGRAL_TOL = 1e-9

FitMode = Literal["exact", "snap", "nearest"]


def make_rng(seed: int | np.random.SeedSequence | None) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(seed))


def class_counts(S: int, b: float) -> tuple[int, int]:
    """(positives, negatives) for S instances at imbalance b, rounding half up."""
    if not -1.0 < b < 1.0:
        raise InfeasibleImbalance(f"class imbalance must lie strictly inside (-1, 1), got {b}")
    positives = int(np.floor(S * (1 + b) / 2 + 0.5))
    negatives = S - positives
    if positives < 1 or negatives < 1:
        raise InfeasibleImbalance(f"S={S}, b={b} leaves {positives} positives and {negatives} negatives")
    return positives, negatives


def generate_truth(S: int, b: float, rng: np.random.Generator) -> LabelVector:
    positives, _ = class_counts(S, b)
    labels = np.full(S, -1, dtype=np.int8)
    labels[rng.choice(S, size=positives, replace=False)] = 1
    return LabelVector(labels)


def feasible_false_positives(P: int, N: int, pi: float, snap: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """All (FP, FN) pairs meeting FN = (2 - 2 pi - FP/N) P with FN an integer in [0, P].

    With ``snap`` FN is rounded to the nearest integer instead of required to
    be one; the achieved balanced accuracy is then within 1/(2P) of ``pi``.
    """
    fp = np.arange(N + 1)
    fn = (2 - 2 * pi) * P - fp * P / N
    fn_int = np.rint(fn)
    keep = (fn_int >= 0) & (fn_int <= P)
    if not snap:
        keep &= np.abs(fn - fn_int) <= _INTEGRAL_TOL
    return fp[keep], fn_int[keep].astype(int)


def nearest_feasible_accuracy(P: int, N: int, pi: float) -> float:
    """The balanced accuracy closest to ``pi`` that integer (FP, FN) counts reach on P positives and N negatives."""
    fp = np.arange(N + 1)
    fn = np.clip(np.rint((2 - 2 * pi) * P - fp * P / N), 0, P)
    achieved = 1 - fp / (2 * N) - fn / (2 * P)
    return float(achieved[np.argmin(np.abs(achieved - pi))])


def rdfba(truth: LabelVector, pi: float, rng: np.random.Generator, *, fit: FitMode = "exact",
          index: int | None = None) -> tuple[LabelVector, ClassifierPerformance]:
    """One random detector whose empirical balanced accuracy on ``truth`` is ``pi``.

    ``fit`` handles targets no integer (FP, FN) reaches: "exact" raises,
    "snap" rounds FN per candidate FP, "nearest" moves ``pi`` to the closest
    reachable value first and then draws exactly.
    """
    if not 0.0 <= pi <= 1.0:
        raise InfeasibleTarget(f"balanced accuracy {pi} outside [0, 1]", index)
    if fit not in ("exact", "snap", "nearest"):
        raise ValueError(f"unknown fit mode {fit!r}")
    labels = truth.labels
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == -1)
    if pos.size == 0 or neg.size == 0:
        raise InfeasibleTarget(f"tracked labels have {pos.size} positives and {neg.size} negatives", index)
    if fit == "nearest":
        pi = nearest_feasible_accuracy(pos.size, neg.size, pi)
    fps, fns = feasible_false_positives(pos.size, neg.size, pi, fit == "snap")
    if fps.size == 0:
        raise InfeasibleTarget(f"no integer (FP, FN) reaches pi={pi} with P={pos.size}, N={neg.size}", index)
    pick = rng.integers(fps.size)
    fp, fn = int(fps[pick]), int(fns[pick])
    pred = labels.copy()
    pred[rng.choice(neg, size=fp, replace=False)] = 1
    pred[rng.choice(pos, size=fn, replace=False)] = -1
    return LabelVector(pred), confusion_stats(pred, truth)


def _columns(truth: LabelVector, pis: Sequence[float], rng: np.random.Generator, fit: FitMode,
             offset: int = 0) -> list[np.ndarray]:
    return [rdfba(truth, pi, rng, fit=fit, index=offset + i)[0].labels for i, pi in enumerate(pis)]


def independent_ensemble(truth: LabelVector, pis: Sequence[float], rng: np.random.Generator, *,
                         fit: FitMode = "exact") -> PredictionMatrix:
    """Conditionally independent RDFBA columns, one per entry of ``pis``."""
    return PredictionMatrix(np.column_stack(_columns(truth, pis, rng, fit)))


def cartel_ensemble(truth: LabelVector, honest_pis: Sequence[float], cartel: CartelBlock | None,
                    rng: np.random.Generator, *,
                    fit: FitMode = "exact") -> tuple[PredictionMatrix, LabelVector | None]:
    """Honest columns tracking ``truth`` followed by cartel columns tracking a shared target.

    The target is itself an RDFBA of the truth with balanced accuracy pi_c;
    each member is an RDFBA of the target.
    """
    columns = _columns(truth, honest_pis, rng, fit)
    target = None
    if cartel is not None:
        target, _ = rdfba(truth, cartel.pi_c, rng, fit=fit)
        columns += _columns(target, cartel.members, rng, fit, offset=len(columns))
    if len(columns) < 2:
        raise ValueError(f"an ensemble needs at least 2 classifiers, got {len(columns)}")
    return PredictionMatrix(np.column_stack(columns)), target


def split_ensemble(M: int, r: float) -> tuple[int, int]:
    """(honest, cartel) sizes for a cartel fraction r of M classifiers."""
    if not 0.0 <= r < 1.0:
        raise InvalidConfig(f"cartel fraction must lie in [0, 1), got {r}")
    cartel = int(np.floor(r * M + 0.5))
    if M - cartel < 1:
        raise InvalidConfig(f"cartel fraction {r} leaves no honest classifier among {M}")
    return M - cartel, cartel


@dataclass(frozen=True)
class SimulatedEnsemble:
    """A generated test set with its provenance.

    ``performances`` are measured on the returned test set against ``truth``;
    ``spec`` rebuilds the population description from those realized values,
    with the cartel's target and members measured against the target.
    """

    predictions: PredictionMatrix
    truth: LabelVector
    requested: tuple[float, ...]
    performances: tuple[ClassifierPerformance, ...]
    spec: EnsembleSpec
    cartel_target: LabelVector | None = None
    pool_size: int | None = None
    honest_count: int = 0


def simulate_ensemble(S: int, b: float, honest_pis: Sequence[float], rng: np.random.Generator, *,
                      cartel: CartelBlock | None = None, pool_size: int | None = None) -> SimulatedEnsemble:
    """Generate a truth and an ensemble of S instances.

    Without ``pool_size`` the detectors are built on the S test instances and
    hit the reachable balanced accuracy nearest each target exactly. With ``pool_size`` T they are
    built on a pool of T instances at the same imbalance, and the test set is
    a stratified subsample of S, so realized accuracies scatter around the
    targets.
    """
    positives, negatives = class_counts(S, b)
    if pool_size is None:
        truth = generate_truth(S, b, rng)
        P, target = cartel_ensemble(truth, honest_pis, cartel, rng, fit="nearest")
    else:
        if pool_size < S:
            raise InfeasibleImbalance(f"pool of {pool_size} instances cannot supply a test set of {S}")
        pool_truth = generate_truth(pool_size, b, rng)
        pool_P, pool_target = cartel_ensemble(pool_truth, honest_pis, cartel, rng, fit="nearest")
        pool_pos = np.flatnonzero(pool_truth.labels == 1)
        pool_neg = np.flatnonzero(pool_truth.labels == -1)
        if pool_pos.size < positives or pool_neg.size < negatives:
            raise InfeasibleImbalance(f"pool has {pool_pos.size}/{pool_neg.size} positives/negatives, "
                                      f"test set needs {positives}/{negatives}")
        idx = np.concatenate([rng.choice(pool_pos, size=positives, replace=False),
                              rng.choice(pool_neg, size=negatives, replace=False)])
        rng.shuffle(idx)
        truth = LabelVector(pool_truth.labels[idx])
        P = PredictionMatrix(pool_P.entries[idx])
        target = None if pool_target is None else LabelVector(pool_target.labels[idx])

    honest_count = len(honest_pis)
    performances = tuple(confusion_stats(P.column(i), truth) for i in range(P.classifier_count))
    realized_cartel = None
    if cartel is not None:
        try:
            target_perf = confusion_stats(target.labels, truth)
            members = tuple(confusion_stats(P.column(honest_count + j), target) for j in range(cartel.size))
        except errors.AllOneClass:
            logger.warning("cartel target collapsed to one class on the test set; cartel left out of the EnsembleSpec")
        else:
            realized_cartel = CartelBlock(target_perf.pi, tuple(m.pi for m in members), target_perf, members)
    spec = EnsembleSpec(float(b), performances[:honest_count], realized_cartel)
    requested = tuple(float(p) for p in honest_pis) + (cartel.members if cartel else ())
    return SimulatedEnsemble(P, truth, requested, performances, spec, target, pool_size, honest_count)


# population oracles

def _target_moments(spec: EnsembleSpec) -> tuple[float, float]:
    """(rho_c, mu_T): 2 pi_c - 1 and the population mean of the cartel target."""
    target = spec.cartel.target_performance()
    return 2 * target.pi - 1, target.mu(spec.class_imbalance)


def population_means(spec: EnsembleSpec) -> np.ndarray:
    b = spec.class_imbalance
    mu = [p.mu(b) for p in spec.honest]
    if spec.cartel is not None:
        _, mu_T = _target_moments(spec)
        for j in range(spec.cartel.size):
            member = spec.cartel.member_performance(j)
            # a member tracks the target T the way an honest classifier tracks Y
            mu.append(2 * member.delta + (2 * member.pi - 1) * mu_T)
    return np.array(mu)


def population_covariance(spec: EnsembleSpec) -> np.ndarray:
    """Population covariance of the classifier outputs under conditional independence.

    Honest pairs: (1-b^2) rho_i rho_j. Honest/cartel: (1-b^2) rho_i rho_c tau_j.
    Cartel pairs: Var(T) tau_i tau_j with Var(T) = 1 - mu_T^2, which equals
    1-b^2 for a symmetric target at b = 0. Diagonal: 1 - mu_i^2.
    """
    u = 1 - spec.class_imbalance**2
    rho = 2 * spec.honest_pis() - 1
    if spec.cartel is None:
        Q = u * np.outer(rho, rho)
    else:
        rho_c, mu_T = _target_moments(spec)
        tau = 2 * np.array(spec.cartel.members) - 1
        Q = np.block([[u * np.outer(rho, rho), u * rho_c * np.outer(rho, tau)],
                      [u * rho_c * np.outer(tau, rho), (1 - mu_T**2) * np.outer(tau, tau)]])
    np.fill_diagonal(Q, 1 - population_means(spec) ** 2)
    return Q


def rank_one_oracle(spec: EnsembleSpec) -> tuple[float, np.ndarray]:
    """Eigenvalue lambda = (1-b^2) sum (2 pi_i - 1)^2 and unit v proportional to 2 pi_i - 1."""
    if spec.cartel is not None:
        raise ValueError("the rank-one oracle describes ensembles without a cartel")
    rho = 2 * spec.honest_pis() - 1
    norm = float(np.linalg.norm(rho))
    if norm == 0.0:
        raise ValueError("every classifier has balanced accuracy 1/2; the rank-one term vanishes")
    return (1 - spec.class_imbalance**2) * norm**2, rho / norm


@dataclass(frozen=True)
class RankTwoSpectrum:
    lambda1: float
    lambda2: float
    e1: np.ndarray
    e2: np.ndarray
    alpha: float
    beta: float
    lambda_P: float
    lambda_C: float
    k1: float
    k2: float
    alpha_closed_form: float = float("nan")
    beta_closed_form: float = float("nan")
    reconstruction_residual: float = float("nan")
    warnings: tuple[str, ...] = field(default_factory=tuple)


def _closed_form_angles(k1: float, k2: float) -> tuple[float, float, bool]:
    root = np.sqrt(max(0.0, 1 - k1**2))
    num_a, den_a = 2 * k1 * root * k2, k2 * (1 - 2 * k1**2) - 1
    num_b, den_b = 2 * k1 * root, 1 - k2 - 2 * k1**2
    degenerate = False

    def half_arctan(num: float, den: float) -> float:
        nonlocal degenerate
        if abs(den) < 1e-12:
            degenerate = True
            return float(np.copysign(np.pi / 4, num)) if num else 0.0
        return 0.5 * float(np.arctan(num / den))

    return half_arctan(num_a, den_a), half_arctan(num_b, den_b), degenerate


def _block_spectrum(lambda_P: float, lambda_C: float, k1: float):
    """Spectrum of the 2x2 block Gram matrix and the angles it induces.

    Returns (lambda1, lambda2, (x1, y1), (x2, y2), alpha, beta) where e1 is the
    eigenvector dominated by the honest block, signs fixed so x1 >= 0 and
    y2 >= 0.
    """
    cross = k1 * np.sqrt(lambda_P * lambda_C)
    gram = np.array([[lambda_P, cross], [cross, lambda_C]])
    values, vectors = np.linalg.eigh(gram)
    first = 0 if abs(vectors[0, 0]) >= abs(vectors[0, 1]) else 1
    (x1, y1), lam1 = vectors[:, first], float(values[first])
    (x2, y2), lam2 = vectors[:, 1 - first], float(values[1 - first])
    if x1 < 0:
        x1, y1 = -x1, -y1
    if y2 < 0:
        x2, y2 = -x2, -y2
    lam1, lam2 = max(lam1, 0.0), max(lam2, 0.0)
    a11 = np.sqrt(lam1) * x1 / np.sqrt(lambda_P)
    a12 = np.sqrt(lam2) * x2 / np.sqrt(lambda_P)
    a21 = np.sqrt(lam1) * y1 / np.sqrt(lambda_C)
    a22 = np.sqrt(lam2) * y2 / np.sqrt(lambda_C)
    alpha = float(np.arctan2(a12, a11))
    beta = float(np.arctan2(a21, a22))
    return lam1, lam2, (float(x1), float(y1)), (float(x2), float(y2)), alpha, beta


def spectrum_angles(k1: float, k2: float) -> tuple[float, float, float, float]:
    """(alpha, beta, lambda1/lambda_P, lambda2/lambda_P) for target correlation k1 and mass ratio k2."""
    if not -1.0 <= k1 <= 1.0:
        raise ValueError(f"k1 must lie in [-1, 1], got {k1}")
    if k2 <= 0:
        return 0.0, 0.0, 1.0, 0.0
    lam1, lam2, _, _, alpha, beta = _block_spectrum(1.0, k2, k1)
    return alpha, beta, lam1, lam2


def rank_two_spectrum(spec: EnsembleSpec) -> RankTwoSpectrum:
    """Eigen-decomposition of the off-diagonal population covariance with one cartel."""
    if spec.cartel is None or not spec.honest:
        raise ValueError("the rank-two spectrum needs both an honest block and a cartel")
    u = 1 - spec.class_imbalance**2
    rho = 2 * spec.honest_pis() - 1
    tau = 2 * np.array(spec.cartel.members) - 1
    rho_c, mu_T = _target_moments(spec)
    var_T = 1 - mu_T**2
    lambda_P = u * float(rho @ rho)
    lambda_C = var_T * float(tau @ tau)
    if lambda_P <= 0:
        raise ValueError("honest block has zero mass (every honest pi is 1/2)")
    H, C = len(rho), len(tau)
    honest_dir = np.concatenate([rho / np.sqrt(rho @ rho), np.zeros(C)])
    warnings: list[str] = []

    if lambda_C <= 0:
        # zero cartel mass: the off-diagonals reduce to the rank-one term
        k1 = float(rho_c) if var_T <= 0 else float(np.clip(rho_c * np.sqrt(u / var_T), -1, 1))
        e2 = np.zeros(H + C)
        e2[H] = 1.0
        result = RankTwoSpectrum(lambda_P, 0.0, honest_dir, e2, 0.0, 0.0, lambda_P, 0.0, k1, 0.0)
    else:
        # correlation between truth and target
        k1 = float(np.clip(rho_c * np.sqrt(u / var_T), -1.0, 1.0))
        k2 = lambda_C / lambda_P
        lam1, lam2, (x1, y1), (x2, y2), alpha, beta = _block_spectrum(lambda_P, lambda_C, k1)
        cartel_dir = np.concatenate([np.zeros(H), tau / np.sqrt(tau @ tau)])
        alpha_cf, beta_cf, degenerate = _closed_form_angles(k1, k2)
        if degenerate:
            warnings.append(errors.DEGENERATE_DENOMINATOR)
            logger.warning("arctan denominator vanishes at k1=%.6g, k2=%.6g; closed-form angle set by limit", k1, k2)
        result = RankTwoSpectrum(lam1, lam2, x1 * honest_dir + y1 * cartel_dir, x2 * honest_dir + y2 * cartel_dir,
                                 alpha, beta, lambda_P, lambda_C, k1, k2, alpha_cf, beta_cf)

    Q = population_covariance(spec)
    R = result.lambda1 * np.outer(result.e1, result.e1) + result.lambda2 * np.outer(result.e2, result.e2)
    off = ~np.eye(H + C, dtype=bool)
    residual = float(np.max(np.abs(Q - R)[off]))
    if residual > 1e-9:
        logger.warning("rank-two reconstruction residual %.3g exceeds 1e-9", residual)
    return replace(result, reconstruction_residual=residual, warnings=tuple(warnings))
