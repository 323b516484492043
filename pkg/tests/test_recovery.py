from __future__ import annotations

import numpy as np
import pytest

from spectral_ensemble import errors
from spectral_ensemble.covariance import CovarianceSummary
from spectral_ensemble.errors import DisconnectedClassifier, NonConvergence, SingularSystem
from spectral_ensemble.evaluation import kendall_tau
from spectral_ensemble.generators import independent_ensemble, population_covariance, rank_one_oracle, simulate_ensemble
from spectral_ensemble.model import EnsembleSpec, LabelVector, PredictionMatrix
from spectral_ensemble.recovery import (RecoveryMethod, default_theta, fit_diagonal_linear, fit_diagonal_weighted,
                                        fit_identifiable, leading_eigenpair, rank_classifiers, rank_from_summary,
                                        resolve_sign_and_rank, solve_log_system, trace_relaxation_matrix)

C = np.array([0.5, 0.4, 0.2])


def _rank_one_summary(c=C, diagonal: float = 1.0, S: int = 100) -> CovarianceSummary:
    q = np.outer(c, c)
    np.fill_diagonal(q, diagonal)
    mask = ~np.eye(len(c), dtype=bool)
    return CovarianceSummary(q_hat=q, mu_hat=np.zeros(len(c)), instance_count=S, mask=mask)


def test_linear_fit_recovers_exact_rank_one_diagonal() -> None:
    fit = fit_diagonal_linear(_rank_one_summary())

    np.testing.assert_allclose(fit.t_hat, np.log(C), atol=1e-12)
    np.testing.assert_allclose(fit.diagonal, [0.25, 0.16, 0.04], atol=1e-12)
    assert fit.residual == pytest.approx(0.0, abs=1e-20)
    assert fit.equations_used == 3


def test_weighted_fit_is_exact_on_rank_one_input() -> None:
    fit = fit_diagonal_weighted(_rank_one_summary())

    np.testing.assert_allclose(fit.diagonal, [0.25, 0.16, 0.04], atol=1e-12)


def test_uniform_weights_match_unweighted_solve(rng: np.random.Generator) -> None:
    pairs = [(0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (0, 3)]
    y = rng.normal(size=len(pairs))

    plain = solve_log_system(pairs, y, None, 4)
    uniform = solve_log_system(pairs, y, np.full(len(pairs), 3.0), 4)

    np.testing.assert_allclose(plain.t_hat, uniform.t_hat, atol=1e-12)


def test_zero_weight_equations_are_dropped() -> None:
    pairs = [(0, 1), (0, 2), (1, 2), (0, 1)]
    y = np.log([0.2, 0.1, 0.08, 0.9])

    fit = solve_log_system(pairs, y, [1.0, 1.0, 1.0, 0.0], 3)

    np.testing.assert_allclose(fit.diagonal, [0.25, 0.16, 0.04], atol=1e-12)
    assert fit.equations_used == 3


def test_two_classifiers_are_underdetermined() -> None:
    with pytest.raises(SingularSystem):
        solve_log_system([(0, 1)], [np.log(0.3)], None, 2)


def test_bipartite_pair_graph_is_singular() -> None:
    with pytest.raises(SingularSystem):
        solve_log_system([(0, 2), (0, 3), (1, 2), (1, 3)], np.zeros(4), None, 4)


def test_unpaired_classifier_is_disconnected() -> None:
    with pytest.raises(DisconnectedClassifier) as excinfo:
        solve_log_system([(0, 1), (0, 2), (1, 2)], np.zeros(3), None, 4)

    assert excinfo.value.index == 3


def test_masked_out_row_is_disconnected() -> None:
    summary = _rank_one_summary(np.array([0.5, 0.4, 0.2, 0.3]))
    mask = summary.mask.copy()
    mask[3, :] = mask[:, 3] = False

    with pytest.raises(DisconnectedClassifier):
        fit_diagonal_linear(CovarianceSummary(summary.q_hat, summary.mu_hat, 100, mask=mask))


def _without_rows(rows, c=(0.5, 0.4, 0.2, 0.3)) -> CovarianceSummary:
    summary = _rank_one_summary(np.array(c))
    mask = summary.mask.copy()
    for i in rows:
        mask[i, :] = mask[:, i] = False
    return CovarianceSummary(summary.q_hat, summary.mu_hat, 100, mask=mask)


def test_unidentified_classifier_is_left_out_of_the_fit() -> None:
    fit, dropped = fit_identifiable(_without_rows([3]))

    assert dropped == (3,)
    np.testing.assert_allclose(fit.diagonal, [0.25, 0.16, 0.04, 0.0], atol=1e-12)
    assert fit.pair_counts.tolist() == [2, 2, 2, 0]


def test_unidentified_classifier_gets_zero_weight() -> None:
    estimate = rank_from_summary(_without_rows([3]))

    assert estimate.unidentified == (3,)
    assert errors.UNIDENTIFIED in estimate.warnings
    assert estimate.v_hat[3] == pytest.approx(0.0, abs=1e-12)
    assert estimate.ranking.tolist() == [0, 1, 2, 3]
    assert 3 not in estimate.low_confidence
    np.testing.assert_allclose(estimate.r_hat[3], 0.0, atol=1e-15)


def test_unidentified_classifier_can_still_raise() -> None:
    with pytest.raises(DisconnectedClassifier) as excinfo:
        rank_from_summary(_without_rows([3]), on_unidentified="raise")
    assert excinfo.value.index == 3

    with pytest.raises(ValueError):
        rank_from_summary(_without_rows([3]), on_unidentified="ignore")


def test_too_few_identifiable_classifiers_reraise() -> None:
    with pytest.raises(DisconnectedClassifier) as excinfo:
        fit_identifiable(_without_rows([2, 3]))

    assert excinfo.value.index == 2


def test_two_identical_classifiers_stay_singular() -> None:
    with pytest.raises(SingularSystem):
        rank_from_summary(_rank_one_summary(np.array([0.6, 0.6])))


def test_zero_variance_pairs_drop_a_classifier_from_the_weighted_fit() -> None:
    summary = _rank_one_summary(np.array([0.5, 0.4, 0.2, 0.3]))
    var = np.full((4, 4), 0.01)
    var[3, :] = var[:, 3] = 0.0

    fit, dropped = fit_identifiable(CovarianceSummary(summary.q_hat, summary.mu_hat, 100, var_hat=var,
                                                      mask=summary.mask), RecoveryMethod.WEIGHTED)

    assert dropped == (3,)
    np.testing.assert_allclose(fit.diagonal, [0.25, 0.16, 0.04, 0.0], atol=1e-12)
    with pytest.raises(ValueError):
        fit_identifiable(summary, RecoveryMethod.TRACE)


def test_default_theta_averages_significant_pairs() -> None:
    only_first_pair = _without_rows([2, 3])

    assert default_theta(only_first_pair) == pytest.approx(0.1 * 0.2)
    nothing = _without_rows([0, 1, 2, 3])
    assert default_theta(nothing) == pytest.approx(0.1 * 0.71 / 6)


def test_leading_eigenpair_examples() -> None:
    lam, v = leading_eigenpair(3 * np.outer([1.0, 0, 0], [1.0, 0, 0]))
    assert lam == pytest.approx(3.0)
    np.testing.assert_allclose(np.abs(v), [1.0, 0.0, 0.0], atol=1e-12)

    lam, v = leading_eigenpair(np.diag([2.0, -5.0]))
    assert lam == pytest.approx(-5.0)
    np.testing.assert_allclose(np.abs(v), [0.0, 1.0], atol=1e-12)


def test_power_iteration_matches_dense_decomposition(rng: np.random.Generator) -> None:
    c = rng.uniform(0.2, 0.6, size=30)
    A = np.outer(c, c) + np.diag(rng.uniform(0.0, 0.05, size=30))

    lam_dense, v_dense = leading_eigenpair(A)
    lam_power, v_power = leading_eigenpair(A, dense_limit=1)

    assert lam_power == pytest.approx(lam_dense, rel=1e-9)
    assert abs(v_power @ v_dense) == pytest.approx(1.0, abs=1e-9)


def test_power_iteration_strict_mode_reports_stall() -> None:
    with pytest.raises(NonConvergence):
        leading_eigenpair(np.diag([1.0, -1.0, 0.5]), dense_limit=1, max_iter=50, strict=True)


def test_sign_resolution_examples() -> None:
    flipped = resolve_sign_and_rank([-0.6, -0.8])
    np.testing.assert_allclose(flipped.v_hat, [0.6, 0.8])
    assert flipped.ranking.tolist() == [1, 0]

    assert resolve_sign_and_rank([0.8, 0.6]).ranking.tolist() == [0, 1]
    assert resolve_sign_and_rank([0.5, 0.5]).ranking.tolist() == [0, 1]


def test_sign_resolution_balance_and_majority_rule() -> None:
    balanced = resolve_sign_and_rank([0.5, -0.5])
    assert balanced.warnings == (errors.EXACT_BALANCE,)
    np.testing.assert_allclose(balanced.v_hat, [0.5, -0.5])

    by_majority = resolve_sign_and_rank([-0.1, -0.2, 0.9], rule="majority")
    np.testing.assert_allclose(by_majority.v_hat, [0.1, 0.2, -0.9])
    assert resolve_sign_and_rank([-0.1, -0.2, 0.9], rule="sum").v_hat[2] == pytest.approx(0.9)

    with pytest.raises(ValueError):
        resolve_sign_and_rank([0.0, 0.0])


def test_trace_relaxation_fits_rank_one_off_diagonals() -> None:
    q = np.outer(C, C)
    np.fill_diagonal(q, 1.0)

    R, _, _ = trace_relaxation_matrix(q, theta=1e-4)

    off = ~np.eye(3, dtype=bool)
    np.testing.assert_allclose(R[off], np.outer(C, C)[off], atol=5e-3)


def test_trace_relaxation_large_penalty_gives_zero() -> None:
    q = np.outer(C, C)
    np.fill_diagonal(q, 1.0)

    R, _, converged = trace_relaxation_matrix(q, theta=2 * np.abs(q).sum())

    assert converged
    np.testing.assert_allclose(R, 0.0, atol=1e-12)


def test_trace_method_ranks_rank_one_input() -> None:
    estimate = rank_from_summary(_rank_one_summary(), RecoveryMethod.TRACE, theta=1e-4)

    assert estimate.method is RecoveryMethod.TRACE
    assert estimate.ranking.tolist() == [0, 1, 2]


@pytest.mark.parametrize("method", [RecoveryMethod.LINEAR, RecoveryMethod.WEIGHTED])
def test_linear_methods_recover_population_ranking(method: RecoveryMethod) -> None:
    pis = np.array([0.62, 0.91, 0.74, 0.33, 0.85, 0.68])
    Q = population_covariance(EnsembleSpec.from_accuracies(pis))
    summary = CovarianceSummary(q_hat=Q, mu_hat=np.zeros(len(pis)), instance_count=10**6)

    estimate = rank_from_summary(summary, method)

    rho = 2 * pis - 1
    assert estimate.ranking.tolist() == np.argsort(-rho).tolist()
    np.testing.assert_allclose(estimate.v_hat, rho / np.linalg.norm(rho), atol=1e-9)
    assert estimate.lambda_hat == pytest.approx(float(rho @ rho))


def test_correlated_pair_gets_equal_weights(correlated_matrix: PredictionMatrix) -> None:
    estimate = rank_classifiers(correlated_matrix, RecoveryMethod.LINEAR)

    assert abs(estimate.v_hat[0]) == pytest.approx(abs(estimate.v_hat[1]))
    assert estimate.v_hat[2] < 0
    assert estimate.ranking.tolist() == [0, 1, 2]
    assert errors.LOW_CONFIDENCE in estimate.warnings
    assert estimate.low_confidence == (0, 1, 2)


def test_eigen_method_uses_covariance_directly(correlated_matrix: PredictionMatrix) -> None:
    estimate = rank_classifiers(correlated_matrix, "eigen")

    assert estimate.diagonal_fit is None
    np.testing.assert_allclose(estimate.r_hat, estimate.summary.q_hat)


@pytest.mark.slow
def test_best_classifier_lands_in_top_five() -> None:
    hits = 0
    for child in np.random.SeedSequence(11).spawn(30):
        rng = np.random.default_rng(child)
        pis = rng.uniform(0.3, 0.8, size=100)
        sim = simulate_ensemble(600, 0.0, pis, rng)
        estimate = rank_classifiers(sim.predictions)
        accuracies = np.array([p.pi for p in sim.performances])
        hits += int(np.argmax(accuracies)) in estimate.ranking[:5].tolist()
    assert hits >= 27


def test_eigen_ranking_matches_leading_singular_vector(rng: np.random.Generator) -> None:
    truth = LabelVector(np.repeat([1, -1], 150))
    P = independent_ensemble(truth, [0.9, 0.62, 0.81, 0.7, 0.55, 0.76], rng)
    X = P.entries - P.entries.mean(axis=0)

    _, _, Vt = np.linalg.svd(X, full_matrices=False)

    estimate = rank_classifiers(P, RecoveryMethod.EIGEN)
    assert estimate.ranking.tolist() == resolve_sign_and_rank(Vt[0]).ranking.tolist()


@pytest.mark.slow
def test_trace_and_linear_rankings_agree() -> None:
    agree = 0
    for child in np.random.SeedSequence(5).spawn(100):
        rng = np.random.default_rng(child)
        sim = simulate_ensemble(2000, 0.0, rng.uniform(0.55, 0.9, size=10), rng)
        linear = rank_classifiers(sim.predictions, RecoveryMethod.LINEAR)
        trace = rank_classifiers(sim.predictions, RecoveryMethod.TRACE)
        agree += kendall_tau(linear.v_hat, trace.v_hat) >= 0.8
    assert agree >= 90


@pytest.mark.slow
def test_every_method_recovers_the_ranking_at_large_s() -> None:
    pis = np.array([0.6, 0.64, 0.68, 0.72, 0.76, 0.8, 0.84, 0.88, 0.92, 0.3])
    exact = {method: 0 for method in RecoveryMethod}
    for child in np.random.SeedSequence(17).spawn(100):
        rng = np.random.default_rng(child)
        sim = simulate_ensemble(100_000, 0.0, pis, rng)
        accuracies = np.array([p.pi for p in sim.performances])
        for method in RecoveryMethod:
            estimate = rank_classifiers(sim.predictions, method)
            exact[method] += kendall_tau(accuracies, estimate.v_hat) == 1.0
    assert all(count >= 95 for count in exact.values()), exact


@pytest.mark.slow
def test_eigenvector_error_shrinks_like_one_over_root_s() -> None:
    pis = np.array([0.62, 0.91, 0.74, 0.58, 0.85, 0.68, 0.8, 0.7, 0.88, 0.65])
    scaled = []
    for S in (500, 2000, 8000):
        angles = []
        for child in np.random.SeedSequence(S).spawn(60):
            rng = np.random.default_rng(child)
            sim = simulate_ensemble(S, 0.0, pis, rng)
            _, v = rank_one_oracle(sim.spec)
            v_hat = rank_classifiers(sim.predictions).v_hat
            angles.append(np.arccos(min(1.0, abs(float(v_hat @ v)))))
        scaled.append(np.median(angles) * np.sqrt(S))
    assert max(scaled) / min(scaled) <= 2.0, scaled
