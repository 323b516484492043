from __future__ import annotations

import numpy as np
import pytest

from spectral_ensemble.covariance import sample_covariance
from spectral_ensemble.errors import InfeasibleImbalance, InfeasibleTarget, InvalidConfig
from spectral_ensemble.generators import (_closed_form_angles, cartel_ensemble, class_counts,
                                          feasible_false_positives, generate_truth, independent_ensemble,
                                          make_rng, nearest_feasible_accuracy, population_covariance,
                                          rank_one_oracle, rank_two_spectrum, rdfba, simulate_ensemble,
                                          spectrum_angles, split_ensemble)
from spectral_ensemble.model import (CartelBlock, ClassifierPerformance, EnsembleSpec, LabelVector,
                                     class_imbalance, confusion_stats)


def test_class_counts_round_half_up() -> None:
    assert class_counts(600, 0.0) == (300, 300)
    assert class_counts(4, 0.5) == (3, 1)
    with pytest.raises(InfeasibleImbalance):
        class_counts(2, 0.999)


def test_generated_truth_hits_imbalance_within_one_over_s(rng: np.random.Generator) -> None:
    for S, b in [(7, 0.3), (600, 0.0), (101, -0.45)]:
        truth = generate_truth(S, b, rng)
        assert abs(class_imbalance(truth) - b) <= 1 / S


def test_generators_are_reproducible_from_a_seed() -> None:
    first = generate_truth(50, 0.1, make_rng(9)).labels
    second = generate_truth(50, 0.1, make_rng(9)).labels

    np.testing.assert_array_equal(first, second)


def test_feasible_set_for_three_quarters() -> None:
    fp, fn = feasible_false_positives(300, 300, 0.75)

    np.testing.assert_array_equal(fp, np.arange(151))
    np.testing.assert_array_equal(fn, 150 - np.arange(151))


def test_half_accuracy_admits_the_all_positive_detector() -> None:
    fp, fn = feasible_false_positives(300, 300, 0.5)

    assert (300, 0) in set(zip(fp.tolist(), fn.tolist()))


def test_rdfba_reaches_its_target_exactly(balanced_truth: LabelVector, rng: np.random.Generator) -> None:
    for _ in range(20):
        pred, perf = rdfba(balanced_truth, 0.75, rng)
        errors = int(np.count_nonzero(pred.labels != balanced_truth.labels))
        assert errors == 150
        assert perf.pi == pytest.approx(0.75, abs=1e-12)


def test_perfect_detector_copies_the_truth(balanced_truth: LabelVector, rng: np.random.Generator) -> None:
    pred, perf = rdfba(balanced_truth, 1.0, rng)

    np.testing.assert_array_equal(pred.labels, balanced_truth.labels)
    assert (perf.psi, perf.eta) == (1.0, 1.0)


def test_rdfba_infeasible_target_and_snap(rng: np.random.Generator) -> None:
    truth = LabelVector([1, 1, 1, -1, -1, -1])

    with pytest.raises(InfeasibleTarget) as excinfo:
        rdfba(truth, 0.6, rng, index=4)
    assert excinfo.value.index == 4

    _, perf = rdfba(truth, 0.6, rng, fit="snap")
    assert abs(perf.pi - 0.6) <= 1 / (2 * 3)


def test_nearest_fit_lands_on_a_reachable_accuracy(rng: np.random.Generator) -> None:
    truth = LabelVector([1, 1, 1, -1, -1, -1])

    assert nearest_feasible_accuracy(3, 3, 0.6) == pytest.approx(2 / 3, abs=1e-12)
    assert nearest_feasible_accuracy(3, 3, 0.5) == pytest.approx(0.5, abs=1e-12)
    _, perf = rdfba(truth, 0.6, rng, fit="nearest")
    assert perf.pi == pytest.approx(2 / 3, abs=1e-12)
    with pytest.raises(ValueError):
        rdfba(truth, 0.6, rng, fit="round")


def test_independent_ensemble_of_perfect_detectors(balanced_truth: LabelVector, rng: np.random.Generator) -> None:
    P = independent_ensemble(balanced_truth, [1.0, 1.0], rng)

    np.testing.assert_array_equal(P.column(0), balanced_truth.labels)
    np.testing.assert_array_equal(P.column(1), balanced_truth.labels)


def test_empty_cartel_matches_independent_ensemble(balanced_truth: LabelVector) -> None:
    pis = [0.7, 0.8, 0.65]

    P, target = cartel_ensemble(balanced_truth, pis, None, make_rng(3))

    assert target is None
    np.testing.assert_array_equal(P.entries, independent_ensemble(balanced_truth, pis, make_rng(3)).entries)


def test_cartel_with_perfect_target_is_honest(balanced_truth: LabelVector, rng: np.random.Generator) -> None:
    P, target = cartel_ensemble(balanced_truth, [0.7], CartelBlock(1.0, (0.75, 0.8)), rng)

    np.testing.assert_array_equal(target.labels, balanced_truth.labels)
    assert confusion_stats(P.column(1), balanced_truth).pi == pytest.approx(0.75, abs=1e-12)
    assert confusion_stats(P.column(2), balanced_truth).pi == pytest.approx(0.8, abs=1e-12)


def test_split_ensemble_rounds_the_cartel() -> None:
    assert split_ensemble(100, 1 / 3) == (67, 33)
    assert split_ensemble(10, 0.0) == (10, 0)
    with pytest.raises(InvalidConfig):
        split_ensemble(10, 1.0)
    with pytest.raises(InvalidConfig):
        split_ensemble(3, 0.9)


def test_simulated_ensemble_from_pool(rng: np.random.Generator) -> None:
    sim = simulate_ensemble(60, 0.0, rng.uniform(0.3, 0.8, size=8), rng,
                            cartel=CartelBlock(0.5, (0.7, 0.7)), pool_size=400)

    assert sim.predictions.entries.shape == (60, 10)
    assert (sim.truth.positives, sim.truth.negatives) == (30, 30)
    assert sim.honest_count == 8
    assert sim.pool_size == 400
    assert len(sim.performances) == 10
    assert sim.cartel_target is not None


def test_simulated_ensemble_on_the_test_set(rng: np.random.Generator) -> None:
    pis = rng.uniform(0.3, 0.8, size=12)

    sim = simulate_ensemble(600, 0.0, pis, rng)

    realized = np.array([p.pi for p in sim.performances])
    reachable = np.array([nearest_feasible_accuracy(300, 300, pi) for pi in pis])
    np.testing.assert_allclose(realized, reachable, rtol=0, atol=1e-12)
    assert np.all(np.abs(realized - pis) <= 1 / (2 * 300) + 1e-12)
    assert sim.spec.cartel is None


def test_cartel_on_the_test_set_is_exact(rng: np.random.Generator) -> None:
    sim = simulate_ensemble(600, 0.0, rng.uniform(0.3, 0.8, size=6), rng, cartel=CartelBlock(0.6, (0.7, 0.7, 0.7)))

    target = sim.cartel_target
    assert sim.spec.cartel.pi_c == pytest.approx(0.6, abs=1e-12)
    expected = nearest_feasible_accuracy(target.positives, target.negatives, 0.7)
    for j, member in enumerate(sim.spec.cartel.member_performances):
        assert member.pi == pytest.approx(expected, abs=1e-12)
        measured = confusion_stats(sim.predictions.column(6 + j), target)
        assert (member.psi, member.eta) == (measured.psi, measured.eta)


def test_pool_must_cover_the_test_set(rng: np.random.Generator) -> None:
    with pytest.raises(InfeasibleImbalance):
        simulate_ensemble(100, 0.0, [0.7, 0.8], rng, pool_size=50)


def test_population_covariance_examples() -> None:
    perfect = population_covariance(EnsembleSpec(0.0, (ClassifierPerformance(1.0, 1.0),) * 2))
    np.testing.assert_allclose(perfect, np.ones((2, 2)))

    skewed = population_covariance(EnsembleSpec(0.2, (ClassifierPerformance(0.8, 0.6),) * 2))
    assert skewed[0, 1] == pytest.approx(0.1536)
    assert skewed[0, 0] == pytest.approx(0.9216)

    coin = population_covariance(EnsembleSpec.from_accuracies([0.5, 0.7, 0.9]))
    np.testing.assert_array_equal(coin[0, 1:], [0.0, 0.0])


def test_off_diagonals_are_rank_one(rng: np.random.Generator) -> None:
    spec = EnsembleSpec.from_accuracies(rng.uniform(0.2, 0.95, size=20), b=0.3)

    Q = population_covariance(spec)
    lam, v = rank_one_oracle(spec)

    off = ~np.eye(20, dtype=bool)
    np.testing.assert_allclose(Q[off], (lam * np.outer(v, v))[off], atol=1e-12)
    with pytest.raises(ValueError):
        rank_one_oracle(EnsembleSpec.from_accuracies([0.7], cartel=CartelBlock(0.6, (0.7,))))


def test_unrelated_target_leaves_the_spectrum_block_diagonal() -> None:
    spec = EnsembleSpec.from_accuracies([0.8, 0.7, 0.9], cartel=CartelBlock(0.5, (0.7, 0.7)))

    spectrum = rank_two_spectrum(spec)

    assert spectrum.alpha == pytest.approx(0.0, abs=1e-12)
    assert spectrum.beta == pytest.approx(0.0, abs=1e-12)
    assert spectrum.lambda1 == pytest.approx(spectrum.lambda_P)
    assert spectrum.lambda2 == pytest.approx(spectrum.lambda_C)
    np.testing.assert_allclose(spectrum.e1[3:], 0.0, atol=1e-12)
    assert spectrum.reconstruction_residual <= 1e-10


def test_cartel_without_mass_collapses_to_rank_one() -> None:
    spec = EnsembleSpec.from_accuracies([0.8, 0.7, 0.9], cartel=CartelBlock(0.8, (0.5,)))

    spectrum = rank_two_spectrum(spec)

    assert spectrum.lambda2 == 0.0
    assert spectrum.lambda1 == pytest.approx(0.36 + 0.16 + 0.64)
    assert spectrum.reconstruction_residual <= 1e-10


def test_rank_two_reconstruction_over_random_specs() -> None:
    rng = np.random.default_rng(2024)
    for _ in range(200):
        honest = rng.integers(2, 8)
        members = rng.integers(1, 5)
        spec = EnsembleSpec.from_accuracies(
            rng.uniform(0.3, 0.9, size=honest), b=rng.uniform(-0.5, 0.5),
            cartel=CartelBlock(rng.uniform(0.2, 0.9), tuple(rng.uniform(0.3, 0.9, size=members))))

        spectrum = rank_two_spectrum(spec)

        assert spectrum.reconstruction_residual <= 1e-10
        assert abs(spectrum.e1 @ spectrum.e2) <= 1e-10
        assert spectrum.lambda1 >= 0 and spectrum.lambda2 >= 0


def test_block_angles_agree_with_closed_form() -> None:
    alpha, beta, _, _ = spectrum_angles(0.3, 0.5)
    alpha_cf, beta_cf, _ = _closed_form_angles(0.3, 0.5)
    assert alpha == pytest.approx(alpha_cf, abs=1e-9)
    assert beta == pytest.approx(beta_cf, abs=1e-9)

    # the half-arctan forms fix the angles only up to a quarter turn
    quarter = np.pi / 2
    for k1, k2 in [(-0.4, 0.8), (0.6, 2.5), (0.9, 0.2)]:
        alpha, beta, _, _ = spectrum_angles(k1, k2)
        alpha_cf, beta_cf, degenerate = _closed_form_angles(k1, k2)
        assert not degenerate
        for angle, closed in ((alpha, alpha_cf), (beta, beta_cf)):
            gap = (angle - closed) % quarter
            assert min(gap, quarter - gap) <= 1e-9


def test_angles_vanish_without_target_correlation() -> None:
    assert spectrum_angles(0.0, 0.5)[:2] == (pytest.approx(0.0, abs=1e-12), pytest.approx(0.0, abs=1e-12))
    assert spectrum_angles(0.5, 0.0) == (0.0, 0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        spectrum_angles(1.5, 1.0)


@pytest.mark.slow
def test_sample_covariance_approaches_population(rng: np.random.Generator) -> None:
    for S in (1000, 10000):
        sim = simulate_ensemble(S, 0.0, rng.uniform(0.55, 0.9, size=8), rng)
        error = np.abs(sample_covariance(sim.predictions).q_hat - population_covariance(sim.spec)).max()
        assert error <= 5 / np.sqrt(S)
