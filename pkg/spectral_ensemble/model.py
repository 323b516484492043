"""Core domain types: prediction matrices, labels and classifier performance."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import AllOneClass, InvalidPredictionMatrix

Provenance = Literal["population", "empirical"]


def _as_labels(values, what: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.size and not np.isin(arr, (-1, 1)).all():
        bad = arr[~np.isin(arr, (-1, 1))].ravel()[0]
        raise InvalidPredictionMatrix(f"{what} must contain only -1 or +1, found {bad!r}")
    out = arr.astype(np.int8)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class PredictionMatrix:
    """S x M matrix of +/-1 predicted labels; rows are instances, columns classifiers."""

    entries: np.ndarray
    classifier_names: tuple[str, ...] | None = None

    def __post_init__(self):
        entries = _as_labels(self.entries, "predictions")
        if entries.ndim != 2:
            raise InvalidPredictionMatrix(f"predictions must be 2-D, got shape {entries.shape}")
        S, M = entries.shape
        if S < 2 or M < 2:
            raise InvalidPredictionMatrix(f"need at least 2 instances and 2 classifiers, got {S}x{M}")
        object.__setattr__(self, "entries", entries)
        if self.classifier_names is not None:
            names = tuple(str(n) for n in self.classifier_names)
            if len(names) != M:
                raise InvalidPredictionMatrix(f"{len(names)} classifier names for {M} columns")
            if len(set(names)) != M:
                raise InvalidPredictionMatrix("classifier names must be unique")
            object.__setattr__(self, "classifier_names", names)

    @property
    def instance_count(self) -> int:
        return self.entries.shape[0]

    @property
    def classifier_count(self) -> int:
        return self.entries.shape[1]

    def column(self, i: int) -> np.ndarray:
        return self.entries[:, i]

    def names(self) -> tuple[str, ...]:
        if self.classifier_names is not None:
            return self.classifier_names
        return tuple(f"f{i + 1}" for i in range(self.classifier_count))


@dataclass(frozen=True)
class LabelVector:
    labels: np.ndarray

    def __post_init__(self):
        labels = _as_labels(self.labels, "labels")
        if labels.ndim != 1:
            raise InvalidPredictionMatrix(f"labels must be 1-D, got shape {labels.shape}")
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def positives(self) -> int:
        return int(np.count_nonzero(self.labels == 1))

    @property
    def negatives(self) -> int:
        return int(np.count_nonzero(self.labels == -1))


@dataclass(frozen=True)
class ClassifierPerformance:
    """Sensitivity psi and specificity eta of one classifier.

    The same type holds population values (an ensemble description) and
    empirical values (measured against a label vector); ``provenance`` tells
    them apart.
    """

    psi: float
    eta: float
    provenance: Provenance = "population"

    def __post_init__(self):
        for name in ("psi", "eta"):
            value = float(getattr(self, name))
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def symmetric(cls, pi: float, provenance: Provenance = "population") -> ClassifierPerformance:
        return cls(pi, pi, provenance)

    @property
    def pi(self) -> float:
        return (self.psi + self.eta) / 2

    @property
    def delta(self) -> float:
        return (self.psi - self.eta) / 2

    def mu(self, b: float) -> float:
        """Population mean of the classifier output under class imbalance b."""
        return 2 * self.delta + b * (2 * self.pi - 1)

    def clamped(self, eps: float) -> ClassifierPerformance:
        return ClassifierPerformance(
            float(np.clip(self.psi, eps, 1 - eps)),
            float(np.clip(self.eta, eps, 1 - eps)),
            self.provenance,
        )


@dataclass(frozen=True)
class CartelBlock:
    """A sub-ensemble tracking a shared target labeling instead of the truth.

    ``pi_c`` is the target's balanced accuracy w.r.t. the truth and ``members``
    the members' balanced accuracies w.r.t. the target. The optional
    ``target`` and ``member_performances`` carry sensitivity/specificity
    splits; when absent they default to psi = eta.
    """

    pi_c: float
    members: tuple[float, ...]
    target: ClassifierPerformance | None = None
    member_performances: tuple[ClassifierPerformance, ...] | None = None

    def __post_init__(self):
        members = tuple(float(x) for x in self.members)
        if not members:
            raise ValueError("cartel needs at least one member")
        if not all(0.0 <= x <= 1.0 for x in members) or not 0.0 <= self.pi_c <= 1.0:
            raise ValueError("cartel balanced accuracies must lie in [0, 1]")
        object.__setattr__(self, "members", members)
        if self.member_performances is not None:
            perfs = tuple(self.member_performances)
            if len(perfs) != len(members):
                raise ValueError("member_performances must match members")
            object.__setattr__(self, "member_performances", perfs)

    @property
    def size(self) -> int:
        return len(self.members)

    def target_performance(self) -> ClassifierPerformance:
        return self.target or ClassifierPerformance.symmetric(self.pi_c)

    def member_performance(self, j: int) -> ClassifierPerformance:
        if self.member_performances is not None:
            return self.member_performances[j]
        return ClassifierPerformance.symmetric(self.members[j])


@dataclass(frozen=True)
class EnsembleSpec:
    """Population description driving the generators and the analytic oracles."""

    class_imbalance: float
    honest: tuple[ClassifierPerformance, ...] = field(default_factory=tuple)
    cartel: CartelBlock | None = None

    def __post_init__(self):
        if not -1.0 < self.class_imbalance < 1.0:
            raise ValueError(f"class imbalance must lie strictly inside (-1, 1), got {self.class_imbalance}")
        object.__setattr__(self, "honest", tuple(self.honest))
        if not self.honest and self.cartel is None:
            raise ValueError("an ensemble without a cartel needs at least one honest classifier")

    @classmethod
    def from_accuracies(cls, pis: Sequence[float], b: float = 0.0, cartel: CartelBlock | None = None) -> EnsembleSpec:
        return cls(b, tuple(ClassifierPerformance.symmetric(p) for p in pis), cartel)

    @property
    def classifier_count(self) -> int:
        return len(self.honest) + (self.cartel.size if self.cartel else 0)

    def honest_pis(self) -> np.ndarray:
        return np.array([p.pi for p in self.honest])


def confusion_stats(predictions, truth: LabelVector) -> ClassifierPerformance:
    """Empirical sensitivity and specificity of one prediction column."""
    pred = np.asarray(predictions)
    if pred.shape != truth.labels.shape:
        raise ValueError(f"predictions of length {pred.shape} do not match truth of length {truth.labels.shape}")
    pos = truth.labels == 1
    neg = ~pos
    P, N = int(pos.sum()), int(neg.sum())
    if P == 0 or N == 0:
        raise AllOneClass(f"truth has {P} positives and {N} negatives")
    psi = np.count_nonzero(pred[pos] == 1) / P
    eta = np.count_nonzero(pred[neg] == -1) / N
    return ClassifierPerformance(psi, eta, "empirical")


def class_imbalance(truth: LabelVector) -> float:
    return (truth.positives - truth.negatives) / len(truth)


def balanced_accuracy(predictions, truth: LabelVector) -> float:
    return confusion_stats(predictions, truth).pi
