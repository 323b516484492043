from __future__ import annotations

import numpy as np
import pytest

from spectral_ensemble.model import LabelVector, PredictionMatrix


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def balanced_truth() -> LabelVector:
    return LabelVector(np.repeat([1, -1], 300))


@pytest.fixture
def correlated_matrix() -> PredictionMatrix:
    """Two copies of a balanced label vector and one inverted copy."""
    y = np.tile([1, -1], 4)
    return PredictionMatrix(np.column_stack([y, y, -y]))


@pytest.fixture
def write_csv():
    """Write rows as a comma-separated file and return its path."""

    def write(path, rows) -> str:
        path.write_text("\n".join(",".join(str(cell) for cell in row) for row in rows) + "\n", encoding="utf-8")
        return str(path)

    return write
