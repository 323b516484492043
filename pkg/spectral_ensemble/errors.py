"""Exceptions raised by spectral_ensemble.

Non-fatal conditions (exact sign balance, proximal non-convergence, degenerate
EM labels, degenerate arctan denominators) are not exceptions: they are flag
names carried in the ``warnings`` of the returned object. The names below are
reused as those flag strings.
"""


class SpectralEnsembleError(Exception):
    """Base class for every error raised by the package."""


class InvalidPredictionMatrix(SpectralEnsembleError):
    pass


class AllOneClass(SpectralEnsembleError):
    """Truth labels contain a single class, so sensitivity or specificity is undefined."""


class TooFewInstances(SpectralEnsembleError):
    pass


class DisconnectedClassifier(SpectralEnsembleError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"classifier {index} has no significant covariance pair; its diagonal entry is unidentifiable")


class SingularSystem(SpectralEnsembleError):
    pass


class NonConvergence(SpectralEnsembleError):
    def __init__(self, max_iter: int, message: str = ""):
        self.max_iter = max_iter
        super().__init__(message or f"no convergence after {max_iter} iterations")


class GuardExceeded(SpectralEnsembleError):
    pass


class InfeasibleImbalance(SpectralEnsembleError):
    pass


class InfeasibleTarget(SpectralEnsembleError):
    def __init__(self, message: str, index: int | None = None):
        self.index = index
        if index is not None:
            message = f"classifier {index}: {message}"
        super().__init__(message)


class EmptyInput(SpectralEnsembleError):
    pass


class InvalidHomogeneousAccuracy(SpectralEnsembleError):
    pass


class ParseError(SpectralEnsembleError):
    def __init__(self, message: str, row: int, col: int | None = None):
        self.row = row
        self.col = col
        where = f"row {row}" if col is None else f"row {row}, column {col}"
        super().__init__(f"{where}: {message}")


class MalformedLabel(ParseError):
    def __init__(self, value: str, row: int, col: int):
        self.value = value
        super().__init__(f"label {value!r} is not one of -1, 1, +1", row, col)


class RaggedRows(ParseError):
    def __init__(self, row: int, expected: int, found: int):
        super().__init__(f"expected {expected} cells, found {found}", row)


class InvalidConfig(SpectralEnsembleError):
    pass


# flag names for non-fatal conditions
EXACT_BALANCE = "ExactBalance"
NON_CONVERGENCE = "NonConvergence"
DEGENERATE_LABELS = "DegenerateLabels"
DEGENERATE_DENOMINATOR = "DegenerateDenominator"
NEGATIVE_EIGENVALUE = "NegativeLeadingEigenvalue"
LOW_CONFIDENCE = "LowConfidenceDiagonal"
EIGEN_FALLBACK = "FallbackToDirectEigen"
UNIDENTIFIED = "UnidentifiedDiagonal"
