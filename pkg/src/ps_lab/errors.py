"""Error types shared across the package.

Every documented failure mode maps to one of these classes so callers
(and tests) can distinguish bad parameters from bad data from broken
internal contracts.
"""


class InvalidParameterError(ValueError):
    """A scalar parameter is outside its documented range."""


class DegenerateInputError(ValueError):
    """Input data is degenerate (zero vector, non-finite entries, empty set)."""


class InvalidLabelError(ValueError):
    """A class label does not index a proxy row."""


class InvalidPairError(ValueError):
    """A synthetic pair was requested from a single class."""


class NoValidPairError(ValueError):
    """Pair sampling was asked for cross-class pairs but the batch has one class."""


class InconsistentModeError(ValueError):
    """An augmentation mode leaves some embedding without its positive proxy."""


class ContractError(ValueError):
    """Shapes or cached state do not match between pipeline stages."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss. Carries the offending epoch."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class CsvParseError(ValueError):
    """An embedding CSV file is malformed. Carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")
