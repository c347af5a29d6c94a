"""Exception types shared by the augmentation, training and benchmark modules."""

from __future__ import annotations


class OndatError(Exception):
    """Base class for every error raised by this package."""


class CorpusParseError(OndatError, ValueError):
    """Raised when a long CSV row cannot be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyCorpusError(OndatError, ValueError):
    """Raised when no series survives loading."""


class SeriesValidationError(OndatError, ValueError):
    """Raised when a Series or Corpus invariant does not hold."""


class DecompositionSkipped(OndatError):
    """Raised when STL cannot run on a series (too short or no seasonality)."""

    def __init__(self, message: str, series_id: str | None = None):
        self.series_id = series_id
        if series_id is not None:
            message = f"series {series_id!r}: {message}"
        super().__init__(message)


class InverseTransformError(OndatError, OverflowError):
    """Raised when exp() overflows while undoing the log transform."""

    def __init__(self, series_id: str | None, index: int):
        self.series_id = series_id
        self.index = index
        super().__init__(
            f"exp overflow while inverting log transform of series {series_id!r} at index {index}"
        )


class BlockSizeError(OndatError, ValueError):
    """Raised when a remainder is shorter than the bootstrap block."""


class ShapeMismatchError(OndatError, ValueError):
    """Raised when array shapes violate an operation's contract."""


class ModelNumericsError(OndatError, FloatingPointError):
    """Raised when the network produces a non-finite value."""

    def __init__(self, message: str, layer: str | None = None, row: int | None = None):
        self.layer = layer
        self.row = row
        where = []
        if layer is not None:
            where.append(f"layer {layer}")
        if row is not None:
            where.append(f"batch row {row}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class TrainingError(OndatError, RuntimeError):
    """Raised when a training run cannot proceed."""


class ConfigError(OndatError, ValueError):
    """Raised with every problem found while validating an experiment config."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.problems))
