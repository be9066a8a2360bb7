"""Exception hierarchy shared by every amrnet module."""


class AmrError(Exception):
    """Base class for all errors raised by amrnet."""


class StructuralError(AmrError, ValueError):
    """Input has the wrong shape: ragged rows, unsorted loci, bad tensor dims."""


class DataError(AmrError, ValueError):
    """A value inside otherwise well-formed input is invalid.

    ``row`` and ``column`` are 1-based file coordinates when known.
    """

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ConfigurationError(AmrError, ValueError):
    """Settings or label distributions that make an operation impossible."""


class InputError(AmrError, ValueError):
    """Arguments passed at call time are inconsistent with a fitted object."""


class TrainingError(AmrError, RuntimeError):
    """Optimization diverged."""

    def __init__(self, message, epoch=None):
        self.epoch = epoch
        if epoch is not None:
            message = f"{message} (epoch {epoch})"
        super().__init__(message)


class SerializationError(AmrError):
    """Base class for model container problems."""


class ChecksumError(SerializationError):
    pass


class FormatVersionError(SerializationError):
    pass


class ModelTypeError(SerializationError, TypeError):
    pass
