"""Exception hierarchy. The CLI maps each family to its own exit code."""


class OLinearError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(OLinearError, ValueError):
    """Bad or inconsistent configuration."""


class DataError(OLinearError, ValueError):
    """Problems with input data: ingestion, windowing, estimation."""


class NumericalError(OLinearError, ArithmeticError):
    """Non-finite values, divergence, or solver failure."""


class ShapeError(OLinearError, ValueError):
    pass


class InputError(OLinearError, ValueError):
    """An argument violates a mathematical precondition (symmetry, definiteness)."""


class ConvergenceError(NumericalError):
    pass


class IngestionError(DataError):
    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class WindowError(DataError):
    pass


class EstimationError(DataError):
    pass


class StateError(OLinearError, RuntimeError):
    """A cache or optimizer state does not match the parameters it is used with."""


class DivergenceError(NumericalError):
    pass


class CheckpointError(OLinearError, ValueError):
    pass
