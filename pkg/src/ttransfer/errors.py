"""Exception hierarchy shared by all ttransfer modules."""


class TtransferError(Exception):
    """Base class for all errors raised by this package."""


class IndexRangeError(TtransferError, IndexError):
    """A multi-index component or linear index is out of range."""


class DimensionMismatchError(TtransferError, ValueError):
    """Operands have incompatible mode shapes."""


class CapacityError(TtransferError):
    """Densification would exceed the configured entry guard."""


class DivergenceError(TtransferError):
    """A trajectory produced a non-finite state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class EvaluationError(TtransferError, ValueError):
    """A basis function produced a non-finite value."""


class EmptyDataError(TtransferError, ValueError):
    """An assembly was requested with no samples."""


class DegenerateDataError(TtransferError, ValueError):
    """Assembled matrices are identically zero or otherwise unusable."""


class SolverError(TtransferError):
    """An iterative solver failed to converge or broke down."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigError(TtransferError, ValueError):
    """An experiment configuration is invalid."""
