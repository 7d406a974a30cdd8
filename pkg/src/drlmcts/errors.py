"""Exception types raised across the package."""


class DrlMctsError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(DrlMctsError, ValueError):
    pass


class InvalidSymbolError(DrlMctsError, ValueError):
    pass


class DegenerateChannelError(DrlMctsError):
    """The real channel matrix is (numerically) rank deficient."""


class CapacityError(DrlMctsError):
    """An exhaustive search would exceed the configured search-space cap."""


class NumericalError(DrlMctsError):
    pass


class ShapeError(DrlMctsError, ValueError):
    pass


class ContractViolationError(DrlMctsError):
    """A forward cache was used against a network that changed since."""


class TrainingDivergenceError(NumericalError):
    """Non-finite loss or gradient during training.

    ``last_good`` holds the agent state from before the failing update, when
    available.
    """

    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good


class CheckpointFormatError(DrlMctsError):
    pass


class UnsupportedVersionError(CheckpointFormatError):
    pass


class CheckpointCorruptError(CheckpointFormatError):
    pass


class ConfigurationError(DrlMctsError):
    pass
