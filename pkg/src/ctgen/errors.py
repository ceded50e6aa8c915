"""Exception taxonomy shared by all modules."""


class CtgenError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(CtgenError):
    """Tensor shapes are incompatible with the requested operation."""


class ConfigError(CtgenError):
    """A configuration value or precondition on settings is invalid."""


class DomainError(CtgenError):
    """Input values lie outside the mathematical domain of an operation."""


class StateError(CtgenError):
    """An object is in the wrong state (consumed tape, missing gradient)."""


class ContractError(CtgenError):
    """A caller-supplied object violates its contract (non-scalar loss,
    non-deterministic function under finite differencing)."""


class FormatError(CtgenError):
    """An input file is not in a supported format."""


class NumericalError(CtgenError):
    """Training produced a non-finite quantity."""
