"""Exception hierarchy shared across the package."""


class BessoptError(Exception):
    """Base class for all package errors."""


class ParameterError(BessoptError):
    """Invalid physical or configuration parameter."""


class DomainError(BessoptError):
    """Operation evaluated outside its valid input domain."""


class InfeasibleDrawError(DomainError):
    """Requested terminal power exceeds what the cell can deliver."""


class ModelError(BessoptError):
    """Inconsistent optimization model construction."""


class SolverError(BessoptError):
    """External solver invocation or solution parsing failed."""


class ExtractionError(BessoptError):
    """Solver output violates the structure the model guarantees."""


class ConfigError(BessoptError):
    """Malformed or missing configuration input."""
