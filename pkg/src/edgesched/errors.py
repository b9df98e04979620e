"""Exception types shared across the library."""


class EdgeSchedError(Exception):
    """Base class for all library errors."""


class DimensionError(EdgeSchedError):
    """Frame geometry incompatible with the requested coarse-graining."""


class RangeError(EdgeSchedError):
    """Input value outside its documented domain (non-finite, wrong range)."""


class ShapeError(EdgeSchedError):
    """Mismatched array shapes in the sequence model."""


class DomainError(EdgeSchedError):
    """Argument outside a function's mathematical domain."""


class DivergenceError(EdgeSchedError):
    """Training loss became non-finite."""


class EmptyHistoryError(EdgeSchedError):
    """An aggregate over slot history was requested with no slots."""


class NoServerError(EdgeSchedError):
    """Server catalog lacks a required tier (edge pool or the cloud server)."""


class MismatchError(EdgeSchedError):
    """Outcome and allocation scheme do not describe the same task set."""


class ConfigError(EdgeSchedError):
    """Invalid or inconsistent run configuration."""


class EmptyTraceError(EdgeSchedError):
    """Metric aggregation was requested over an empty trace."""


class IncomparableError(EdgeSchedError):
    """Reports from different scenarios cannot be compared."""
