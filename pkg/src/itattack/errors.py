"""Exception types shared across the toolkit."""


class ShapeError(ValueError):
    """Tensor dimensions are inconsistent with what an operation requires."""


class ConfigError(ValueError):
    """A configuration value violates its contract."""


class CapabilityError(RuntimeError):
    """An operation was requested from an object that cannot provide it."""


class TransportError(RuntimeError):
    """A remote oracle could not be reached or returned a malformed response.

    Distinct from budget exhaustion, which is an expected control-flow signal.
    """
