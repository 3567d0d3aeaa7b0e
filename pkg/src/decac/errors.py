"""Exception hierarchy shared across the package."""


class DecacError(Exception):
    """Base class for all package errors."""


class ConfigError(DecacError, ValueError):
    """Invalid dimensions, unknown modes or malformed configuration."""


class CapacityError(DecacError, RuntimeError):
    """A tabular construction or enumeration would exceed its size cap."""


class TopologyError(DecacError, ValueError):
    """Communication graph or weight matrix violates the consensus requirements."""


class MixingError(DecacError, RuntimeError):
    """Power iteration for a stationary distribution failed to converge."""


class AssumptionViolation(DecacError, RuntimeError):
    """A per-policy check of a structural assumption failed."""

    def __init__(self, assumption, message):
        super().__init__(f"{assumption}: {message}")
        self.assumption = assumption
