"""Exception types shared across the package.

ConfigError maps to CLI exit code 3, numerical failures (blow-up,
degenerate estimators) to exit code 2. Keeping them in one module avoids
import cycles between the layers that raise and the CLI that catches.
"""


class ConfigError(ValueError):
    """Invalid configuration: bad parameter values, malformed config files."""


class ContractViolationError(ValueError):
    """An input violates a documented precondition (e.g. a non-convex convex part)."""


class BlowUpError(RuntimeError):
    """A trajectory left the stable region; carries the step index."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DegenerateEstimateError(RuntimeError):
    """Importance-sampling weights collapsed; the estimate is unusable."""
