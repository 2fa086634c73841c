"""Exception types shared across the package."""


class ApfxError(Exception):
    """Base class for package errors."""


class ShapeMismatchError(ApfxError, ValueError):
    """Ensembles or boxes with incompatible grids, scenario counts or dimensions."""


class DimensionMismatchError(ApfxError, ValueError):
    """Operator parts whose state/driver dimensions do not line up."""


class DivisibilityError(ApfxError, ValueError):
    """Projection level n does not divide the grid step count N."""


class UnknownPresetError(ApfxError, ValueError):
    """Problem preset name not in the registry."""


class OperatorEvalError(ApfxError, RuntimeError):
    """A coefficient or custom rule failed or produced non-finite values.

    Carries the first offending (scenario, node) location when known.
    """

    def __init__(self, message: str, scenario: int | None = None, node: int | None = None):
        loc = ""
        if scenario is not None:
            loc = f" at scenario={scenario}, node={node}"
        super().__init__(message + loc)
        self.scenario = scenario
        self.node = node


class ConfigError(ApfxError, ValueError):
    """Invalid experiment configuration."""


class DegenerateDataError(ApfxError, ValueError):
    """Probe inputs too degenerate to run a diagnostic."""
