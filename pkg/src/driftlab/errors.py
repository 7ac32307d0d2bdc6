"""Exception types shared across the package."""


class DriftlabError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(DriftlabError):
    """A config file, spec, or argument combination is invalid."""


class InputError(DriftlabError):
    """Numeric input data violates a precondition (bad samples, shapes)."""


class ResourceLimitError(DriftlabError):
    """A requested allocation exceeds the configured storage budget."""


class UnsupportedRegimeError(DriftlabError):
    """Operation requires a drift regime (e.g. globally Lipschitz) that the
    supplied drift does not satisfy."""


class UnsupportedDimensionError(DriftlabError):
    """Operation is only implemented for dimensions 1 or 2."""


class DegenerateWeightsError(DriftlabError):
    """Importance weights are too degenerate to support the estimate."""
