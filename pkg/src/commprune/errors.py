"""Exception types shared across the package."""


class CommPruneError(Exception):
    """Base class for all package errors."""


class TopologyError(CommPruneError):
    """Invalid topology construction or incompatible matrices."""


class ConfigurationError(CommPruneError):
    """Bad run configuration: missing agents, empty task sets, unknown backends."""


class CorruptStateError(CommPruneError):
    """Matrices violated an invariant (e.g. logits outside [0, 1])."""


class NumericalError(CommPruneError):
    """Non-finite values or a failed matrix decomposition."""


class TrainingDiverged(CommPruneError):
    """Objective became non-finite; the last checkpoint is retained."""
