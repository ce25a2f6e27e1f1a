"""Exception types shared across the package."""


class CosmicError(Exception):
    """Base class for all errors raised by this package."""


class DatasetFormatError(CosmicError):
    """A dataset file is missing, malformed, or inconsistent.

    Carries the offending file and, when known, the 1-based line number.
    """

    def __init__(self, path, message, line=None):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


class SplitError(CosmicError):
    """Class split violates disjointness or references unknown classes."""


class ConvergenceError(CosmicError):
    """An iterative solver failed to reach its tolerance."""


class InfeasibleTaskError(CosmicError):
    """No admissible N-way K-shot task exists for the requested counts."""


class NonFiniteError(CosmicError):
    """A loss or gradient became NaN/Inf; the episode is aborted."""


class CheckpointError(CosmicError):
    """Checkpoint file is corrupt or does not match the expected shapes."""


class ConfigError(CosmicError):
    """Invalid configuration or command-line usage."""
