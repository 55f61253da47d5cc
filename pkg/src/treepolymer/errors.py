"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes, so anything a user can trigger from the
command line should raise one of the classes below rather than a bare
ValueError.
"""


class TreePolymerError(Exception):
    """Base class for all package errors."""


class ConfigError(TreePolymerError):
    """Invalid configuration: bad distribution parameters, flags, files."""


class DepthCapError(TreePolymerError):
    """Requested tree depth exceeds the configured cap."""


class DegenerateDisorderError(TreePolymerError):
    """An operation required sigma^2 > 0 but the weight law is degenerate."""


class NonpositiveNormalizerError(TreePolymerError):
    """The infinite-volume normalizer was <= 0 for this environment.

    Happens when the derivative-martingale approximants at the chosen depth
    are still predominantly negative; signals that the depth is too small
    for this environment, not a bug.
    """

    def __init__(self, message, normalizer=None):
        super().__init__(message)
        self.normalizer = normalizer


class RegimeError(TreePolymerError):
    """A report was requested for a weight law in the wrong disorder regime."""


class SolverError(TreePolymerError):
    """Root finding failed to converge or the bracket was invalid."""
