"""Exception hierarchy shared across the package."""


class LoelError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatchError(LoelError, ValueError):
    """Inputs whose dimensions disagree with the model or each other."""


class NotPositiveDefiniteError(LoelError):
    """Covariance factorisation failed even after jitter escalation.

    Attributes
    ----------
    jitter : float
        The largest jitter that was attempted before giving up.
    """

    def __init__(self, message, jitter=0.0):
        super().__init__(message)
        self.jitter = jitter


class VarianceConsistencyError(LoelError):
    """A predictive variance came out more negative than round-off allows."""


class OptimizationFailedError(LoelError):
    """The swarm never saw a finite objective value."""


class DegenerateSignalError(LoelError):
    """A waveform with no variation; onset picking is meaningless."""


class IncompleteEventError(LoelError):
    """An event is missing the onset estimate for one or more sensors."""


class InvalidLocationError(LoelError):
    """A point outside the plate or inside a hole."""


class TriangulationError(LoelError):
    """Training locations too degenerate to triangulate."""


class LocalizationError(LoelError):
    """No admissible candidate location (e.g. empty in-hull grid)."""


class DataFormatError(LoelError):
    """Malformed input file.  Carries a 1-based line number when known."""

    def __init__(self, message, path=None, line=None):
        prefix = ""
        if path is not None:
            prefix = f"{path}:"
            if line is not None:
                prefix += f"{line}:"
            prefix += " "
        super().__init__(prefix + message)
        self.path = path
        self.line = line
