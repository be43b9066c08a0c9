"""Exception hierarchy shared by the numerical modules and the CLI."""


class KaefamError(Exception):
    """Base class for all package errors."""


class ParseError(KaefamError, ValueError):
    """Malformed potential expression; ``position`` is the 0-based offset."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class KahlerClassViolation(KaefamError):
    """The fiber component of the twist has non-positive mean."""


class ConvergenceFailure(KaefamError):
    """An iterative solver did not reach its tolerance.

    ``history`` holds the residual sup-norms seen so far.
    """

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class ConditioningFailure(KaefamError):
    """Gram matrix too ill-conditioned to factor; ``degree`` is the first bad monomial."""

    def __init__(self, message, degree):
        super().__init__(message)
        self.degree = degree


class SemiPositivityViolation(KaefamError):
    """The twist form fails the sampled positive-semidefiniteness check."""


class ConfigError(KaefamError, ValueError):
    """Invalid run configuration; the message names the key and the constraint."""
