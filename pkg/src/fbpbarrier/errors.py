"""Exception hierarchy shared by all modules."""


class FbpError(Exception):
    """Base class for errors raised by this package."""


class DomainError(FbpError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class GridMismatchError(FbpError, ValueError):
    """Two profiles live on grids with different cell widths."""


class OrderError(FbpError, ValueError):
    """A mass-transport order precondition does not hold."""


class ConfigurationError(FbpError, ValueError):
    """Numerical configuration (grid size, step count, ...) is unusable."""


class ConvergenceError(FbpError, RuntimeError):
    """Dyadic refinement stopped before reaching the requested gap.

    The best bracket found so far is kept on the exception so callers can
    still report it.
    """

    def __init__(self, message, achieved_gap, best=None):
        super().__init__(message)
        self.achieved_gap = achieved_gap
        self.best = best


class VelocitySearchError(FbpError, RuntimeError):
    """No edge velocity reproducing the target mass loss could be bracketed."""

    def __init__(self, message, samples=()):
        super().__init__(message)
        self.samples = list(samples)
