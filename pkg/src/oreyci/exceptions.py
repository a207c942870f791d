"""Exception types raised by :mod:`oreyci`."""


class OreyError(Exception):
    """Base class for all package errors."""


class InvalidParameter(OreyError, ValueError):
    """A process or grid parameter violates its validity rules."""


class InvalidK(InvalidParameter):
    pass


class InvalidHstar(InvalidParameter):
    pass


class UnsupportedKernel(OreyError):
    """No closed-form covariance is available for this process (fO-U)."""


class EmbeddingFailure(OreyError):
    """Circulant embedding produced nonpositive eigenvalues at the size cap."""


class NotPositiveDefinite(OreyError):
    pass


class PathTooShort(OreyError, ValueError):
    pass


class NoConvergence(OreyError):
    pass


class GridTooCoarse(OreyError, ValueError):
    """Raised when ``n <= T``; the index map is then not a bijection."""


class NegativeInput(OreyError, ValueError):
    pass


class DegenerateStatistic(OreyError):
    """The quadratic-variation statistic is zero (constant or affine path)."""


class MissingCell(OreyError, KeyError):
    pass


class MalformedPath(OreyError, ValueError):
    """A path file could not be read as a finite, uniform-grid sample."""
