"""Exception types shared across the package."""


class DimensionMismatch(ValueError):
    """Vector/matrix dimensions do not agree."""


class NotPositiveDefinite(ValueError):
    """Matrix factorization hit a non-positive pivot (degenerate covariance)."""


class DomainError(ValueError):
    """Argument outside the domain of the operation."""


class InvalidData(ValueError):
    """A data record violates its declared constraints."""


class AllZero(ArithmeticError):
    """Every mixture component underflowed to zero density."""


class EmptySample(ValueError):
    """An empirical estimator received no samples."""


class MissingCDF(ValueError):
    """The target does not expose a CDF evaluator."""


class BadGrid(ValueError):
    """Raster grid has empty bounds or too few cells."""


class ConfigError(ValueError):
    """Experiment configuration is inconsistent or incomplete."""


class TargetError(RuntimeError):
    """Target log-density returned NaN."""
