"""Exception types shared across the package.

Everything user-facing derives from ValueError so that callers who do not
care about the fine distinctions can catch one base class; NumericalFailure
is a RuntimeError because it signals a backend problem, not a bad argument.
"""


class DimensionError(ValueError):
    """Incompatible or invalid matrix dimensions."""


class DegenerateCloudError(ValueError):
    """A cloud (or submatrix) is rank deficient where full rank is required."""


class NotPSDError(ValueError):
    """A matrix required to be positive semidefinite has a clearly negative eigenvalue."""


class ResourceLimitError(ValueError):
    """A requested computation exceeds a documented size guard."""


class ConfigError(ValueError):
    """A configuration document is malformed or contains unknown keys."""


class NumericalFailure(RuntimeError):
    """A numerical backend returned a result that fails its own residual check."""
