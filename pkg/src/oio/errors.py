"""Exception types shared across the package."""


class OioError(Exception):
    """Base class for all package errors."""


class ConfigurationError(OioError, ValueError):
    """Invalid configuration or malformed input to an operation."""


class DomainError(OioError, ValueError):
    """Input outside the domain where a model equation is defined."""


class NotReadyError(OioError, RuntimeError):
    """A sensor was sampled before its warm-up finished."""


class EstimationError(OioError, ValueError):
    """A fit could not be computed from the supplied data."""


class DegenerateGeometryError(OioError, ValueError):
    """Sphere configuration has no unique solution (coincident or collinear centers)."""


class NoLandmarkError(OioError, LookupError):
    """The landmark bank is empty."""
