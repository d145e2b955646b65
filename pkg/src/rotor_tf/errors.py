"""Exception types raised across the package."""


class RotorError(ValueError):
    """Base class for domain errors."""


class BesselDomainError(RotorError):
    pass


class WindowError(RotorError):
    """Truncation window too narrow, mismatched, or overflowed."""


class DegenerateStateError(RotorError):
    """|<E>| vanishes (or Delta L = 0) so a normalized quantity is undefined."""


class GridError(RotorError):
    """Non-uniform or under-resolved quadrature grid."""


class QuadratureError(RotorError):
    pass


class ConfigError(RotorError):
    pass
