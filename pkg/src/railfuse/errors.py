"""Exception types raised across the package."""


class RailfuseError(Exception):
    """Base class for all package errors."""


class ShapeError(RailfuseError, ValueError):
    pass


class NonFiniteError(RailfuseError, FloatingPointError):
    """An operation produced NaN or Inf."""


class TaxonomyError(RailfuseError, ValueError):
    pass


class PlacementError(RailfuseError, RuntimeError):
    """Boxes could not be placed in a scene within the retry budget."""


class CorruptFileError(RailfuseError, ValueError):
    pass


class ConfigError(RailfuseError, ValueError):
    pass
