"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A physical or protocol parameter is outside its valid domain."""


class ConfigError(ValueError):
    """A run configuration could not be parsed or validated."""


class SyncLostError(RuntimeError):
    """Timetag alignment found no statistically significant coincidence peak."""


class BracketError(RuntimeError):
    """A root bracket for the loss-cutoff search is invalid."""
