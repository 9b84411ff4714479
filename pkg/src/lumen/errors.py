"""Exception taxonomy shared by all lumen modules."""


class LumenError(Exception):
    """Base class for all errors raised by lumen."""


class ConfigError(LumenError):
    """Invalid configuration value (bad fraction, missing material, ...)."""


class DataError(LumenError):
    """Input data is unusable (empty manifest, empty candidate bank, ...)."""


class ShapeError(LumenError):
    """Array/tensor shapes do not match the operation's contract."""


class FormatError(LumenError):
    """A file does not conform to its on-disk format (PFM, weights, manifest)."""


class StateError(LumenError):
    """Operation called in an invalid order (backward twice, exhausted schedule)."""


class NumericError(LumenError):
    """A numeric failure: NaN loss, degenerate exposure, diverged solve."""


class DegenerateExposureError(NumericError):
    """Tone-map anchor has an all-black percentile; no exposure can be derived."""


class InvalidDirectionError(LumenError, ValueError):
    """A direction vector is too far from unit length."""
