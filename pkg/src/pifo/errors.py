"""Exception types raised across the package."""


class PifoError(Exception):
    pass


class ShapeError(PifoError, ValueError):
    pass


class UsageError(PifoError, RuntimeError):
    pass


class StateError(PifoError, RuntimeError):
    pass


class ConfigError(PifoError, ValueError):
    pass


class EvaluationError(PifoError, ValueError):
    pass


class NonFiniteError(PifoError, FloatingPointError):
    """A loss or reward turned NaN/Inf during training."""


class CheckpointError(PifoError, IOError):
    pass


class BadMagicError(CheckpointError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass


class TruncatedFileError(CheckpointError):
    pass
