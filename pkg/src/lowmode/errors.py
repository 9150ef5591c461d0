"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Tensor dimensions do not agree with what an operation expects."""


class GeometryError(ValueError):
    """A convolution/pooling geometry yields an empty or impossible output."""


class ConfigError(ValueError):
    """Invalid configuration value. ``key`` names the offending setting."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class ModeError(RuntimeError):
    """Forward pass requested in a mode the network is not prepared for."""


class StateError(RuntimeError):
    """Operation called out of order (e.g. backward without forward)."""


class DataFormatError(OSError):
    """Dataset file is missing, truncated or holds out-of-range values."""


class TrainingAborted(RuntimeError):
    """Training stopped on a non-finite loss."""

    def __init__(self, message, epoch=None, iteration=None, mode=None):
        super().__init__(message)
        self.epoch = epoch
        self.iteration = iteration
        self.mode = mode
