"""Interleaved full/low-resolution CNN training on numpy.

Low-mode iterations run a downsampled batch through average-pooled copies of
the convolution kernels and push the resulting gradients back onto the
original kernels; full-mode iterations train the network as usual.

Modules
  tensor     conv / pooling / batch-norm / loss kernels with backward passes
  kernels    compiled (Cython) or numpy backend for the hot loops
  nn         layers, residual blocks, presets, forward/backward over a graph
  transform  kernel pooling T and its gradient routing
  data       CIFAR-10 binary I/O, synthetic data, input downsampling, batches
  schedule   per-iteration mode selection and learning-rate steps
  trainer    training loop, SGD, evaluation, checkpoints
  cost       MAC accounting, expected training cost, velocity, metrics.csv
  config     flat JSON run configuration
  verify     finite-difference and chained-update gradient suites
  cli        ``lowmode`` command
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DataFormatError,
    GeometryError,
    ModeError,
    ShapeError,
    StateError,
    TrainingAborted,
)
from .kernels import BACKEND  # noqa: E402

__all__ = [
    "BACKEND",
    "ConfigError",
    "DataFormatError",
    "GeometryError",
    "ModeError",
    "ShapeError",
    "StateError",
    "TrainingAborted",
    "__version__",
]
