"""Datasets, input downsampling and paired full/low batch iteration.

CIFAR-10 binary batches are records of 3073 bytes: one label byte, then
1024 red, 1024 green and 1024 blue pixel bytes (row-major 32x32 planes).
"""

import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataFormatError

log = logging.getLogger(__name__)

RECORD_BYTES = 3073
CIFAR_TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR_TEST_FILE = "test_batch.bin"
NUM_CLASSES = 10
DATA_STREAM = 0x0DA7A  # keeps shuffling RNG independent of the mode RNG


# ---------------------------------------------------------------- CIFAR-10 binary format

def read_cifar_batch(path):
    """Read one binary batch file -> (uint8 images [M,3,32,32], int64 labels [M])."""
    path = Path(path)
    if not path.is_file():
        raise DataFormatError(f"missing CIFAR-10 batch file: {path}")
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % RECORD_BYTES:
        raise DataFormatError(
            f"{path}: size {raw.size} bytes is not a positive multiple of the {RECORD_BYTES}-byte record"
        )
    rec = raw.reshape(-1, RECORD_BYTES)
    labels = rec[:, 0].astype(np.int64)
    if labels.max() >= NUM_CLASSES:
        bad = int(np.argmax(labels >= NUM_CLASSES))
        raise DataFormatError(f"{path}: record {bad} has label {labels[bad]} (must be < {NUM_CLASSES})")
    return rec[:, 1:].reshape(-1, 3, 32, 32).copy(), labels


def write_cifar_batch(path, images, labels):
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels)
    if images.shape[1:] != (3, 32, 32) or len(images) != len(labels):
        raise ValueError(f"expected [M,3,32,32] images with M labels, got {images.shape} / {labels.shape}")
    rec = np.empty((len(labels), RECORD_BYTES), dtype=np.uint8)
    rec[:, 0] = labels
    rec[:, 1:] = images.reshape(len(labels), -1)
    rec.tofile(path)


def _first_per_class(labels, k):
    keep = []
    seen = np.zeros(NUM_CLASSES, dtype=np.int64)
    for i, lab in enumerate(labels):
        if seen[lab] < k:
            keep.append(i)
            seen[lab] += 1
    return np.asarray(keep, dtype=np.int64)


@dataclass
class Dataset:
    images: np.ndarray  # [M, C, H, W], channel-normalized
    labels: np.ndarray  # [M] int64
    split: str = "train"
    low: dict = field(default_factory=dict)  # DownsampleSpec.key -> [M, C, H/r, W/r]

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)

    def prepare_low(self, spec):
        """Precompute (once) the downsampled copy of every image."""
        if spec.key not in self.low:
            self.low[spec.key] = downsample_batch(self.images, spec)
        return self.low[spec.key]


def _resolve_cifar_dir(path):
    path = Path(path)
    nested = path / "cifar-10-batches-bin"
    if not (path / CIFAR_TEST_FILE).exists() and nested.is_dir():
        return nested
    return path


def load_cifar10(path, subset_per_class=None, val_per_class=None, dtype=np.float32):
    """Load train (5 batches) and val (test batch) splits.

    ``subset_per_class`` / ``val_per_class`` keep only the first k images of
    each class in file order. Both splits are normalized per channel with the
    statistics of the (possibly subset) training images.
    """
    root = _resolve_cifar_dir(path)
    parts = [read_cifar_batch(root / f) for f in CIFAR_TRAIN_FILES]
    x_tr = np.concatenate([p[0] for p in parts])
    y_tr = np.concatenate([p[1] for p in parts])
    x_va, y_va = read_cifar_batch(root / CIFAR_TEST_FILE)
    if subset_per_class:
        idx = _first_per_class(y_tr, subset_per_class)
        x_tr, y_tr = x_tr[idx], y_tr[idx]
    if val_per_class:
        idx = _first_per_class(y_va, val_per_class)
        x_va, y_va = x_va[idx], y_va[idx]
    x_tr = x_tr.astype(np.float64) / 255.0
    x_va = x_va.astype(np.float64) / 255.0
    mean = x_tr.mean(axis=(0, 2, 3), keepdims=True)
    std = x_tr.std(axis=(0, 2, 3), keepdims=True)
    train = Dataset(((x_tr - mean) / std).astype(dtype), y_tr, "train")
    val = Dataset(((x_va - mean) / std).astype(dtype), y_va, "val")
    log.info("loaded CIFAR-10 from %s: %d train / %d val", root, len(train), len(val))
    return train, val


# ---------------------------------------------------------------- synthetic stand-in

def synthetic_cifar10(out_dir, train_per_class=500, val_per_class=100, seed=0, noise=1.6):
    """Write a procedurally generated 10-class dataset in CIFAR-10 binary layout.

    Each class owns three oriented colour gratings (frequency, angle, colour
    are fixed per class). Every sample redraws the grating phases and
    amplitudes, mixes in a distractor built from another class's gratings,
    is flipped at random and buried in pixel noise, so telling classes apart
    takes orientation/frequency features rather than template matching.
    Used where the real dataset is not available.
    """
    rng = np.random.default_rng([seed, 0x5EED])
    yy, xx = np.mgrid[0:32, 0:32] / 32.0
    n_comp = 3
    freqs = rng.uniform(1.0, 5.0, size=(NUM_CLASSES, n_comp))
    thetas = rng.uniform(0, np.pi, size=(NUM_CLASSES, n_comp))
    colours = rng.normal(0, 1, size=(NUM_CLASSES, n_comp, 3))
    colours /= np.linalg.norm(colours, axis=-1, keepdims=True)

    def pattern(r, c):
        img = np.zeros((3, 32, 32))
        for j in range(n_comp):
            phase = r.uniform(0, 2 * np.pi)
            amp = r.uniform(0.3, 1.0)
            proj = xx * np.cos(thetas[c, j]) + yy * np.sin(thetas[c, j])
            img += amp * colours[c, j][:, None, None] * np.cos(2 * np.pi * freqs[c, j] * proj + phase)
        return img

    def sample(n_per_class, stream):
        r = np.random.default_rng([seed, stream])
        labels = np.repeat(np.arange(NUM_CLASSES), n_per_class)
        r.shuffle(labels)
        m = len(labels)
        out = np.empty((m, 3, 32, 32))
        others = (labels + r.integers(1, NUM_CLASSES, size=m)) % NUM_CLASSES
        blend = r.uniform(0.3, 1.0, size=m)
        flips = r.random(m) < 0.5
        for i in range(m):
            img = pattern(r, labels[i]) + blend[i] * pattern(r, others[i])
            if flips[i]:
                img = img[:, :, ::-1]
            out[i] = img
        out += noise * r.standard_normal(out.shape)
        pix = np.clip(np.round(128 + 40 * out), 0, 255).astype(np.uint8)
        return pix, labels

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    x_tr, y_tr = sample(train_per_class, 1)
    for i, chunk in enumerate(np.array_split(np.arange(len(y_tr)), len(CIFAR_TRAIN_FILES))):
        write_cifar_batch(out_dir / CIFAR_TRAIN_FILES[i], x_tr[chunk], y_tr[chunk])
    x_va, y_va = sample(val_per_class, 2)
    write_cifar_batch(out_dir / CIFAR_TEST_FILE, x_va, y_va)
    return out_dir


# ---------------------------------------------------------------- downsampling

@dataclass(frozen=True)
class DownsampleSpec:
    ratio: int = 2
    method: str = "gaussian"
    sigma: float | None = None  # default ratio / 2
    radius: int | None = None  # default ceil(2 * sigma)

    def __post_init__(self):
        if self.ratio < 2:
            raise ConfigError(f"downsampling ratio must be >= 2, got {self.ratio}", key="ratio")
        if self.method not in ("gaussian", "bilinear"):
            raise ConfigError(f"downsample method must be 'gaussian' or 'bilinear', got {self.method!r}", key="downsample")
        if self.sigma is not None and self.sigma <= 0:
            raise ConfigError(f"gaussian_sigma must be > 0, got {self.sigma}", key="gaussian_sigma")
        if self.radius is not None and self.radius < 0:
            raise ConfigError(f"gaussian_radius must be >= 0, got {self.radius}", key="gaussian_radius")

    @property
    def effective_sigma(self):
        return self.sigma if self.sigma is not None else self.ratio / 2

    @property
    def effective_radius(self):
        return self.radius if self.radius is not None else math.ceil(2 * self.effective_sigma)

    @property
    def key(self):
        return (self.ratio, self.method, self.effective_sigma, self.effective_radius)


def gaussian_taps(sigma, radius):
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    t = np.exp(-0.5 * (x / sigma) ** 2)
    return t / t.sum()


def _blur_decimate_axis(x, taps, r, axis):
    radius = len(taps) // 2
    n = x.shape[axis]
    if radius >= n:
        raise ConfigError(f"blur radius {radius} too large for extent {n}", key="gaussian_radius")
    width = [(0, 0)] * x.ndim
    width[axis] = (radius, radius)
    xp = np.pad(x, width, mode="reflect")
    xp = np.moveaxis(xp, axis, -1)
    acc = np.zeros(xp.shape[:-1] + (n // r,), dtype=np.float64)
    # output k samples blurred position k*r
    for j, t in enumerate(taps):
        acc += t * xp[..., j:j + n:r]
    return np.moveaxis(acc, -1, axis)


def _bilinear_axis(x, r, axis):
    n = x.shape[axis]
    src = (np.arange(n // r) + 0.5) * r - 0.5
    lo = np.clip(np.floor(src).astype(np.int64), 0, n - 1)
    hi = np.clip(lo + 1, 0, n - 1)
    frac = src - np.floor(src)
    a = np.take(x, lo, axis=axis)
    b = np.take(x, hi, axis=axis)
    shape = [1] * x.ndim
    shape[axis] = -1
    frac = frac.reshape(shape)
    return a * (1 - frac) + b * frac


def downsample_batch(images, spec):
    """Downsample the last two axes of ``images`` by ``spec.ratio``."""
    h, w = images.shape[-2:]
    r = spec.ratio
    if h % r or w % r:
        raise ConfigError(f"ratio {r} must divide image size {h}x{w}", key="ratio")
    x = images.astype(np.float64, copy=False)
    if spec.method == "gaussian":
        taps = gaussian_taps(spec.effective_sigma, spec.effective_radius)
        out = _blur_decimate_axis(x, taps, r, x.ndim - 2)
        out = _blur_decimate_axis(out, taps, r, x.ndim - 1)
    else:
        out = _bilinear_axis(_bilinear_axis(x, r, x.ndim - 2), r, x.ndim - 1)
    return np.ascontiguousarray(out.astype(images.dtype, copy=False))


def downsample_image(img, spec):
    """[C, H, W] -> [C, H/r, W/r]: Gaussian blur (reflect borders) then keep every r-th row/column."""
    if img.ndim != 3:
        raise ValueError(f"expected a [C, H, W] image, got shape {img.shape}")
    return downsample_batch(img, spec)


# ---------------------------------------------------------------- batching

@dataclass
class BatchPair:
    full: np.ndarray
    low: np.ndarray | None
    labels: np.ndarray
    t: int  # 1-based iteration index within the epoch


def epoch_permutation(n, seed, epoch):
    return np.random.default_rng([seed, DATA_STREAM, epoch]).permutation(n)


def epoch_iterator(dataset, batch_size, seed, epoch, spec=None):
    """Yield index-aligned full/low mini-batches for one epoch; the tail is dropped.

    The shuffle is a pure function of ``(seed, epoch)``. When ``spec`` is
    given the downsampled copies are gathered with the same permutation.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}", key="batch_size")
    low = dataset.prepare_low(spec) if spec is not None else None
    perm = epoch_permutation(len(dataset), seed, epoch)
    for t in range(len(dataset) // batch_size):
        idx = perm[t * batch_size:(t + 1) * batch_size]
        yield BatchPair(
            dataset.images[idx],
            None if low is None else low[idx],
            dataset.labels[idx],
            t + 1,
        )


def default_data_dir():
    return os.environ.get("LOWMODE_DATA_DIR")
