"""Interleaved full/low-mode training loop, SGD, evaluation and checkpoints.

Each iteration draws a mode. Full mode runs the original network on the
original batch. Low mode refreshes the pooled kernels, runs the downsampled
batch through them, pushes the pooled-kernel gradients back onto the
original kernels and applies the same SGD update. Parameters shared by both
modes (batch-norm affine, classifier) are updated either way.

In deterministic mode BLAS is pinned to one thread and the ``wall_time_s``
column of metrics.csv carries a modeled clock (cumulative training MACs
divided by ``nominal_macs_per_s``) so that runs are bitwise reproducible;
measured times go to timing.csv.
"""

import contextlib
import json
import logging
import math
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .cost import MetricsRecord, fill_velocities, write_metrics
from .data import DownsampleSpec, epoch_iterator
from .errors import ConfigError, DataFormatError, TrainingAborted
from .schedule import LrSchedule, ModeSchedule, effective_prob, lr_at, next_mode
from .transform import refresh_if_dirty, route_gradients

log = logging.getLogger(__name__)

BACKWARD_MAC_FACTOR = 3  # forward + grad-input + grad-weight products


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 125
    momentum: float = 0.9
    weight_decay: float = 5e-4
    ratio: int = 2
    seed: int = 0
    precision: int = 32
    eval_every: int = 1
    schedule: ModeSchedule | None = None
    lr: LrSchedule = field(default_factory=lambda: LrSchedule(0.1, [(80, 0.01), (120, 0.001)]))
    downsample: DownsampleSpec | None = None
    deterministic: bool = False
    nominal_macs_per_s: float = 1e9
    eval_batch_size: int = 500

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1", key="epochs")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1", key="batch_size")
        if self.precision not in (32, 64):
            raise ConfigError("precision must be 32 or 64", key="precision")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1", key="eval_every")
        if self.momentum < 0 or self.weight_decay < 0:
            raise ConfigError("momentum and weight_decay must be >= 0", key="momentum")
        if self.schedule is None:
            self.schedule = ModeSchedule.constant(0.0, self.epochs, seed=self.seed)
        if self.schedule.epochs != self.epochs:
            raise ConfigError(f"p_low has {self.schedule.epochs} entries for {self.epochs} epochs", key="p_low")
        if self.downsample is None:
            self.downsample = DownsampleSpec(self.ratio)
        if self.downsample.ratio != self.ratio:
            raise ConfigError("downsample ratio must equal the kernel transform ratio", key="ratio")

    @property
    def dtype(self):
        return np.float32 if self.precision == 32 else np.float64


@dataclass
class TrainResult:
    history: list
    iter_times: dict  # mode -> list of seconds per iteration
    train_time_s: float
    losses: list = field(default_factory=list)

    @property
    def final_accuracy(self):
        return self.history[-1].val_accuracy

    def mean_iter_time(self, mode):
        t = self.iter_times[mode]
        return sum(t) / len(t) if t else float("nan")


# ---------------------------------------------------------------- optimizer

def sgd_step(params, grads, lr, momentum, weight_decay):
    """SGD with momentum and L2 decay, in place, for every name in ``grads``.

    v <- momentum * v + (grad + weight_decay * w);  w <- w - lr * v
    Parameters without a gradient are left untouched.
    """
    for name, g in grads.items():
        if g is None:
            continue
        p = params[name]
        d = g + weight_decay * p.value if weight_decay else g
        p.momentum *= momentum
        p.momentum += d
        p.value -= lr * p.momentum
        p.touch()


# ---------------------------------------------------------------- evaluation

def evaluate(net, params, dataset, batch_size=500):
    """Top-1 accuracy in full mode with inference-mode batch norm."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    correct = 0
    dtype = params[next(iter(params.names()))].value.dtype
    for i in range(0, len(dataset), batch_size):
        x = dataset.images[i:i + batch_size].astype(dtype, copy=False)
        logits = net.forward(params, x, "full", training=False)
        correct += int((logits.argmax(axis=1) == dataset.labels[i:i + batch_size]).sum())
    return correct / len(dataset)


# ---------------------------------------------------------------- iterations

def _deterministic_ctx(enabled):
    if not enabled:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=1)


def full_mode_step(net, params, x, labels, lr, config):
    params.zero_grad()
    with T.count_macs() as macs:
        logits = net.forward(params, x, "full", training=True)
    loss, g = T.softmax_cross_entropy(logits, labels)
    if not math.isfinite(loss):
        return loss, 0
    net.backward(params, g)
    sgd_step(params, params.grads(), lr, config.momentum, config.weight_decay)
    return loss, sum(m for _, _, m in macs)


def low_mode_step(net, params, x_low, labels, lr, config):
    params.zero_grad()
    for bank in net.banks.values():
        refresh_if_dirty(bank)
    with T.count_macs() as macs:
        logits = net.forward(params, x_low, "low", training=True)
    loss, g = T.softmax_cross_entropy(logits, labels)
    if not math.isfinite(loss):
        return loss, 0
    pooled_grads = net.backward(params, g)
    route_gradients(net.banks, params, pooled_grads)
    sgd_step(params, params.grads(), lr, config.momentum, config.weight_decay)
    return loss, sum(m for _, _, m in macs)


class _Clock:
    def __init__(self, config):
        self.deterministic = config.deterministic
        self.rate = config.nominal_macs_per_s
        self.measured = 0.0
        self.train_macs = 0

    def now(self):
        if self.deterministic:
            return self.train_macs * BACKWARD_MAC_FACTOR / self.rate
        return self.measured


def _epoch_record(epoch, clock, losses, low, full, cum_macs, acc):
    return MetricsRecord(
        epoch=epoch,
        wall_time_s=clock.now(),
        train_loss=float(np.mean(losses)) if losses else float("nan"),
        val_accuracy=acc,
        low_iters=low,
        full_iters=full,
        cum_macs=cum_macs,
    )


def _finish_epoch(history, record, out_dir, timing_rows, params, config, epoch, clock):
    history.append(record)
    fill_velocities(history)
    if out_dir is not None:
        write_metrics(out_dir / "metrics.csv", history)
        _write_timing(out_dir / "timing.csv", timing_rows)
        save_checkpoint(out_dir / "checkpoint.bin", params, epoch, history, _config_meta(config),
                        clock={"measured_time": clock.measured, "train_macs": clock.train_macs,
                               "timing": [list(r) for r in timing_rows]})


def _write_timing(path, rows):
    with open(path, "w") as fh:
        fh.write("epoch,measured_train_s,full_iters,low_iters,mean_full_iter_s,mean_low_iter_s\n")
        for r in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in r) + "\n")


def _config_meta(config):
    return {
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "seed": config.seed,
        "precision": config.precision,
        "ratio": config.ratio,
    }


def train(net, params, train_ds, val_ds, config, out_dir=None, resume=None, control=False):
    """Run training; returns a :class:`TrainResult`.

    ``control=True`` runs the plain-SGD reference loop (full mode only, no
    scheduler, no pooled kernels) used to check the interleaved loop.
    ``resume`` is a checkpoint path; training continues after its epoch.
    """
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    with _deterministic_ctx(config.deterministic):
        if control:
            return _train_plain(net, params, train_ds, val_ds, config, out_dir, resume)
        return _train_interleaved(net, params, train_ds, val_ds, config, out_dir, resume)


def _start_state(net, params, val_ds, config, clock, resume):
    if resume is not None:
        meta = load_checkpoint(resume, params)
        history = meta["history"]
        last = history[-1]
        clock.measured = meta.get("measured_time", 0.0)
        clock.train_macs = meta.get("train_macs", 0)
        timing = [tuple(r) for r in meta.get("timing", [])]
        return meta["epoch"] + 1, history, last.cum_macs, timing
    history = []
    acc = evaluate(net, params, val_ds, config.eval_batch_size)
    history.append(MetricsRecord(0, 0.0, float("nan"), acc, 0, 0, 0))
    return 1, history, 0, []


def _train_interleaved(net, params, train_ds, val_ds, config, out_dir, resume):
    sched = config.schedule
    clock = _Clock(config)
    start, history, cum_macs, timing_rows = _start_state(net, params, val_ds, config, clock, resume)
    iter_times = {"full": [], "low": []}
    all_losses = []
    if any(p > 0 for p in sched.probs):
        t0 = time.perf_counter()
        train_ds.prepare_low(config.downsample)
        # host-side image downsampling is part of the training cost
        clock.measured += time.perf_counter() - t0
    low_spec = config.downsample if any(p > 0 for p in sched.probs) else None
    dtype = config.dtype
    for epoch in range(start, config.epochs + 1):
        lr = lr_at(config.lr, epoch)
        losses, n_low, n_full = [], 0, 0
        e_times = {"full": [], "low": []}
        for batch in epoch_iterator(train_ds, config.batch_size, config.seed, epoch, low_spec):
            mode = next_mode(sched, epoch, batch.t)
            t0 = time.perf_counter()
            if mode == "low":
                loss, macs = low_mode_step(net, params, batch.low.astype(dtype, copy=False), batch.labels, lr, config)
            else:
                loss, macs = full_mode_step(net, params, batch.full.astype(dtype, copy=False), batch.labels, lr, config)
            dt = time.perf_counter() - t0
            if not math.isfinite(loss):
                raise TrainingAborted(f"non-finite loss {loss} at epoch {epoch}, iteration {batch.t} ({mode} mode)",
                                      epoch=epoch, iteration=batch.t, mode=mode)
            clock.measured += dt
            clock.train_macs += macs
            cum_macs += macs
            e_times[mode].append(dt)
            losses.append(loss)
            if mode == "low":
                n_low += 1
            else:
                n_full += 1
        for m in e_times:
            iter_times[m].extend(e_times[m])
        all_losses.extend(losses)
        timing_rows.append(_timing_row(epoch, clock.measured, n_full, n_low, e_times))
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            acc = evaluate(net, params, val_ds, config.eval_batch_size)
            rec = _epoch_record(epoch, clock, losses, n_low, n_full, cum_macs, acc)
            _finish_epoch(history, rec, out_dir, timing_rows, params, config, epoch, clock)
        log.info("epoch %d p_low=%.2f lr=%g loss=%.4f low=%d full=%d", epoch,
                 effective_prob(sched, epoch), lr, float(np.mean(losses)) if losses else float("nan"), n_low, n_full)
    return TrainResult(history, iter_times, clock.measured, all_losses)


def _train_plain(net, params, train_ds, val_ds, config, out_dir, resume):
    clock = _Clock(config)
    start, history, cum_macs, timing_rows = _start_state(net, params, val_ds, config, clock, resume)
    iter_times = {"full": [], "low": []}
    all_losses = []
    dtype = config.dtype
    for epoch in range(start, config.epochs + 1):
        lr = lr_at(config.lr, epoch)
        losses, times = [], []
        for batch in epoch_iterator(train_ds, config.batch_size, config.seed, epoch):
            t0 = time.perf_counter()
            loss, macs = full_mode_step(net, params, batch.full.astype(dtype, copy=False), batch.labels, lr, config)
            dt = time.perf_counter() - t0
            if not math.isfinite(loss):
                raise TrainingAborted(f"non-finite loss {loss} at epoch {epoch}, iteration {batch.t} (full mode)",
                                      epoch=epoch, iteration=batch.t, mode="full")
            clock.measured += dt
            clock.train_macs += macs
            cum_macs += macs
            times.append(dt)
            losses.append(loss)
        iter_times["full"].extend(times)
        all_losses.extend(losses)
        timing_rows.append(_timing_row(epoch, clock.measured, len(times), 0, {"full": times, "low": []}))
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            acc = evaluate(net, params, val_ds, config.eval_batch_size)
            rec = _epoch_record(epoch, clock, losses, 0, len(times), cum_macs, acc)
            _finish_epoch(history, rec, out_dir, timing_rows, params, config, epoch, clock)
    return TrainResult(history, iter_times, clock.measured, all_losses)


def _timing_row(epoch, measured, n_full, n_low, e_times):
    def mean(v):
        return sum(v) / len(v) if v else 0.0

    return (epoch, float(measured), n_full, n_low, float(mean(e_times["full"])), float(mean(e_times["low"])))


# ---------------------------------------------------------------- checkpoints
#
# File layout (all integers little-endian):
#   b"LMCKPT01"
#   u32 header length, UTF-8 JSON header (epoch, history, metadata)
#   u32 tensor count, then per tensor:
#     u16 name length, name (UTF-8), u8 dtype length, dtype str (e.g. "<f4"),
#     u8 ndim, ndim * u64 shape, raw little-endian data

MAGIC = b"LMCKPT01"


def _write_tensor(fh, name, arr):
    arr = np.ascontiguousarray(arr)
    le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
    nb = name.encode()
    ds = le.dtype.str.encode()
    fh.write(struct.pack("<H", len(nb)) + nb + struct.pack("<B", len(ds)) + ds)
    fh.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(le.tobytes())


def _read_exact(fh, n, path):
    b = fh.read(n)
    if len(b) != n:
        raise DataFormatError(f"{path}: truncated checkpoint")
    return b


def write_checkpoint(path, tensors, header):
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    hb = json.dumps(header).encode()
    try:
        with open(tmp, "wb") as fh:
            fh.write(MAGIC + struct.pack("<I", len(hb)) + hb + struct.pack("<I", len(tensors)))
            for name, arr in tensors.items():
                _write_tensor(fh, name, arr)
        tmp.replace(path)
    except OSError as exc:
        raise OSError(f"failed to write checkpoint {path}: {exc}") from exc


def read_checkpoint(path):
    """Returns ``(tensors, header)``."""
    tensors = {}
    with open(path, "rb") as fh:
        if _read_exact(fh, len(MAGIC), path) != MAGIC:
            raise DataFormatError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<I", _read_exact(fh, 4, path))
        header = json.loads(_read_exact(fh, hlen, path))
        (count,) = struct.unpack("<I", _read_exact(fh, 4, path))
        for _ in range(count):
            (nlen,) = struct.unpack("<H", _read_exact(fh, 2, path))
            name = _read_exact(fh, nlen, path).decode()
            (dlen,) = struct.unpack("<B", _read_exact(fh, 1, path))
            dtype = np.dtype(_read_exact(fh, dlen, path).decode())
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1, path))
            shape = struct.unpack(f"<{ndim}Q", _read_exact(fh, 8 * ndim, path))
            nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            arr = np.frombuffer(_read_exact(fh, nbytes, path), dtype=dtype).reshape(shape)
            tensors[name] = arr.astype(dtype.newbyteorder("="))
    return tensors, header


def save_checkpoint(path, params, epoch, history, meta=None, clock=None):
    tensors = {}
    for p in params:
        tensors[f"param/{p.name}"] = p.value
        tensors[f"momentum/{p.name}"] = p.momentum
    for name, buf in params.buffers.items():
        tensors[f"buffer/{name}"] = buf
    header = {
        "epoch": epoch,
        "history": [asdict(r) for r in history],
        "meta": meta or {},
        **(clock or {}),
    }
    write_checkpoint(path, tensors, header)


def load_checkpoint(path, params):
    """Restore values, momentum and buffers into ``params``; returns the header."""
    tensors, header = read_checkpoint(path)
    for p in params:
        try:
            value = tensors[f"param/{p.name}"]
            mom = tensors[f"momentum/{p.name}"]
        except KeyError:
            raise DataFormatError(f"{path}: checkpoint has no entry for parameter {p.name}") from None
        if value.shape != p.value.shape:
            raise DataFormatError(f"{path}: {p.name} has shape {value.shape}, network expects {p.value.shape}")
        p.value[...] = value
        p.momentum[...] = mom
        p.touch()
    for name in params.buffers:
        params.buffers[name][...] = tensors[f"buffer/{name}"]
    header["history"] = [MetricsRecord(**r) for r in header["history"]]
    return header
