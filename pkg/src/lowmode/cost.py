"""Static cost model, expected training cost, velocity and the metrics file.

Costs are counted in multiply-accumulates (1 MAC = 2 FLOPs). A conv layer
costs ``K^2 * C_in * H_out * W_out * C_out`` MACs per image; a linear layer
``D_in * D_out``. Batch norm, ReLU, pooling and residual adds are tallied
separately as elementwise ops.
"""

import csv
import dataclasses
import io
import json
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction

from .errors import ConfigError
from .nn import MODES, build_graph
from .schedule import effective_prob


@dataclass
class LayerCost:
    layer: str
    kind: str
    mode: str
    in_shape: tuple
    out_shape: tuple
    macs: int
    other_ops: int
    activation_bytes: int
    param_count: int
    kernel_size: int = 0
    transformed: bool = False
    cascade: Fraction | None = None  # full-mode / low-mode output height


@dataclass
class CostReport:
    network: str
    itemsize: int
    batch: int
    layers: dict  # mode -> [LayerCost]

    def total(self, mode, kind=None):
        return self.batch * sum(c.macs for c in self.layers[mode] if kind is None or c.kind == kind)

    def conv_macs(self, mode):
        return self.total(mode, "conv")

    def other_ops(self, mode):
        return self.batch * sum(c.other_ops for c in self.layers[mode])

    def activation_bytes(self, mode):
        return self.batch * sum(c.activation_bytes for c in self.layers[mode])

    @property
    def conv_ratio(self):
        """Low-mode conv MACs as a fraction of full-mode conv MACs."""
        return self.conv_macs("low") / self.conv_macs("full")

    def conv_pairs(self):
        """``(full, low)`` LayerCost pairs for every conv layer."""
        low = {c.layer: c for c in self.layers["low"] if c.kind == "conv"}
        return [(c, low[c.layer]) for c in self.layers["full"] if c.kind == "conv"]

    def per_iteration_macs(self):
        return {m: self.total(m) for m in MODES}


def _cost_of(info, mode, itemsize):
    out_elems = 1
    for d in info.out_shape:
        out_elems *= d
    macs = other = 0
    k = 0
    if info.kind == "conv":
        g = info.geometry
        k = g.kernel_size
        _, ho, wo = info.out_shape
        macs = k * k * g.in_channels * ho * wo * g.out_channels
    elif info.kind == "linear":
        macs = info.in_shape[0] * info.out_shape[0]
    elif info.kind in ("maxpool", "avgpool"):
        other = out_elems * info.window * info.window
    elif info.kind == "global_avgpool":
        other = 1
        for d in info.in_shape:
            other *= d
    else:
        other = out_elems
    return LayerCost(
        layer=info.name,
        kind=info.kind,
        mode=mode,
        in_shape=tuple(info.in_shape),
        out_shape=tuple(info.out_shape),
        macs=macs,
        other_ops=other,
        activation_bytes=out_elems * itemsize,
        param_count=info.param_count,
        kernel_size=k,
        transformed=info.transformed,
    )


def cost_report(spec, transform=None, input_size=None, batch=1, itemsize=4):
    """Per-layer costs of one forward pass in each mode.

    Low mode uses the downsampled input, pooled kernels for transformable
    convs and skips layers flagged ``skip_in_low``. Totals scale by ``batch``.
    """
    if input_size is not None:
        spec = dataclasses.replace(spec, input_size=input_size)
    graph = build_graph(spec, transform)
    layers = {}
    for mode in MODES:
        infos, _ = graph.walk(mode)
        layers[mode] = [_cost_of(i, mode, itemsize) for i in infos]
    full_h = {c.layer: c.out_shape[1] for c in layers["full"] if c.kind == "conv"}
    for c in layers["low"]:
        if c.kind == "conv":
            c.cascade = Fraction(full_h[c.layer], c.out_shape[1])
    for c in layers["full"]:
        if c.kind == "conv":
            c.cascade = Fraction(1)
    return CostReport(spec.name, itemsize, batch, layers)


def expected_training_cost(costs, schedule, iters_per_epoch):
    """Expected MACs of each epoch: iters * (p_e * low + (1 - p_e) * full).

    ``costs`` is a :class:`CostReport` or a ``(full, low)`` per-iteration pair.
    """
    if isinstance(costs, CostReport):
        full, low = costs.total("full"), costs.total("low")
    else:
        full, low = costs
    out = []
    for e in range(1, schedule.epochs + 1):
        p = effective_prob(schedule, e)
        out.append(iters_per_epoch * (p * low + (1 - p) * full))
    return out


def format_report(report, schedule=None, iters_per_epoch=None):
    """Aligned text table of per-layer conv/linear costs in both modes."""
    buf = io.StringIO()
    low = {c.layer: c for c in report.layers["low"]}
    rows = [(c, low.get(c.layer)) for c in report.layers["full"] if c.kind in ("conv", "linear")]
    name_w = max([len("layer")] + [len(c.layer) for c, _ in rows])
    buf.write(f"network {report.network}, batch {report.batch}\n")
    buf.write(f"{'layer':<{name_w}}  {'K':>2} {'K_low':>5}  {'full MACs':>14}  {'low MACs':>14}  {'reduction':>9}\n")
    for f, lo in rows:
        lo_macs = lo.macs if lo else 0
        red = f"{f.macs / lo_macs:.2f}x" if lo_macs else "-"
        buf.write(
            f"{f.layer:<{name_w}}  {f.kernel_size or '-':>2} {(lo.kernel_size if lo else 0) or '-':>5}  "
            f"{f.macs * report.batch:>14,}  {lo_macs * report.batch:>14,}  {red:>9}\n"
        )
    for mode in MODES:
        macs = report.total(mode)
        buf.write(
            f"total {mode:<4}: {macs:,} MACs ({2 * macs:,} FLOPs), conv {report.conv_macs(mode):,} MACs, "
            f"elementwise {report.other_ops(mode):,} ops\n"
        )
    buf.write(f"low/full conv MAC ratio: {report.conv_ratio:.4f}\n")
    if schedule is not None and iters_per_epoch:
        per_epoch = expected_training_cost(report, schedule, iters_per_epoch)
        full = iters_per_epoch * report.total("full") * schedule.epochs
        buf.write(f"expected training MACs: {sum(per_epoch):,.0f} (all-full: {full:,}; ratio {sum(per_epoch) / full:.4f})\n")
    return buf.getvalue()


def report_to_json(report):
    def row(c):
        d = dataclasses.asdict(c)
        d["cascade"] = None if c.cascade is None else str(c.cascade)
        return d

    return json.dumps(
        {
            "network": report.network,
            "batch": report.batch,
            "layers": {m: [row(c) for c in report.layers[m]] for m in MODES},
            "totals": {m: report.total(m) for m in MODES},
            "conv_ratio": report.conv_ratio,
        },
        indent=2,
    )


# ---------------------------------------------------------------- velocity

def _dec(x):
    return Decimal(repr(float(x)))


def raw_velocities(accuracies, times):
    """(A' - A) / (tau' - tau) between consecutive records.

    The arithmetic is done in decimal on the values as recorded (their
    shortest repr, which is what metrics.csv stores) and rounded to float
    once, so e.g. A = [0.1, 0.2, 0.3] at tau = [0, 10, 20] gives exactly 0.01
    twice instead of picking up binary representation error.
    """
    if len(accuracies) != len(times) or len(times) < 2:
        raise ValueError("need at least two (accuracy, time) records of equal length")
    for a, b in zip(times, times[1:]):
        if not b > a:
            raise ValueError(f"wall times must be strictly increasing, got {a} then {b}")
    return [
        float((_dec(a1) - _dec(a0)) / (_dec(t1) - _dec(t0)))
        for a0, a1, t0, t1 in zip(accuracies, accuracies[1:], times, times[1:])
    ]


def moving_average(values, window=3):
    """Centered moving average; the edges average whatever neighbours exist."""
    half = window // 2
    n = len(values)
    out = []
    for i in range(n):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        out.append(sum(values[lo:hi]) / (hi - lo))
    return out


def velocity_series(records, window_epochs=3, accuracies=None):
    """Smoothed velocity per consecutive pair of records.

    ``records`` is a list of :class:`MetricsRecord`, or a list of wall times
    when ``accuracies`` is passed separately.
    """
    if accuracies is None:
        times = [r.wall_time_s for r in records]
        accuracies = [r.val_accuracy for r in records]
    else:
        times = list(records)
    return moving_average(raw_velocities(accuracies, times), window_epochs)


# ---------------------------------------------------------------- metrics.csv

METRICS_COLUMNS = ("epoch", "wall_time_s", "train_loss", "val_accuracy", "low_iters", "full_iters", "cum_macs", "velocity")


@dataclass
class MetricsRecord:
    epoch: int
    wall_time_s: float
    train_loss: float
    val_accuracy: float
    low_iters: int
    full_iters: int
    cum_macs: int
    velocity: float = 0.0


def fill_velocities(records, window_epochs=3):
    """Set each record's velocity (record 0 stays 0.0)."""
    if len(records) >= 2:
        for r, v in zip(records[1:], velocity_series(records, window_epochs)):
            r.velocity = v
    return records


def format_metrics(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_COLUMNS)
    for r in records:
        w.writerow([
            r.epoch, repr(float(r.wall_time_s)), repr(float(r.train_loss)), repr(float(r.val_accuracy)),
            r.low_iters, r.full_iters, r.cum_macs, repr(float(r.velocity)),
        ])
    return buf.getvalue()


def parse_metrics(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != METRICS_COLUMNS:
        raise ConfigError(f"metrics header must be {','.join(METRICS_COLUMNS)}")
    out = []
    for row in rows[1:]:
        e, t, loss, acc, lo, fu, macs, v = row
        out.append(MetricsRecord(int(e), float(t), float(loss), float(acc), int(lo), int(fu), int(macs), float(v)))
    return out


def write_metrics(path, records):
    with open(path, "w", newline="") as fh:
        fh.write(format_metrics(records))


def read_metrics(path):
    with open(path) as fh:
        return parse_metrics(fh.read())
