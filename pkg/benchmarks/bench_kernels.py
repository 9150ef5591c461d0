"""Compiled (Cython) vs numpy kernel backends.

Times each hot kernel on CIFAR-sized tensors, then one full-mode and one
low-mode training step of resnet-tiny, under both backends. Outputs are
also compared bit for bit, since the two backends share the same
accumulation order.

    python benchmarks/bench_kernels.py [--repeat 5] [--batch 125] [--json out.json]
"""

import argparse
import json
import statistics
import time

import numpy as np

from lowmode import kernels
from lowmode.nn import build_network, preset
from lowmode.trainer import TrainConfig, full_mode_step, low_mode_step


def timeit(fn, repeat):
    fn()  # warm-up
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def kernel_cases(batch, dtype):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((batch, 16, 32, 32)).astype(dtype)
    pads = (1, 1, 1, 1)
    cols = kernels.get_backend("numpy").im2col(x, 3, 1, pads)
    pool_out, arg = kernels.get_backend("numpy").maxpool_forward(x, 3, 2, pads)
    g = rng.standard_normal(pool_out.shape).astype(dtype)
    w = rng.standard_normal((64, 16, 5, 5)).astype(dtype)
    return {
        "im2col 3x3 pad1": lambda be: be.im2col(x, 3, 1, pads),
        "col2im 3x3 pad1": lambda be: be.col2im(cols, x.shape, 3, 1, pads),
        "avgpool fwd 2/2": lambda be: be.avgpool_forward(x, 2, 2, (0, 0, 0, 0)),
        "avgpool bwd 2/2": lambda be: be.avgpool_backward(g[..., :16, :16], 32, 32, 2, 2, (0, 0, 0, 0)),
        "maxpool fwd 3/2/1": lambda be: be.maxpool_forward(x, 3, 2, pads)[0],
        "maxpool bwd 3/2/1": lambda be: be.maxpool_backward(g, arg, 32, 32, 3, 2, pads),
        "kernel pool 5->3": lambda be: be.avgpool_forward(w, 2, 2, (0, 1, 0, 1)),
    }


def step_cases(batch, dtype):
    net, params = build_network(preset("resnet-tiny"), seed=0, dtype=dtype)
    rng = np.random.default_rng(1)
    x = rng.standard_normal((batch, 3, 32, 32)).astype(dtype)
    x_low = x[:, :, ::2, ::2].copy()
    y = rng.integers(0, 10, batch)
    cfg = TrainConfig(epochs=1)
    # lr=0 keeps the weights fixed so every repeat does identical work
    return {
        "resnet-tiny full step": lambda be: full_mode_step(net, params, x, y, 0.0, cfg),
        "resnet-tiny low step": lambda be: low_mode_step(net, params, x_low, y, 0.0, cfg),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=125)
    ap.add_argument("--precision", type=int, choices=(32, 64), default=32)
    ap.add_argument("--json", help="write results to this file")
    args = ap.parse_args(argv)
    dtype = np.float32 if args.precision == 32 else np.float64

    try:
        kernels.get_backend("cython")
        backends = ["cython", "numpy"]
    except ImportError:
        print("compiled kernels not built; timing the numpy backend only")
        backends = ["numpy"]
    original = kernels.BACKEND

    rows = []
    for name, fn in kernel_cases(args.batch, dtype).items():
        row = {"case": name}
        outputs = {}
        for b in backends:
            be = kernels.get_backend(b)
            row[b] = timeit(lambda: fn(be), args.repeat)
            outputs[b] = fn(be)
        if len(backends) == 2:
            row["identical"] = bool(np.array_equal(outputs["cython"], outputs["numpy"]))
        rows.append(row)
    for name, fn in step_cases(args.batch, dtype).items():
        row = {"case": name}
        for b in backends:
            kernels.use_backend(b)
            row[b] = timeit(lambda: fn(None), args.repeat)
        rows.append(row)
    kernels.use_backend(original)

    print(f"batch {args.batch}, float{args.precision}, median of {args.repeat} (seconds)")
    header = f"{'case':<24}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}{'bitwise':>9}"
    print(header)
    for r in rows:
        line = f"{r['case']:<24}" + "".join(f"{r[b]:>12.5f}" for b in backends)
        if len(backends) == 2:
            line += f"{r['numpy'] / r['cython']:>9.2f}x"
            if "identical" in r:
                line += f"{'yes' if r['identical'] else 'NO':>9}"
        print(line)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"batch": args.batch, "precision": args.precision, "rows": rows}, fh, indent=2)


if __name__ == "__main__":
    main()
