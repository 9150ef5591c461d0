"""Command-line entry point: ``lowmode {train,analyze,verify,eval}``.

Exit codes
  0  success
  1  verify: at least one suite failed
  2  invalid configuration, unknown preset, or unreadable data/checkpoint
  3  training aborted on a non-finite loss

The CIFAR-10 directory can be given with ``--data-dir``, the ``data_dir``
config key, or the ``LOWMODE_DATA_DIR`` environment variable (which wins).
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .cost import cost_report, format_report, report_to_json
from .data import load_cifar10, synthetic_cifar10
from .errors import ConfigError, DataFormatError, TrainingAborted
from .nn import build_network

EXIT_OK, EXIT_VERIFY_FAILED, EXIT_INVALID, EXIT_ABORTED = 0, 1, 2, 3

log = logging.getLogger("lowmode")


def _config_from_args(args):
    overrides = list(args.set or [])
    for flag, key in (("data_dir", "data_dir"), ("subset_per_class", "subset_per_class"),
                      ("downsample", "downsample"), ("out", "out_dir")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides.append(f"{key}={json.dumps(value)}")
    if getattr(args, "deterministic", False):
        overrides.append("deterministic=true")
    return load_config(args.config, overrides)


def load_datasets(cfg, scratch_dir=None):
    """(train, val) datasets for a validated RunConfig."""
    dtype = np.float32 if cfg["precision"] == 32 else np.float64
    if cfg["dataset"] == "synthetic":
        per_class = cfg["subset_per_class"] or 500
        val_per_class = cfg["val_per_class"] or 100
        root = Path(cfg.resolved_data_dir() or Path(scratch_dir or ".") / "synthetic-data")
        if not (root / "test_batch.bin").exists():
            log.info("writing synthetic CIFAR-format data to %s", root)
            synthetic_cifar10(root, per_class, val_per_class, seed=cfg["synthetic_seed"])
        return load_cifar10(root, per_class, val_per_class, dtype=dtype)
    path = cfg.resolved_data_dir()
    if path is None:
        raise ConfigError("no CIFAR-10 directory: pass --data-dir, set data_dir, or export LOWMODE_DATA_DIR",
                          key="data_dir")
    return load_cifar10(path, cfg["subset_per_class"], cfg["val_per_class"], dtype=dtype)


def cmd_train(args):
    cfg = _config_from_args(args)
    out = Path(cfg["out_dir"] or "runs/latest")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json() + "\n")
    train_ds, val_ds = load_datasets(cfg, out)
    from .trainer import train

    tc = cfg.train_config()
    net, params = build_network(cfg.network_spec(), seed=cfg["seed"], transform=cfg.transform_spec(), dtype=tc.dtype)
    log.info("training %s on %d images (%d val), %d epochs, out=%s", cfg["preset"], len(train_ds), len(val_ds),
             tc.epochs, out)
    result = train(net, params, train_ds, val_ds, tc, out_dir=out, resume=args.resume, control=args.control)
    last = result.history[-1]
    print(f"epoch {last.epoch}: val_accuracy={last.val_accuracy:.4f} wall_time_s={last.wall_time_s:.3f} "
          f"low_iters={sum(r.low_iters for r in result.history)} full_iters={sum(r.full_iters for r in result.history)}")
    print(f"metrics: {out / 'metrics.csv'}")
    return EXIT_OK


def cmd_analyze(args):
    cfg = _config_from_args(args)
    report = cost_report(cfg.network_spec(), cfg.transform_spec(), batch=args.batch)
    iters = args.iters_per_epoch
    if iters is None and cfg["subset_per_class"]:
        iters = cfg["subset_per_class"] * cfg["num_classes"] // cfg["batch_size"]
    sys.stdout.write(format_report(report, cfg.mode_schedule(), iters))
    if args.json:
        Path(args.json).write_text(report_to_json(report) + "\n")
    return EXIT_OK


def cmd_verify(args):
    from . import verify

    ops = verify.with_fault(args.inject_fault) if args.inject_fault else None
    results = verify.run_all(seeds=args.seeds, ops=ops, presets=not args.quick)
    print(verify.format_results(results))
    ok = all(r.passed or r.note == "unavailable" for r in results)
    return EXIT_OK if ok else EXIT_VERIFY_FAILED


def cmd_eval(args):
    from .trainer import evaluate, load_checkpoint

    cfg = _config_from_args(args)
    _, val_ds = load_datasets(cfg, Path(args.checkpoint).parent)
    net, params = build_network(cfg.network_spec(), seed=cfg["seed"], transform=cfg.transform_spec(),
                                dtype=np.float32 if cfg["precision"] == 32 else np.float64)
    header = load_checkpoint(args.checkpoint, params)
    acc = evaluate(net, params, val_ds, cfg["eval_batch_size"])
    print(f"checkpoint epoch {header['epoch']}: val_accuracy={acc:.4f} ({len(val_ds)} images)")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="lowmode", description="Interleaved full/low-resolution CNN training.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def config_args(p, required=False):
        p.add_argument("--config", required=required, help="JSON run config (flat key/value object)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")

    def data_args(p):
        p.add_argument("--data-dir", help="CIFAR-10 binary directory (LOWMODE_DATA_DIR takes precedence)")
        p.add_argument("--subset-per-class", type=int, help="first k training images of each class")
        p.add_argument("--downsample", choices=("gaussian", "bilinear"))

    p = sub.add_parser("train", help="run training, writing metrics.csv, timing.csv and checkpoint.bin")
    config_args(p, required=True)
    data_args(p)
    p.add_argument("--out", help="output directory")
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded BLAS and a modeled clock; reruns are bit-identical")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--control", action="store_true", help="plain SGD reference loop (full mode only)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("analyze", help="print per-layer MAC costs in both modes")
    config_args(p)
    p.add_argument("--batch", type=int, default=1, help="images per iteration for the totals")
    p.add_argument("--iters-per-epoch", type=int, help="iterations per epoch for the expected training cost")
    p.add_argument("--json", help="also write the report as JSON to this file")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("verify", help="run the gradient-check and chained-update suites")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--quick", action="store_true", help="skip the deep-preset gradient checks")
    p.add_argument("--inject-fault", metavar="OP", help="negate one op's output (negative control)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("eval", help="accuracy of a checkpoint on the validation split")
    config_args(p, required=True)
    data_args(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if getattr(args, "inject_fault", None):
        from .verify import default_ops

        if args.inject_fault not in default_ops():
            print(f"error: unknown op {args.inject_fault!r}", file=sys.stderr)
            return EXIT_INVALID
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error [{exc.key}]: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except TrainingAborted as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED


if __name__ == "__main__":
    sys.exit(main())
