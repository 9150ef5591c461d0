"""Flat JSON run configuration: parsing, overrides and validation.

A run config is a single JSON object whose keys are listed in ``DEFAULTS``;
unknown keys are rejected. ``--set key=value`` overrides are applied on top
of the file (values are parsed as JSON, falling back to a bare string).
Everything is validated up front, before any data is touched, and the
first offending key is reported through :class:`ConfigError`.
"""

import copy
import json
import math
from dataclasses import dataclass, field

from .data import DownsampleSpec, default_data_dir
from .errors import ConfigError
from .nn import PRESETS, build_graph, preset
from .schedule import LrSchedule, ModeSchedule
from .trainer import TrainConfig
from .transform import PoolRule, TransformSpec

DEFAULTS = {
    # network
    "preset": "resnet18-cifar",
    "width": None,
    "num_classes": 10,
    # optimisation
    "epochs": 200,
    "batch_size": 125,
    "momentum": 0.9,
    "weight_decay": 5e-4,
    "lr_base": 0.1,
    "lr_milestones": [[80, 0.01], [120, 0.001]],
    "seed": 0,
    "precision": 32,
    "eval_every": 1,
    "eval_batch_size": 500,
    # mode schedule
    "p_low": 0.5,
    "forced_full_window": 4,
    "force_full_at_start": True,
    "policy": "stochastic",
    "period": 2,
    # kernel transform / input downsampling
    "ratio": 2,
    "transform_rounding": "odd",
    "transform_rules": {},
    "downsample": "gaussian",
    "gaussian_sigma": None,
    "gaussian_radius": None,
    # data
    "dataset": "cifar10",
    "data_dir": None,
    "subset_per_class": None,
    "val_per_class": None,
    "synthetic_seed": 0,
    # run
    "out_dir": None,
    "deterministic": False,
    "nominal_macs_per_s": 1e9,
}

DATASETS = ("cifar10", "synthetic")

_INT_KEYS = ("num_classes", "epochs", "batch_size", "seed", "precision", "eval_every", "eval_batch_size",
             "forced_full_window", "period", "ratio", "synthetic_seed")
_OPT_INT_KEYS = ("width", "subset_per_class", "val_per_class", "gaussian_radius")
_FLOAT_KEYS = ("momentum", "weight_decay", "lr_base", "nominal_macs_per_s")
_BOOL_KEYS = ("force_full_at_start", "deterministic")
_STR_KEYS = ("preset", "policy", "transform_rounding", "downsample", "dataset")
_OPT_STR_KEYS = ("data_dir", "out_dir")


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __getitem__(self, key):
        return self.values[key]

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    def to_json(self):
        return json.dumps(self.values, indent=2, sort_keys=True)

    # builders -------------------------------------------------------------

    def network_spec(self):
        return preset(self["preset"], self["num_classes"], self["width"])

    def transform_spec(self):
        rules = {int(k): PoolRule.from_list(v) for k, v in self["transform_rules"].items()}
        return TransformSpec(self["ratio"], self["transform_rounding"], rules)

    def downsample_spec(self):
        return DownsampleSpec(self["ratio"], self["downsample"], self["gaussian_sigma"], self["gaussian_radius"])

    def lr_schedule(self):
        return LrSchedule(self["lr_base"], [tuple(m) for m in self["lr_milestones"]])

    def mode_schedule(self):
        p = self["p_low"]
        probs = list(p) if isinstance(p, list) else [p] * self["epochs"]
        return ModeSchedule(
            probs,
            forced_full_window=self["forced_full_window"],
            lr_adjust_epochs=self.lr_schedule().adjust_epochs,
            policy=self["policy"],
            period=self["period"],
            seed=self["seed"],
            force_at_start=self["force_full_at_start"],
        )

    def train_config(self):
        return TrainConfig(
            epochs=self["epochs"],
            batch_size=self["batch_size"],
            momentum=self["momentum"],
            weight_decay=self["weight_decay"],
            ratio=self["ratio"],
            seed=self["seed"],
            precision=self["precision"],
            eval_every=self["eval_every"],
            schedule=self.mode_schedule(),
            lr=self.lr_schedule(),
            downsample=self.downsample_spec(),
            deterministic=self["deterministic"],
            nominal_macs_per_s=self["nominal_macs_per_s"],
            eval_batch_size=self["eval_batch_size"],
        )

    def resolved_data_dir(self):
        return default_data_dir() or self["data_dir"]


def parse_value(text):
    """JSON value if it parses, else the raw string (so ``preset=tiny-cnn`` works)."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(items):
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value", key=key or item)
        out[key] = parse_value(value)
    return out


def _coerce(key, value):
    def bad(what):
        return ConfigError(f"{key} must be {what}, got {value!r}", key=key)

    if key in _INT_KEYS or (key in _OPT_INT_KEYS and value is not None):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise bad("an integer")
        return int(value)
    if key in _FLOAT_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise bad("a finite number")
        return float(value)
    if key in _BOOL_KEYS:
        if not isinstance(value, bool):
            raise bad("true or false")
        return value
    if key in _STR_KEYS or (key in _OPT_STR_KEYS and value is not None):
        if not isinstance(value, str):
            raise bad("a string")
        return value
    if key == "gaussian_sigma" and value is not None:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad("a number")
        return float(value)
    if key == "p_low":
        seq = value if isinstance(value, list) else [value]
        for p in seq:
            if isinstance(p, bool) or not isinstance(p, (int, float)):
                raise bad("a number or a list of numbers")
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"p_low must lie in [0, 1], got {p}", key=key)
        return [float(p) for p in value] if isinstance(value, list) else float(value)
    if key == "lr_milestones":
        if not isinstance(value, list) or not all(isinstance(m, list) and len(m) == 2 for m in value):
            raise bad("a list of [epoch, lr] pairs")
        return [[int(e), float(lr)] for e, lr in value]
    if key == "transform_rules":
        if not isinstance(value, dict):
            raise bad("an object mapping K to [window, stride, [top, bottom, left, right], K_hat]")
        try:
            return {str(int(k)): PoolRule.from_list(v).to_list() for k, v in value.items()}
        except (TypeError, ValueError) as exc:
            raise bad("an object mapping K to [window, stride, [top, bottom, left, right], K_hat]") from exc
    return value


def validate(cfg):
    """Cross-key checks; builds every component once so errors surface before work starts."""
    v = cfg.values
    if v["preset"] not in PRESETS:
        raise ConfigError(f"unknown preset {v['preset']!r}; choose from {', '.join(PRESETS)}", key="preset")
    if v["dataset"] not in DATASETS:
        raise ConfigError(f"dataset must be one of {DATASETS}, got {v['dataset']!r}", key="dataset")
    if isinstance(v["p_low"], list) and len(v["p_low"]) != v["epochs"]:
        raise ConfigError(f"p_low has {len(v['p_low'])} entries for {v['epochs']} epochs", key="p_low")
    for key in ("subset_per_class", "val_per_class", "width"):
        if v[key] is not None and v[key] < 1:
            raise ConfigError(f"{key} must be >= 1", key=key)
    if v["nominal_macs_per_s"] <= 0:
        raise ConfigError("nominal_macs_per_s must be > 0", key="nominal_macs_per_s")
    for e, _ in v["lr_milestones"]:
        if not 1 <= e <= v["epochs"]:
            raise ConfigError(f"lr milestone epoch {e} outside [1, {v['epochs']}]", key="lr_milestones")
    cfg.train_config()
    build_graph(cfg.network_spec(), cfg.transform_spec())
    return cfg


def make_config(values=None, overrides=None):
    """RunConfig from a dict of values plus a dict of overrides."""
    merged = copy.deepcopy(DEFAULTS)
    for source in (values or {}, overrides or {}):
        for key, value in source.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}", key=key)
            merged[key] = _coerce(key, value)
    return validate(RunConfig(merged))


def load_config(path=None, overrides=None):
    """Read a JSON config file (or start from defaults) and apply ``key=value`` overrides."""
    values = {}
    if path is not None:
        try:
            with open(path) as fh:
                values = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})", key="<file>") from exc
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: config must be a JSON object", key="<file>")
    return make_config(values, parse_overrides(overrides))
