"""Kernel downsampling by average pooling, and its gradient.

A K x K filter is pooled to K_hat x K_hat with K_hat in {ceil(K/r), floor(K/r)}.
The low-mode forward pass convolves downsampled inputs with these pooled
filters; the gradient w.r.t. the pooled filters is pushed back onto the
original full-size filters through the pooling Jacobian, so every update
lands on the parameters used in full mode.
"""

import math
from dataclasses import dataclass, field


from .errors import ConfigError, ShapeError
from .tensor import avgpool2d_backward, avgpool2d_forward

ROUNDINGS = ("odd", "ceil", "floor")


@dataclass(frozen=True)
class PoolRule:
    window: int
    stride: int
    pads: tuple  # (top, bottom, left, right)
    out_k: int

    def to_list(self):
        return [self.window, self.stride, list(self.pads), self.out_k]

    @classmethod
    def from_list(cls, seq):
        window, stride, pads, out_k = seq
        return cls(int(window), int(stride), tuple(int(p) for p in pads), int(out_k))


def _ceil_rule(k, r):
    out_k = math.ceil(k / r)
    extra = r * out_k - k
    return PoolRule(r, r, (0, extra, 0, extra), out_k)


def _floor_rule(k, r):
    out_k = k // r
    # windows of size k - r*(out_k - 1) at stride r tile the filter exactly
    return PoolRule(k - r * (out_k - 1), r, (0, 0, 0, 0), out_k)


def default_rule(k, r, rounding="odd"):
    """Pooling rule taking a K x K filter to K_hat x K_hat.

    ``"odd"`` picks whichever of ceil/floor gives an odd K_hat (ceil when
    both or neither do): 5 -> 3 via 2x2/stride-2 windows padded on the
    bottom/right, 3 -> 1 via one 3x3 window.
    """
    if r < 2:
        raise ConfigError(f"downsampling ratio must be >= 2, got {r}", key="ratio")
    if k < 2:
        raise ConfigError(f"cannot downsample a {k}x{k} kernel", key="transform_rules")
    if rounding not in ROUNDINGS:
        raise ConfigError(f"rounding must be one of {ROUNDINGS}, got {rounding!r}", key="transform_rounding")
    if rounding == "odd":
        ceil_k, floor_k = math.ceil(k / r), k // r
        rounding = "floor" if ceil_k % 2 == 0 and floor_k % 2 == 1 else "ceil"
    if rounding == "floor":
        if k // r < 1:
            raise ConfigError(f"floor({k}/{r}) is 0", key="transform_rounding")
        return _floor_rule(k, r)
    return _ceil_rule(k, r)


@dataclass(frozen=True)
class TransformSpec:
    ratio: int = 2
    rounding: str = "odd"
    rules: dict = field(default_factory=dict)  # K -> PoolRule, overrides the default

    def __post_init__(self):
        if self.ratio < 2:
            raise ConfigError(f"downsampling ratio must be >= 2, got {self.ratio}", key="ratio")
        if self.rounding not in ROUNDINGS:
            raise ConfigError(f"rounding must be one of {ROUNDINGS}", key="transform_rounding")
        for k, rule in self.rules.items():
            self._validate(int(k), rule)

    def _validate(self, k, rule):
        try:
            from .tensor import pool_output_hw

            ho, _ = pool_output_hw(k, k, rule.window, rule.stride, rule.pads)
        except ValueError as exc:
            raise ConfigError(f"rule for K={k}: {exc}", key="transform_rules") from exc
        if ho != rule.out_k or rule.out_k < 1:
            raise ConfigError(f"rule for K={k} yields {ho}x{ho}, declared {rule.out_k}", key="transform_rules")
        allowed = {math.ceil(k / self.ratio), k // self.ratio}
        if rule.out_k not in allowed:
            raise ConfigError(f"rule for K={k} must output one of {sorted(allowed)}", key="transform_rules")

    def rule_for(self, k):
        if k in self.rules:
            return self.rules[k]
        return default_rule(k, self.ratio, self.rounding)

    def out_size(self, k):
        return self.rule_for(k).out_k

    def low_padding(self, k, pads):
        """Conv padding to use with the pooled K_hat kernel.

        Scales each side by (K_hat - 1)/(K - 1), so 'same' padding stays 'same'.
        """
        out_k = self.out_size(k)
        return tuple(p * (out_k - 1) // (k - 1) for p in pads)

    def to_dict(self):
        return {
            "ratio": self.ratio,
            "rounding": self.rounding,
            "rules": {str(k): rule.to_list() for k, rule in sorted(self.rules.items())},
        }

    @classmethod
    def from_dict(cls, d):
        rules = {int(k): PoolRule.from_list(v) for k, v in (d.get("rules") or {}).items()}
        return cls(ratio=int(d.get("ratio", 2)), rounding=d.get("rounding", "odd"), rules=rules)


def _pool(w, rule):
    return avgpool2d_forward(w, rule.window, rule.stride, rule.pads)


def transform_array(w, spec):
    """Pool every (filter, channel) plane of a [N, C, K, K] kernel tensor."""
    if w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise ShapeError(f"kernel tensor must be [N, C, K, K], got {w.shape}")
    return _pool(w, spec.rule_for(w.shape[2]))


def transform_grad_array(w_shape, grad_transformed, spec):
    rule = spec.rule_for(w_shape[2])
    expect = tuple(w_shape[:2]) + (rule.out_k, rule.out_k)
    if grad_transformed.shape != expect:
        raise ShapeError(f"transformed-kernel gradient shape {grad_transformed.shape} != {expect}")
    return avgpool2d_backward(grad_transformed, w_shape, rule.window, rule.stride, rule.pads)


class KernelBank:
    """Original kernel parameter plus its cached pooled copy.

    ``param`` is the :class:`~lowmode.nn.Param` holding the full-size weights;
    its ``version`` counter is bumped by every optimizer step, which is how the
    cache knows it is stale.
    """

    def __init__(self, param, spec):
        self.param = param
        self.spec = spec
        self.transformed = None
        self._seen_version = None
        # validates that a rule exists for this K
        spec.rule_for(param.value.shape[2])

    @property
    def original(self):
        return self.param.value

    @property
    def dirty(self):
        return self.transformed is None or self._seen_version != self.param.version

    @property
    def out_shape(self):
        n, c, k, _ = self.original.shape
        kh = self.spec.out_size(k)
        return (n, c, kh, kh)


def transform_kernels(bank):
    """Pooled copy of the bank's current original kernels (does not touch the cache)."""
    return transform_array(bank.original, bank.spec)


def refresh_if_dirty(bank):
    if bank.dirty:
        bank.transformed = transform_kernels(bank)
        bank._seen_version = bank.param.version


def backprop_through_transform(bank, grad_transformed):
    """Map dL/dW_hat onto dL/dW through the pooling Jacobian."""
    return transform_grad_array(bank.original.shape, grad_transformed, bank.spec)


def route_gradients(banks, params, transformed_grads):
    """Accumulate every low-mode kernel gradient onto its original parameter."""
    for name, g in transformed_grads.items():
        params.accumulate(name, backprop_through_transform(banks[name], g))

