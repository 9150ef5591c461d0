"""Layers, residual blocks, network presets and the parameter store.

A network is an ordered list of layer objects built from a
:class:`NetworkSpec`. It runs in one of two modes:

``"full"``
    original-resolution input, original kernels.
``"low"``
    input downsampled by ``r``, every transformable conv uses its pooled
    kernel (installed through a :class:`~lowmode.transform.KernelBank`), and
    layers flagged ``skip_in_low`` (the stem max pool) are bypassed.

Learnable parameters live in a :class:`ParamStore` in their full-mode shape
only. Batch-norm running statistics are kept per mode; the affine
parameters are shared.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, GeometryError, ModeError, ShapeError, StateError
from .transform import KernelBank, TransformSpec

MODES = ("full", "low")
LAYER_KINDS = (
    "conv",
    "batchnorm",
    "relu",
    "maxpool",
    "avgpool",
    "global_avgpool",
    "linear",
    "residual_block_basic",
    "residual_block_bottleneck",
)


# ---------------------------------------------------------------- parameters

class Param:
    __slots__ = ("name", "value", "grad", "momentum", "version")

    def __init__(self, name, value):
        self.name = name
        self.value = value
        self.grad = None
        self.momentum = np.zeros_like(value)
        self.version = 0

    def touch(self):
        """Mark the value as modified (invalidates pooled-kernel caches)."""
        self.version += 1


class ParamStore:
    """Named parameters (value, gradient, momentum) plus non-learnable buffers."""

    def __init__(self):
        self._params = {}
        self.buffers = {}

    def add(self, name, value):
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        self._params[name] = Param(name, value)
        return self._params[name]

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None

    def accumulate(self, name, g):
        p = self._params[name]
        if g.shape != p.value.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter is {p.value.shape}")
        p.grad = g.copy() if p.grad is None else p.grad + g

    def grads(self):
        return {p.name: p.grad for p in self._params.values() if p.grad is not None}

    def values(self):
        return {p.name: p.value for p in self._params.values()}

    def copy(self):
        other = ParamStore()
        for p in self._params.values():
            q = other.add(p.name, p.value.copy())
            q.momentum = p.momentum.copy()
            q.version = p.version
        other.buffers = {k: v.copy() for k, v in self.buffers.items()}
        return other


# ---------------------------------------------------------------- specs

@dataclass
class LayerSpec:
    kind: str
    name: str
    args: dict = field(default_factory=dict)
    transformable: bool = False


@dataclass
class NetworkSpec:
    name: str
    layers: list
    num_classes: int = 10
    in_channels: int = 3
    input_size: int = 32


def _conv(name, cin, cout, k, stride=1, pad=None, transformable=False):
    pad = (k - 1) // 2 if pad is None else pad
    return LayerSpec("conv", name, dict(cin=cin, cout=cout, k=k, stride=stride, pad=pad), transformable)


def _resnet_stem(width, in_channels=3):
    return [
        _conv("stem.conv", in_channels, width, 3),
        LayerSpec("batchnorm", "stem.bn", dict(c=width)),
        LayerSpec("relu", "stem.relu"),
        LayerSpec("maxpool", "stem.maxpool", dict(window=3, stride=2, pad=1, skip_in_low=True)),
    ]


def _head(cin, num_classes):
    return [
        LayerSpec("global_avgpool", "pool"),
        LayerSpec("linear", "fc", dict(din=cin, dout=num_classes)),
    ]


def _basic_stages(width, blocks, strides):
    layers, cin = [], width
    for s, (nblocks, stride) in enumerate(zip(blocks, strides)):
        cout = width * 2 ** s
        for b in range(nblocks):
            layers.append(
                LayerSpec(
                    "residual_block_basic",
                    f"layer{s + 1}.{b}",
                    dict(cin=cin, cout=cout, stride=stride if b == 0 else 1),
                    transformable=True,
                )
            )
            cin = cout
    return layers, cin


def preset(name, num_classes=10, width=None):
    """Network spec for a named preset.

    ``tiny-cnn``       two conv blocks (5x5 and 3x3/stride 2) for tests.
    ``resnet-tiny``    desk-scale ResNet: stem + one basic block per stage, 3 stages.
    ``resnet18-cifar`` basic blocks [2, 2, 2, 2].
    ``resnet50-cifar`` bottleneck blocks [3, 4, 6, 3].
    """
    if name == "tiny-cnn":
        w = width or 8
        layers = [
            _conv("conv1", 3, w, 5, transformable=True),
            LayerSpec("batchnorm", "bn1", dict(c=w)),
            LayerSpec("relu", "relu1"),
            LayerSpec("maxpool", "pool1", dict(window=3, stride=2, pad=1, skip_in_low=True)),
            _conv("conv2", w, 2 * w, 3, stride=2, transformable=True),
            LayerSpec("batchnorm", "bn2", dict(c=2 * w)),
            LayerSpec("relu", "relu2"),
        ] + _head(2 * w, num_classes)
    elif name == "resnet-tiny":
        w = width or 16
        stages, cout = _basic_stages(w, [1, 1, 1], [1, 2, 2])
        layers = _resnet_stem(w) + stages + _head(cout, num_classes)
    elif name == "resnet18-cifar":
        w = width or 64
        stages, cout = _basic_stages(w, [2, 2, 2, 2], [1, 2, 2, 2])
        layers = _resnet_stem(w) + stages + _head(cout, num_classes)
    elif name == "resnet50-cifar":
        w = width or 64
        layers, cin = _resnet_stem(w), w
        for s, (nblocks, stride) in enumerate(zip([3, 4, 6, 3], [1, 2, 2, 2])):
            planes = w * 2 ** s
            for b in range(nblocks):
                layers.append(
                    LayerSpec(
                        "residual_block_bottleneck",
                        f"layer{s + 1}.{b}",
                        dict(cin=cin, planes=planes, stride=stride if b == 0 else 1),
                        transformable=True,
                    )
                )
                cin = planes * 4
        layers += _head(cin, num_classes)
    else:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}", key="preset")
    return NetworkSpec(name=name, layers=layers, num_classes=num_classes)


PRESETS = ("tiny-cnn", "resnet-tiny", "resnet18-cifar", "resnet50-cifar")


# ---------------------------------------------------------------- run context

class _Run:
    def __init__(self, graph, params, mode, training):
        self.graph = graph
        self.params = params
        self.mode = mode
        self.training = training
        self.trace = []
        self.pattern = [] if graph.record_pattern else None
        self.transformed_grads = {}


@dataclass
class PrimitiveInfo:
    """Static description of one primitive layer in a given mode (used by the cost model)."""

    name: str
    kind: str
    in_shape: tuple
    out_shape: tuple
    geometry: object = None
    window: int = 0
    param_count: int = 0
    transformed: bool = False


# ---------------------------------------------------------------- layers

class Layer:
    skip_in_low = False

    def __init__(self, name):
        self.name = name
        self._cache = None

    def param_specs(self):
        """Yields (name, shape, init, fan_in)."""
        return ()

    def convs(self):
        return ()

    def walk(self, shape, mode, spec=None):
        """Generator of PrimitiveInfo per primitive; its return value is the output shape."""
        raise NotImplementedError

    def out_shape(self, shape, mode, spec=None):
        gen = self.walk(shape, mode, spec)
        while True:
            try:
                next(gen)
            except StopIteration as stop:
                return stop.value

    def _pop(self):
        if self._cache is None:
            raise StateError(f"{self.name}: backward called without a preceding forward")
        cache, self._cache = self._cache, None
        return cache


class Conv(Layer):
    def __init__(self, name, cin, cout, k, stride=1, pad=0, transformable=False):
        super().__init__(name)
        if transformable and k < 2:
            raise ConfigError(f"{name}: only kernels with K >= 2 can be transformable", key="preset")
        self.geom = T.ConvGeometry(k, stride, pad, cin, cout)
        self.transformable = transformable
        self.wname = f"{name}.weight"

    def param_specs(self):
        g = self.geom
        yield self.wname, (g.out_channels, g.in_channels, g.kernel_size, g.kernel_size), "he", g.in_channels * g.kernel_size ** 2

    def convs(self):
        yield self

    def low_geometry(self, spec):
        g = self.geom
        return T.ConvGeometry(spec.out_size(g.kernel_size), g.stride, spec.low_padding(g.kernel_size, g.pads), g.in_channels, g.out_channels)

    def geometry_for(self, mode, spec):
        if mode == "low" and self.transformable:
            return self.low_geometry(spec)
        return self.geom

    def walk(self, shape, mode, spec=None):
        c, h, w = shape
        if c != self.geom.in_channels:
            raise ShapeError(f"{self.name}: expects {self.geom.in_channels} channels, gets {c}")
        g = self.geometry_for(mode, spec)
        ho, wo = g.output_hw(h, w)
        out = (g.out_channels, ho, wo)
        yield PrimitiveInfo(self.name, "conv", shape, out, geometry=g,
                            param_count=int(np.prod(next(iter(self.param_specs()))[1])),
                            transformed=mode == "low" and self.transformable)
        return out

    def forward(self, x, run):
        w = run.params[self.wname].value
        low = run.mode == "low" and self.transformable
        geom = self.geom
        if low:
            bank = run.graph.banks.get(self.wname)
            if bank is None or bank.dirty:
                raise ModeError(f"{self.name}: pooled kernels are missing or stale; refresh the kernel bank before a low-mode pass")
            w = bank.transformed
            geom = self.low_geometry(bank.spec)
        out, cols = T.conv2d_forward(x, w, geom, tag=self.name, return_cols=True)
        if run.training:
            self._cache = (x, w, geom, cols, low)
        run.trace.append(self.name)
        return out

    def backward(self, dout, run):
        x, w, geom, cols, low = self._pop()
        dx, dw = T.conv2d_backward(dout, x, w, geom, cols=cols)
        if low:
            run.transformed_grads[self.wname] = dw
        else:
            run.params.accumulate(self.wname, dw)
        return dx


class BatchNorm(Layer):
    eps = 1e-5
    momentum = 0.1

    def __init__(self, name, c):
        super().__init__(name)
        self.c = c

    def param_specs(self):
        yield f"{self.name}.gamma", (self.c,), "ones", 0
        yield f"{self.name}.beta", (self.c,), "zeros", 0

    def buffer_names(self, mode):
        return f"{self.name}.running_mean.{mode}", f"{self.name}.running_var.{mode}"

    def walk(self, shape, mode, spec=None):
        if shape[0] != self.c:
            raise ShapeError(f"{self.name}: expects {self.c} channels, gets {shape[0]}")
        yield PrimitiveInfo(self.name, "batchnorm", shape, shape, param_count=2 * self.c)
        return shape

    def forward(self, x, run):
        p = run.params
        mname, vname = self.buffer_names(run.mode)
        running = (p.buffers[mname], p.buffers[vname])
        out, cache = T.batchnorm_forward(
            x, p[f"{self.name}.gamma"].value, p[f"{self.name}.beta"].value,
            eps=self.eps, training=run.training, running=running, momentum=self.momentum,
        )
        if run.training:
            self._cache = cache
        run.trace.append(self.name)
        return out

    def backward(self, dout, run):
        dx, dgamma, dbeta = T.batchnorm_backward(dout, self._pop())
        run.params.accumulate(f"{self.name}.gamma", dgamma)
        run.params.accumulate(f"{self.name}.beta", dbeta)
        return dx


class ReLU(Layer):
    def walk(self, shape, mode, spec=None):
        yield PrimitiveInfo(self.name, "relu", shape, shape)
        return shape

    def forward(self, x, run):
        mask = x > 0
        if run.pattern is not None:
            run.pattern.append(mask)
        if run.training:
            self._cache = mask
        run.trace.append(self.name)
        return np.maximum(x, 0)  # NaN propagates, so divergence reaches the loss

    def backward(self, dout, run):
        return np.where(self._pop(), dout, 0).astype(dout.dtype, copy=False)


class MaxPool(Layer):
    def __init__(self, name, window, stride, pad=0, skip_in_low=False):
        super().__init__(name)
        self.window, self.stride, self.pad = window, stride, pad
        self.skip_in_low = skip_in_low

    def walk(self, shape, mode, spec=None):
        if mode == "low" and self.skip_in_low:
            return shape
        c, h, w = shape
        ho, wo = T.pool_output_hw(h, w, self.window, self.stride, self.pad)
        out = (c, ho, wo)
        yield PrimitiveInfo(self.name, "maxpool", shape, out, window=self.window)
        return out

    def forward(self, x, run):
        if run.mode == "low" and self.skip_in_low:
            if run.training:
                self._cache = "skipped"
            return x
        out, arg = T.maxpool2d_forward(x, self.window, self.stride, self.pad)
        if run.pattern is not None:
            run.pattern.append(arg)
        if run.training:
            self._cache = (x.shape, arg)
        run.trace.append(self.name)
        return out

    def backward(self, dout, run):
        cache = self._pop()
        if cache == "skipped":
            return dout
        shape, arg = cache
        return T.maxpool2d_backward(dout, arg, shape, self.window, self.stride, self.pad)


class AvgPool(Layer):
    def __init__(self, name, window, stride, pad=0):
        super().__init__(name)
        self.window, self.stride, self.pad = window, stride, pad

    def walk(self, shape, mode, spec=None):
        c, h, w = shape
        ho, wo = T.pool_output_hw(h, w, self.window, self.stride, self.pad)
        out = (c, ho, wo)
        yield PrimitiveInfo(self.name, "avgpool", shape, out, window=self.window)
        return out

    def forward(self, x, run):
        if run.training:
            self._cache = x.shape
        run.trace.append(self.name)
        return T.avgpool2d_forward(x, self.window, self.stride, self.pad)

    def backward(self, dout, run):
        return T.avgpool2d_backward(dout, self._pop(), self.window, self.stride, self.pad)


class GlobalAvgPool(Layer):
    def walk(self, shape, mode, spec=None):
        out = (shape[0],)
        yield PrimitiveInfo(self.name, "global_avgpool", shape, out)
        return out

    def forward(self, x, run):
        if run.training:
            self._cache = x.shape
        run.trace.append(self.name)
        return T.global_avgpool_forward(x)

    def backward(self, dout, run):
        return T.global_avgpool_backward(dout, self._pop())


class Linear(Layer):
    def __init__(self, name, din, dout):
        super().__init__(name)
        self.din, self.dout = din, dout

    def param_specs(self):
        yield f"{self.name}.weight", (self.dout, self.din), "he", self.din
        yield f"{self.name}.bias", (self.dout,), "zeros", 0

    def walk(self, shape, mode, spec=None):
        if shape != (self.din,):
            raise ShapeError(f"{self.name}: expects a flat ({self.din},) input, gets {shape}")
        yield PrimitiveInfo(self.name, "linear", shape, (self.dout,), param_count=self.din * self.dout + self.dout)
        return (self.dout,)

    def forward(self, x, run):
        p = run.params
        out = T.linear_forward(x, p[f"{self.name}.weight"].value, p[f"{self.name}.bias"].value, tag=self.name)
        if run.training:
            self._cache = x
        run.trace.append(self.name)
        return out

    def backward(self, dout, run):
        x = self._pop()
        dx, dw, db = T.linear_backward(dout, x, run.params[f"{self.name}.weight"].value)
        run.params.accumulate(f"{self.name}.weight", dw)
        run.params.accumulate(f"{self.name}.bias", db)
        return dx


class _Block(Layer):
    """Residual block: relu(main(x) + shortcut(x))."""

    main = ()
    shortcut = ()

    def _children(self):
        return list(self.main) + list(self.shortcut)

    def param_specs(self):
        for child in self._children():
            yield from child.param_specs()

    def convs(self):
        for child in self._children():
            yield from child.convs()

    def walk(self, shape, mode, spec=None):
        h = shape
        for layer in self.main:
            h = yield from layer.walk(h, mode, spec)
        s = shape
        for layer in self.shortcut:
            s = yield from layer.walk(s, mode, spec)
        if h != s:
            raise ShapeError(f"{self.name}: residual branch {h} does not match shortcut {s} in {mode} mode")
        yield PrimitiveInfo(f"{self.name}.add", "add", h, h)
        yield PrimitiveInfo(f"{self.name}.relu", "relu", h, h)
        return h

    def forward(self, x, run):
        h = x
        for layer in self.main:
            h = layer.forward(h, run)
        s = x
        for layer in self.shortcut:
            s = layer.forward(s, run)
        z = T.add(h, s)
        mask = z > 0
        if run.pattern is not None:
            run.pattern.append(mask)
        if run.training:
            self._cache = mask
        run.trace.append(f"{self.name}.relu")
        return np.maximum(z, 0)

    def backward(self, dout, run):
        mask = self._pop()
        dz = np.where(mask, dout, 0).astype(dout.dtype, copy=False)
        dh = dz
        for layer in reversed(self.main):
            dh = layer.backward(dh, run)
        ds = dz
        for layer in reversed(self.shortcut):
            ds = layer.backward(ds, run)
        return dh + ds


def _projection(name, cin, cout, stride):
    if stride == 1 and cin == cout:
        return []
    # pointwise projection: never transformable
    return [Conv(f"{name}.shortcut.conv", cin, cout, 1, stride, 0), BatchNorm(f"{name}.shortcut.bn", cout)]


class BasicBlock(_Block):
    def __init__(self, name, cin, cout, stride=1, transformable=True):
        super().__init__(name)
        self.main = [
            Conv(f"{name}.conv1", cin, cout, 3, stride, 1, transformable),
            BatchNorm(f"{name}.bn1", cout),
            ReLU(f"{name}.relu1"),
            Conv(f"{name}.conv2", cout, cout, 3, 1, 1, transformable),
            BatchNorm(f"{name}.bn2", cout),
        ]
        self.shortcut = _projection(name, cin, cout, stride)


class Bottleneck(_Block):
    expansion = 4

    def __init__(self, name, cin, planes, stride=1, transformable=True):
        super().__init__(name)
        cout = planes * self.expansion
        self.main = [
            Conv(f"{name}.conv1", cin, planes, 1, 1, 0),
            BatchNorm(f"{name}.bn1", planes),
            ReLU(f"{name}.relu1"),
            Conv(f"{name}.conv2", planes, planes, 3, stride, 1, transformable),
            BatchNorm(f"{name}.bn2", planes),
            ReLU(f"{name}.relu2"),
            Conv(f"{name}.conv3", planes, cout, 1, 1, 0),
            BatchNorm(f"{name}.bn3", cout),
        ]
        self.shortcut = _projection(name, cin, cout, stride)


def _make_layer(ls):
    a = ls.args
    try:
        if ls.kind == "conv":
            return Conv(ls.name, a["cin"], a["cout"], a["k"], a.get("stride", 1), a.get("pad", 0), ls.transformable)
        if ls.transformable and ls.kind not in ("residual_block_basic", "residual_block_bottleneck"):
            raise ConfigError(f"{ls.name}: kind {ls.kind!r} cannot be transformable", key="preset")
        if ls.kind == "batchnorm":
            return BatchNorm(ls.name, a["c"])
        if ls.kind == "relu":
            return ReLU(ls.name)
        if ls.kind == "maxpool":
            return MaxPool(ls.name, a["window"], a["stride"], a.get("pad", 0), a.get("skip_in_low", False))
        if ls.kind == "avgpool":
            return AvgPool(ls.name, a["window"], a["stride"], a.get("pad", 0))
        if ls.kind == "global_avgpool":
            return GlobalAvgPool(ls.name)
        if ls.kind == "linear":
            return Linear(ls.name, a["din"], a["dout"])
        if ls.kind == "residual_block_basic":
            return BasicBlock(ls.name, a["cin"], a["cout"], a.get("stride", 1), ls.transformable)
        if ls.kind == "residual_block_bottleneck":
            return Bottleneck(ls.name, a["cin"], a["planes"], a.get("stride", 1), ls.transformable)
    except KeyError as exc:
        raise ConfigError(f"layer {ls.name}: missing argument {exc}", key="preset") from None
    raise ConfigError(f"layer {ls.name}: unknown kind {ls.kind!r}", key="preset")


# ---------------------------------------------------------------- network

class Network:
    def __init__(self, spec, layers, transform):
        self.spec = spec
        self.layers = layers
        self.transform = transform
        self.banks = {}
        self.record_pattern = False
        self.last_trace = []
        self.last_pattern = None
        self._pending = None

    @property
    def ratio(self):
        return self.transform.ratio

    def convs(self):
        for layer in self.layers:
            yield from layer.convs()

    def input_shape(self, mode):
        s = self.spec.input_size
        if mode == "low":
            s //= self.ratio
        return (self.spec.in_channels, s, s)

    def walk(self, mode):
        """Static primitive-by-primitive description of a pass in ``mode``."""
        if mode not in MODES:
            raise ModeError(f"mode must be one of {MODES}, got {mode!r}")
        shape = self.input_shape(mode)
        infos = []
        for layer in self.layers:
            gen = layer.walk(shape, mode, self.transform)
            while True:
                try:
                    infos.append(next(gen))
                except StopIteration as stop:
                    shape = stop.value
                    break
        return infos, shape

    def validate(self):
        for mode in MODES:
            shape = self.input_shape(mode)
            for layer in self.layers:
                try:
                    shape = layer.out_shape(shape, mode, self.transform)
                except (ShapeError, GeometryError, ConfigError) as exc:
                    raise ConfigError(f"network {self.spec.name!r}, layer {layer.name} ({mode} mode): {exc}", key="preset") from exc
            if shape != (self.spec.num_classes,):
                raise ConfigError(f"network {self.spec.name!r} ends in shape {shape}, expected ({self.spec.num_classes},)", key="preset")

    def forward(self, params, x, mode="full", training=True):
        if mode not in MODES:
            raise ModeError(f"mode must be one of {MODES}, got {mode!r}")
        expect = self.input_shape(mode)
        if x.ndim != 4 or tuple(x.shape[1:]) != expect:
            raise ModeError(f"{mode}-mode input must be (N, {expect[0]}, {expect[1]}, {expect[2]}), got {x.shape}")
        run = _Run(self, params, mode, training)
        h = x
        for layer in self.layers:
            h = layer.forward(h, run)
        self.last_trace = run.trace
        self.last_pattern = run.pattern
        self._pending = run if training else None
        return h

    def backward(self, params, dlogits):
        """Backpropagate ``dlogits``; returns pooled-kernel gradients of a low-mode pass.

        Full-size gradients are accumulated into ``params``. In low mode the
        gradients of transformable kernels are returned (keyed by parameter
        name, in pooled shape) for :func:`lowmode.transform.route_gradients`.
        """
        run = self._pending
        if run is None:
            raise StateError("backward called without a preceding training-mode forward")
        if run.params is not params:
            raise StateError("backward called with a different ParamStore than the forward pass")
        self._pending = None
        d = dlogits
        for layer in reversed(self.layers):
            d = layer.backward(d, run)
        return run.transformed_grads


def build_graph(spec, transform=None):
    """Layer graph for ``spec`` without parameters (validated in both modes)."""
    transform = transform or TransformSpec()
    if spec.input_size % transform.ratio:
        raise ConfigError(f"ratio {transform.ratio} does not divide input size {spec.input_size}", key="ratio")
    net = Network(spec, [_make_layer(ls) for ls in spec.layers], transform)
    net.validate()
    return net


def build_network(spec, seed=0, transform=None, dtype=np.float64):
    """Instantiate ``spec``; returns ``(network, params)``.

    Conv and linear weights are He-uniform, batch-norm gamma=1 / beta=0,
    biases zero. Deterministic given ``seed``.
    """
    net = build_graph(spec, transform)
    layers = net.layers
    rng = np.random.default_rng(seed)
    params = ParamStore()
    for layer in _all_layers(layers):
        for name, shape, init, fan_in in layer.param_specs():
            if init == "he":
                bound = math.sqrt(6.0 / fan_in)
                value = rng.uniform(-bound, bound, size=shape)
            elif init == "ones":
                value = np.ones(shape)
            else:
                value = np.zeros(shape)
            params.add(name, value.astype(dtype))
        if isinstance(layer, BatchNorm):
            for mode in MODES:
                mname, vname = layer.buffer_names(mode)
                params.buffers[mname] = np.zeros(layer.c, dtype=dtype)
                params.buffers[vname] = np.ones(layer.c, dtype=dtype)
    for conv in net.convs():
        if conv.transformable:
            net.banks[conv.wname] = KernelBank(params[conv.wname], net.transform)
    return net, params


def _all_layers(layers):
    for layer in layers:
        if isinstance(layer, _Block):
            yield from layer._children()
        else:
            yield layer


def forward(graph, params, batch, mode="full", training=True):
    return graph.forward(params, batch, mode, training)


def backward(graph, params, loss_grad):
    return graph.backward(params, loss_grad)
