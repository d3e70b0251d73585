"""Untrained networks from a declarative description.

A :class:`ModelSpec` lists layers (``Dense``, ``Conv2D``, ``Flatten``), the
hidden activation, the final activation, an initialisation scheme and a
seed.  :func:`initialize` turns it into a :class:`NetworkInstance` holding
concrete weights; the forward helpers return pre-activations only so callers
can capture both sides of every activation.

Random numbers
--------------
Weights are drawn from numpy's ``Philox`` (Philox-4x64-10, a counter-based
generator with a published algorithm).  Layer ``i`` of a model with seed
``s`` uses the 128-bit key ``(s XOR i, 0)``; input sampling in the scoring
code uses ``(seed XOR r, 1)`` for repetition ``r``.  Uniform variates are
``Generator.random()`` doubles in ``[0, 1)``; a symmetric bound ``b`` maps
``u`` to ``b * (2u - 1)``.  Weights are drawn row-major over the weight
array shape documented on each layer, followed by the bias.

Tensor layout
-------------
Dense weights are ``(out, in)``.  Image batches are channels-last
``(batch, height, width, channels)``; conv weights are
``(out_channels, kernel, kernel, in_channels)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from .errors import ShapeMismatch, SpecError

MASK64 = (1 << 64) - 1

STANH_SCALE = 1.59223

ACTIVATIONS = ("Identity", "ReLU", "Tanh", "STanh", "SiLU", "Tanhshrink", "Sigmoid", "GELU")
INIT_SCHEMES = ("XavierUniform", "KaimingUniform", "Uniform01", "Custom")
KAIMING_GAIN = math.sqrt(2.0)

STREAM_WEIGHTS = 0
STREAM_SAMPLES = 1


def philox(seed: int, index: int, stream: int) -> np.random.Generator:
    """Generator keyed by ``(seed XOR index, stream)``."""
    key = np.array([(int(seed) ^ int(index)) & MASK64, stream & MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _sigmoid(x):
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    with np.errstate(under="ignore"):
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
    return out


def apply_activation(kind: str, x) -> np.ndarray:
    """Elementwise activation; the output has the shape of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if kind == "Identity":
        return x.copy()
    if kind == "ReLU":
        return np.maximum(x, 0.0)
    if kind == "Tanh":
        return np.tanh(x)
    if kind == "STanh":
        return STANH_SCALE * np.tanh(x)
    if kind == "SiLU":
        return x * _sigmoid(x)
    if kind == "Tanhshrink":
        return x - np.tanh(x)
    if kind == "Sigmoid":
        return _sigmoid(x)
    if kind == "GELU":
        return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))
    raise SpecError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int
    bias: bool = True

    def __post_init__(self):
        if self.in_features < 1 or self.out_features < 1:
            raise SpecError(f"Dense widths must be >= 1, got {self.in_features}->{self.out_features}")

    @property
    def width(self) -> int:
        return self.out_features


@dataclass(frozen=True)
class Conv2D:
    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0
    bias: bool = True

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise SpecError("Conv2D channel counts must be >= 1")
        if self.kernel < 1 or self.stride < 1 or self.padding < 0:
            raise SpecError("Conv2D needs kernel >= 1, stride >= 1, padding >= 0")

    @property
    def width(self) -> int:
        return self.out_channels

    def output_hw(self, height: int, width: int) -> tuple[int, int]:
        """Output spatial size; raises :class:`ShapeMismatch` if not a positive integer."""
        out = []
        for size in (height, width):
            span = size - self.kernel + 2 * self.padding
            if span < 0 or span % self.stride:
                raise ShapeMismatch(
                    f"Conv2D k={self.kernel} s={self.stride} p={self.padding} "
                    f"does not tile an input of size {size}"
                )
            out.append(span // self.stride + 1)
        return out[0], out[1]


@dataclass(frozen=True)
class Flatten:
    pass


Layer = Union[Dense, Conv2D, Flatten]


@dataclass(frozen=True)
class InitScheme:
    """Weight initialisation.

    ``bounds`` is only used by ``Custom``: one symmetric uniform bound per
    weighted layer, in order (Flatten layers are skipped).
    """

    kind: str = "XavierUniform"
    bounds: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in INIT_SCHEMES:
            raise SpecError(f"unknown init scheme {self.kind!r}; expected one of {INIT_SCHEMES}")
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))
        if self.kind == "Custom" and any(b <= 0 for b in self.bounds):
            raise SpecError("Custom init bounds must be positive")


def _fans(layer: Layer) -> tuple[int, int]:
    if isinstance(layer, Dense):
        return layer.in_features, layer.out_features
    k2 = layer.kernel * layer.kernel
    return layer.in_channels * k2, layer.out_channels * k2


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple[Layer, ...]
    activation: str = "ReLU"
    final_activation: str = "Identity"
    init: InitScheme = field(default_factory=InitScheme)
    seed: int = 0
    #: ``(height, width, channels)`` of image inputs; required when the
    #: first layer is Conv2D.
    input_shape: tuple[int, int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.input_shape is not None:
            object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        for name in (self.activation, self.final_activation):
            if name not in ACTIVATIONS:
                raise SpecError(f"unknown activation {name!r}; expected one of {ACTIVATIONS}")
        if not self.layers:
            raise SpecError("model has no layers")
        if isinstance(self.init, str):
            object.__setattr__(self, "init", InitScheme(self.init))

    @property
    def weighted(self) -> list[int]:
        """Indices of Dense/Conv2D layers (the layers that are scored)."""
        return [i for i, layer in enumerate(self.layers) if not isinstance(layer, Flatten)]

    @property
    def max_width(self) -> int:
        return max(self.layers[i].width for i in self.weighted)

    @property
    def input_dim(self) -> int:
        first = self.layers[0]
        if isinstance(first, Dense):
            return first.in_features
        if self.input_shape is None:
            raise SpecError("input_shape is required for convolutional inputs")
        h, w, c = self.input_shape
        return h * w * c

    def activation_for(self, index: int) -> str:
        """Activation applied after layer ``index``; the last weighted layer gets ``final_activation``."""
        return self.final_activation if index == self.weighted[-1] else self.activation

    def validate(self) -> list[tuple[int, ...]]:
        """Check layer compatibility; return the per-sample output shape after every layer.

        Raises:
            ShapeMismatch: on incompatible consecutive layers.
        """
        shapes: list[tuple[int, ...]] = []
        first = self.layers[0]
        if isinstance(first, Dense):
            current: tuple[int, ...] = (first.in_features,)
        elif self.input_shape is None:
            raise ShapeMismatch("a model starting with Conv2D/Flatten needs input_shape")
        else:
            current = self.input_shape
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Dense):
                if len(current) != 1:
                    raise ShapeMismatch(f"layer {i}: Dense after an image-shaped output; insert Flatten")
                if layer.in_features != current[0]:
                    raise ShapeMismatch(
                        f"layer {i}: Dense expects {layer.in_features} inputs, previous layer gives {current[0]}"
                    )
                current = (layer.out_features,)
            elif isinstance(layer, Conv2D):
                if len(current) != 3:
                    raise ShapeMismatch(f"layer {i}: Conv2D needs an image-shaped input")
                h, w, c = current
                if layer.in_channels != c:
                    raise ShapeMismatch(
                        f"layer {i}: Conv2D expects {layer.in_channels} channels, input has {c}"
                    )
                oh, ow = layer.output_hw(h, w)
                current = (oh, ow, layer.out_channels)
            elif isinstance(layer, Flatten):
                if len(current) != 3:
                    raise ShapeMismatch(f"layer {i}: Flatten must follow a Conv2D output")
                current = (int(np.prod(current)),)
            else:
                raise SpecError(f"layer {i}: unsupported layer {layer!r}")
            shapes.append(current)
        return shapes

    def with_width(self, index: int, width: int) -> "ModelSpec":
        """Copy with Dense layer ``index`` resized to ``width`` and the next Dense input adjusted."""
        layers = list(self.layers)
        layer = layers[index]
        if not isinstance(layer, Dense):
            raise SpecError(f"layer {index} is not Dense")
        layers[index] = replace(layer, out_features=width)
        if index + 1 < len(layers):
            nxt = layers[index + 1]
            if not isinstance(nxt, Dense):
                raise SpecError(f"layer {index + 1} must be Dense to resize layer {index}")
            layers[index + 1] = replace(nxt, in_features=width)
        return replace(self, layers=tuple(layers))

    def truncated(self, index: int) -> "ModelSpec":
        """Copy keeping layers ``0..index``; the kept last layer uses the hidden activation."""
        return replace(self, layers=self.layers[: index + 1], final_activation=self.activation)

    # JSON -----------------------------------------------------------------

    def to_dict(self) -> dict:
        layers = []
        for layer in self.layers:
            d = {"type": type(layer).__name__}
            if not isinstance(layer, Flatten):
                d.update(asdict(layer))
            layers.append(d)
        init = {"kind": self.init.kind}
        if self.init.kind == "Custom":
            init["bounds"] = list(self.init.bounds)
        out = {
            "layers": layers,
            "activation": self.activation,
            "final_activation": self.final_activation,
            "init": init,
            "seed": int(self.seed),
        }
        if self.input_shape is not None:
            out["input_shape"] = list(self.input_shape)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        try:
            layers = [_layer_from_dict(x) for x in d["layers"]]
            init = d.get("init", "XavierUniform")
            if isinstance(init, str):
                init = InitScheme(init)
            else:
                init = InitScheme(init["kind"], tuple(init.get("bounds", ())))
            return cls(
                layers=tuple(layers),
                activation=d.get("activation", "ReLU"),
                final_activation=d.get("final_activation", "Identity"),
                init=init,
                seed=int(d.get("seed", 0)),
                input_shape=tuple(d["input_shape"]) if d.get("input_shape") else None,
            )
        except (KeyError, TypeError) as err:
            raise SpecError(f"malformed model spec: {err!r}") from err

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls.from_dict(json.loads(text))


def _layer_from_dict(d: dict) -> Layer:
    kind = d.get("type")
    aliases = {"in": "in_features", "out": "out_features"}
    fields = {aliases.get(k, k): v for k, v in d.items() if k != "type"}
    if kind == "Dense":
        return Dense(**fields)
    if kind == "Conv2D":
        return Conv2D(**fields)
    if kind == "Flatten":
        return Flatten()
    raise SpecError(f"unknown layer type {kind!r}")


def mlp(widths: Sequence[int], activation: str = "ReLU", init: str | InitScheme = "XavierUniform",
        seed: int = 0, bias: bool = True, final_activation: str = "Identity") -> ModelSpec:
    """Shorthand for a chain of Dense layers, ``widths = (input, hidden..., output)``."""
    if len(widths) < 2:
        raise SpecError("mlp needs at least an input and an output width")
    layers = tuple(Dense(a, b, bias) for a, b in zip(widths[:-1], widths[1:]))
    if isinstance(init, str):
        init = InitScheme(init)
    return ModelSpec(layers, activation, final_activation, init, seed)


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    """Concrete weights for a spec.  ``weights[i]``/``biases[i]`` are ``None`` for Flatten
    (and ``biases[i]`` for bias-free layers)."""

    spec: ModelSpec
    weights: tuple[np.ndarray | None, ...]
    biases: tuple[np.ndarray | None, ...]


def _bound(scheme: InitScheme, layer: Layer, ordinal: int) -> float:
    fan_in, fan_out = _fans(layer)
    if scheme.kind == "XavierUniform":
        return math.sqrt(6.0 / (fan_in + fan_out))
    if scheme.kind == "KaimingUniform":
        return KAIMING_GAIN * math.sqrt(3.0 / fan_in)
    if scheme.kind == "Custom":
        if ordinal >= len(scheme.bounds):
            raise SpecError(f"Custom init has {len(scheme.bounds)} bounds, need one for weighted layer {ordinal}")
        return scheme.bounds[ordinal]
    raise AssertionError(scheme.kind)


def initialize(spec: ModelSpec) -> NetworkInstance:
    """Draw weights for every layer of ``spec``.

    Identical specs (seed included) give bit-identical weights.  Biases are
    zero except under ``Uniform01``, where they are drawn like the weights.

    Raises:
        ShapeMismatch: on incompatible consecutive layers.
    """
    spec.validate()
    weights: list[np.ndarray | None] = []
    biases: list[np.ndarray | None] = []
    ordinal = 0
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Flatten):
            weights.append(None)
            biases.append(None)
            continue
        if isinstance(layer, Dense):
            shape: tuple[int, ...] = (layer.out_features, layer.in_features)
            nbias = layer.out_features
        else:
            shape = (layer.out_channels, layer.kernel, layer.kernel, layer.in_channels)
            nbias = layer.out_channels
        gen = philox(spec.seed, i, STREAM_WEIGHTS)
        u = gen.random(shape)
        if spec.init.kind == "Uniform01":
            w = u
            b = gen.random(nbias) if layer.bias else None
        else:
            bound = _bound(spec.init, layer, ordinal)
            w = bound * (2.0 * u - 1.0)
            b = np.zeros(nbias) if layer.bias else None
        w.setflags(write=False)
        if b is not None:
            b.setflags(write=False)
        weights.append(w)
        biases.append(b)
        ordinal += 1
    return NetworkInstance(spec, tuple(weights), tuple(biases))


def forward_dense(weight, bias, x) -> np.ndarray:
    """Pre-activation ``x @ weight.T + bias`` for a batch ``x`` of shape ``(B, in)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatch(f"Dense layer expects inputs of width {weight.shape[1]}, got shape {x.shape}")
    z = x @ weight.T
    if bias is not None:
        z = z + bias
    return z


def forward_conv2d(weight, bias, x, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlation of a channels-last batch ``x`` ``(B, H, W, C)``.

    Returns ``(B, H', W', C')``: each output channel is the sum over input
    channels of the ``k x k`` sliding dot-product, plus the channel bias.
    """
    x = np.asarray(x, dtype=np.float64)
    cout, k, k2, cin = weight.shape
    if x.ndim != 4 or x.shape[3] != cin:
        raise ShapeMismatch(f"Conv2D expects (B, H, W, {cin}) input, got shape {x.shape}")
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    if x.shape[1] < k or x.shape[2] < k:
        raise ShapeMismatch(f"kernel {k} larger than padded input {x.shape[1:3]}")
    if (x.shape[1] - k) % stride or (x.shape[2] - k) % stride:
        raise ShapeMismatch(f"stride {stride} does not tile input {x.shape[1:3]} with kernel {k}")
    # windows: (B, H', W', C, k, k) -> im2col rows of length k*k*C
    win = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    cols = np.transpose(win, (0, 1, 2, 4, 5, 3))
    b, oh, ow = cols.shape[:3]
    z = cols.reshape(b * oh * ow, k * k * cin) @ weight.reshape(cout, -1).T
    if bias is not None:
        z = z + bias
    return z.reshape(b, oh, ow, cout)


def count_params(spec: ModelSpec, input_affine: bool = False) -> int:
    """Weight entries plus bias entries over all layers.

    ``input_affine`` adds a learnable scale and shift per input feature
    (``2 * input_dim``), as used by networks that normalise their inputs
    in-model.
    """
    total = 2 * spec.input_dim if input_affine else 0
    for layer in spec.layers:
        if isinstance(layer, Dense):
            total += layer.in_features * layer.out_features + (layer.out_features if layer.bias else 0)
        elif isinstance(layer, Conv2D):
            total += layer.kernel**2 * layer.in_channels * layer.out_channels
            total += layer.out_channels if layer.bias else 0
    return total


def count_flops(spec: ModelSpec, input_shape: Sequence[int] | None = None) -> int:
    """Per-sample FLOPs counting a multiply-accumulate as two.

    ``input_shape`` overrides ``spec.input_shape`` for convolutional models.
    """
    if input_shape is not None:
        spec = replace(spec, input_shape=tuple(input_shape))
    shapes = spec.validate()
    total = 0
    for layer, out in zip(spec.layers, shapes):
        if isinstance(layer, Dense):
            total += 2 * layer.in_features * layer.out_features
        elif isinstance(layer, Conv2D):
            oh, ow, _ = out
            total += 2 * layer.kernel**2 * layer.in_channels * layer.out_channels * oh * ow
    return total
