"""Network assembly: a depthwise-separable trunk with five per-scale heads.

The trunk is a stack of inverted-residual blocks (1x1 expand, 3x3 depthwise,
1x1 linear project, identity shortcut when shape-preserving) downsampling by
2 at fixed points so that the five heads sit at strides 8, 16, 32, 64, 128.
The stride-8 head hangs off a two-block branch that shares no weights with
the deeper scales.  Batch-norm statistics are folded into the convolutions
at build time, so inference runs on plain conv + relu6 only.

Width is controlled by a single multiplier alpha.  The bookkeeping choices
(expansion factor 6, channels rounded to multiples of 8, biasless convs
under batch norm, 1x1 heads with bias) are calibrated so the stock widths
0.75 / 1.0 / 2.0 land at 1.58M / 2.87M / 10.59M parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ops import (
    ConvParams,
    ShapeError,
    batchnorm_fold,
    check_nchw,
    conv2d,
    relu6,
)

CLASS_CHANNELS = 2
GEOMETRY_CHANNELS = 5
LINK_CHANNELS = 16
CROSS_LINK_CHANNELS = 8
HEAD_CHANNELS_FIRST = CLASS_CHANNELS + GEOMETRY_CHANNELS + LINK_CHANNELS
HEAD_CHANNELS_FULL = HEAD_CHANNELS_FIRST + CROSS_LINK_CHANNELS

BN_SCALARS_PER_CHANNEL = 4  # gamma, beta, running mean, running var


def scaled_channels(base: int, alpha: float, divisor: int = 8) -> int:
    """Width-scaled channel count, rounded to a multiple of `divisor`.

    Never below one multiple; bumped up a step if plain rounding would lose
    more than 10% of the requested width (keeps narrow layers from
    collapsing at small alpha).
    """
    v = base * alpha
    out = max(divisor, int(v + divisor / 2) // divisor * divisor)
    if out < 0.9 * v:
        out += divisor
    return out


@dataclass(frozen=True)
class ScaleSpec:
    """One detection scale: its head stride in pixels and channel budget."""

    receptive_field: int
    stride: int
    head_channels: int

    def __post_init__(self):
        if self.stride != self.receptive_field:
            raise ShapeError(
                f"scale stride {self.stride} must equal receptive field "
                f"{self.receptive_field}"
            )
        if self.head_channels not in (HEAD_CHANNELS_FIRST, HEAD_CHANNELS_FULL):
            raise ShapeError(f"unsupported head width {self.head_channels}")

    @property
    def has_cross_links(self) -> bool:
        return self.head_channels == HEAD_CHANNELS_FULL


DEFAULT_SCALES = (
    ScaleSpec(8, 8, HEAD_CHANNELS_FIRST),
    ScaleSpec(16, 16, HEAD_CHANNELS_FULL),
    ScaleSpec(32, 32, HEAD_CHANNELS_FULL),
    ScaleSpec(64, 64, HEAD_CHANNELS_FULL),
    ScaleSpec(128, 128, HEAD_CHANNELS_FULL),
)


@dataclass(frozen=True)
class NetworkConfig:
    alpha: float = 1.0
    expansion_factor: int = 6
    input_channels: int = 3
    bn_eps: float = 1e-3
    scales: tuple[ScaleSpec, ...] = DEFAULT_SCALES

    def __post_init__(self):
        if not self.alpha > 0:
            raise ShapeError("alpha must be positive")
        if not (isinstance(self.expansion_factor, int) and self.expansion_factor >= 1):
            raise ShapeError("expansion_factor must be a positive integer")
        if self.input_channels != 3:
            raise ShapeError("network expects three-channel input")
        rfs = [s.receptive_field for s in self.scales]
        if rfs != sorted(rfs) or len(set(rfs)) != len(rfs):
            raise ShapeError("scales must be strictly increasing")
        if self.scales[0].head_channels != HEAD_CHANNELS_FIRST or any(
            s.head_channels != HEAD_CHANNELS_FULL for s in self.scales[1:]
        ):
            raise ShapeError("first scale is 23-channel, the rest 31-channel")


# Backbone rows: name, base output channels, stride, feeds-from.
# x1/x2 are the detached pair feeding only the finest head; the trunk
# resumes from b5 at b6.
_BACKBONE = (
    ("stem", 32, 2, "image"),
    ("dw16", 16, 1, "stem"),
    ("b1", 24, 2, "dw16"),
    ("b2", 24, 1, "b1"),
    ("b3", 32, 2, "b2"),
    ("b4", 32, 1, "b3"),
    ("b5", 32, 1, "b4"),
    ("x1", 32, 1, "b5"),
    ("x2", 32, 1, "x1"),
    ("b6", 64, 2, "b5"),
    ("b7", 64, 1, "b6"),
    ("b8", 64, 1, "b7"),
    ("b9", 64, 1, "b8"),
    ("b10", 96, 1, "b9"),
    ("b11", 96, 1, "b10"),
    ("b12", 96, 1, "b11"),
    ("b13", 140, 2, "b12"),
    ("b14", 140, 1, "b13"),
    ("b15", 140, 1, "b14"),
    ("b16", 140, 1, "b15"),
    ("b17", 140, 2, "b16"),
    ("b18", 140, 1, "b17"),
    ("b19", 140, 1, "b18"),
    ("b20", 140, 2, "b19"),
    ("b21", 140, 1, "b20"),
)

_HEAD_SOURCES = ("x2", "b12", "b16", "b19", "b21")


@dataclass(frozen=True)
class LayerPlan:
    name: str
    kind: str  # "conv" | "bneck" | "head"
    source: str
    in_ch: int
    out_ch: int
    stride: int = 1
    expansion: int = 1

    @property
    def hidden_ch(self) -> int:
        return self.in_ch * self.expansion

    @property
    def has_shortcut(self) -> bool:
        return self.kind == "bneck" and self.stride == 1 and self.in_ch == self.out_ch


def build_plan(config: NetworkConfig) -> tuple[LayerPlan, ...]:
    """Resolve the backbone table into concrete layers for one alpha."""
    plan = []
    out_of = {"image": config.input_channels}
    cum_stride = {"image": 1}
    for name, base, stride, source in _BACKBONE:
        out = scaled_channels(base, config.alpha)
        if name == "stem":
            kind = "conv"
            exp = 1
        elif name == "dw16":
            kind = "bneck"
            exp = 1  # refine-and-compress block: depthwise + linear project
        else:
            kind = "bneck"
            exp = config.expansion_factor
        plan.append(
            LayerPlan(name, kind, source, out_of[source], out, stride, exp)
        )
        out_of[name] = out
        cum_stride[name] = cum_stride[source] * stride
    for spec, source in zip(config.scales, _HEAD_SOURCES):
        if cum_stride[source] != spec.stride:
            raise ShapeError(
                f"head source {source} sits at stride {cum_stride[source]}, "
                f"expected {spec.stride}"
            )
        plan.append(
            LayerPlan(
                f"head{spec.receptive_field}",
                "head",
                source,
                out_of[source],
                spec.head_channels,
            )
        )
    return tuple(plan)


def parameter_shapes(config: NetworkConfig) -> dict[str, tuple[int, ...]]:
    """Deterministic name -> shape map of every raw learned tensor.

    Convs that sit under a batch norm carry no bias; each batch norm
    contributes gamma/beta/mean/var vectors.  Heads are bare 1x1 convs
    with bias.
    """
    shapes: dict[str, tuple[int, ...]] = {}

    def bn(prefix, ch):
        for stat in ("gamma", "beta", "mean", "var"):
            shapes[f"{prefix}.bn.{stat}"] = (ch,)

    for layer in build_plan(config):
        if layer.kind == "conv":
            shapes[f"{layer.name}.kernel"] = (layer.out_ch, layer.in_ch, 3, 3)
            bn(layer.name, layer.out_ch)
        elif layer.kind == "bneck":
            h = layer.hidden_ch
            if layer.expansion > 1:
                shapes[f"{layer.name}.expand.kernel"] = (h, layer.in_ch, 1, 1)
                bn(f"{layer.name}.expand", h)
            shapes[f"{layer.name}.dw.kernel"] = (h, 1, 3, 3)
            bn(f"{layer.name}.dw", h)
            shapes[f"{layer.name}.project.kernel"] = (layer.out_ch, h, 1, 1)
            bn(f"{layer.name}.project", layer.out_ch)
        else:
            shapes[f"{layer.name}.kernel"] = (layer.out_ch, layer.in_ch, 1, 1)
            shapes[f"{layer.name}.bias"] = (layer.out_ch,)
    return shapes


def count_parameters(config: NetworkConfig) -> int:
    """Total learned scalars (kernels, biases, and batch-norm statistics)."""
    return sum(
        int(np.prod(shape)) for shape in parameter_shapes(config).values()
    )


@dataclass
class WeightStore:
    """Raw learned parameters keyed by the names of parameter_shapes."""

    alpha: float
    expansion_factor: int
    bn_eps: float
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def config(self) -> NetworkConfig:
        return NetworkConfig(
            alpha=self.alpha,
            expansion_factor=self.expansion_factor,
            bn_eps=self.bn_eps,
        )

    @property
    def n_scalars(self) -> int:
        return sum(int(t.size) for t in self.tensors.values())

    def validate(self) -> None:
        """Check the tensor set matches the architecture exactly."""
        want = parameter_shapes(self.config())
        missing = sorted(set(want) - set(self.tensors))
        extra = sorted(set(self.tensors) - set(want))
        if missing:
            raise ShapeError(f"weight store is missing tensors: {missing[:5]}")
        if extra:
            raise ShapeError(f"weight store has unknown tensors: {extra[:5]}")
        for name, shape in want.items():
            got = tuple(self.tensors[name].shape)
            if got != shape:
                raise ShapeError(f"tensor {name} has shape {got}, expected {shape}")


class Network:
    """Executable inference graph with batch norm folded into the convs.

    Immutable after construction; forward() allocates fresh outputs, so one
    Network can serve concurrent callers.
    """

    def __init__(self, config: NetworkConfig, params: dict[str, ConvParams]):
        self.config = config
        self.plan = build_plan(config)
        self._params = params

    def features(self, x: np.ndarray) -> dict[str, np.ndarray]:
        """Run the graph and keep every named activation (test/demo hook)."""
        check_nchw(x, "input")
        if x.shape[1] != self.config.input_channels:
            raise ShapeError(
                f"input has {x.shape[1]} channels, network expects "
                f"{self.config.input_channels}"
            )
        feats = {"image": x}
        for layer in self.plan:
            src = feats[layer.source]
            if layer.kind == "conv":
                y = relu6(conv2d(src, self._params[layer.name], name=layer.name))
            elif layer.kind == "head":
                y = conv2d(src, self._params[layer.name], name=layer.name)
            else:
                y = self._bneck(src, layer)
            feats[layer.name] = y
        return feats

    def forward(self, x: np.ndarray) -> list[np.ndarray]:
        """Head outputs in scale order (finest first), raw logits."""
        feats = self.features(x)
        return [feats[f"head{s.receptive_field}"] for s in self.config.scales]

    def _bneck(self, x, layer):
        h = x
        if layer.expansion > 1:
            h = relu6(
                conv2d(h, self._params[f"{layer.name}.expand"],
                       name=f"{layer.name}.expand")
            )
        h = relu6(
            conv2d(h, self._params[f"{layer.name}.dw"], name=f"{layer.name}.dw")
        )
        h = conv2d(
            h, self._params[f"{layer.name}.project"], name=f"{layer.name}.project"
        )
        if layer.has_shortcut:
            h = h + x
        return h


def build_network(store: WeightStore) -> Network:
    """Fold batch norms and assemble an executable Network from raw weights."""
    store.validate()
    config = store.config()
    params: dict[str, ConvParams] = {}

    def folded(prefix, stride, groups):
        kernel = store.tensors[f"{prefix}.kernel"]
        raw = ConvParams(
            kernel,
            np.zeros(kernel.shape[0], dtype=np.float32),
            stride=stride,
            groups=groups,
        )
        return batchnorm_fold(
            raw,
            store.tensors[f"{prefix}.bn.gamma"],
            store.tensors[f"{prefix}.bn.beta"],
            store.tensors[f"{prefix}.bn.mean"],
            store.tensors[f"{prefix}.bn.var"],
            store.bn_eps,
        )

    for layer in build_plan(config):
        if layer.kind == "conv":
            params[layer.name] = folded(layer.name, layer.stride, 1)
        elif layer.kind == "bneck":
            if layer.expansion > 1:
                params[f"{layer.name}.expand"] = folded(f"{layer.name}.expand", 1, 1)
            params[f"{layer.name}.dw"] = folded(
                f"{layer.name}.dw", layer.stride, layer.hidden_ch
            )
            params[f"{layer.name}.project"] = folded(f"{layer.name}.project", 1, 1)
        else:
            params[layer.name] = ConvParams(
                store.tensors[f"{layer.name}.kernel"],
                store.tensors[f"{layer.name}.bias"],
                stride=1,
                groups=1,
            )
    return Network(config, params)
