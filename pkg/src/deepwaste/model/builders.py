"""Graph builders for the two supported backbones.

Builders emit fully shaped graphs with zero-filled weights; real values
arrive either from a model file or from randomize_weights. Every conv is
bias-free because a batchnorm follows it, so biases exist only on the
final fully-connected layer (and on folded convs).
"""

from __future__ import annotations

import math

import numpy as np

from ..engine import BatchNormParams, ConvParams
from ..engine.tensor import DTYPE
from .graph import INPUT, FCParams, GraphNode, ModelGraph, PoolSpec

RESNET50_FEATURE_WIDTH = 2048
MOBILENET_FEATURE_WIDTH = 1024

_RESNET_STAGE_BLOCKS = (3, 4, 6, 3)
_RESNET_STAGE_WIDTHS = (64, 128, 256, 512)
_EXPANSION = 4

# (out_channels, stride) of the 13 depthwise-separable blocks
_MOBILENET_SCHEDULE = (
    (64, 1),
    (128, 2),
    (128, 1),
    (256, 2),
    (256, 1),
    (512, 2),
    (512, 1),
    (512, 1),
    (512, 1),
    (512, 1),
    (512, 1),
    (1024, 2),
    (1024, 1),
)


class _Builder:
    def __init__(self):
        self.nodes: list[GraphNode] = []

    def emit(self, node_id, kind, src, params=None) -> str:
        inputs = (src,) if isinstance(src, str) else tuple(src)
        self.nodes.append(GraphNode(node_id, kind, inputs, params))
        return node_id

    def conv(self, node_id, src, in_ch, out_ch, kernel, stride=1, padding=0, groups=1) -> str:
        w = np.zeros((out_ch, in_ch // groups, kernel, kernel), dtype=DTYPE)
        p = ConvParams(out_ch, in_ch, kernel, stride, padding, groups=groups, weights=w)
        kind = "depthwise_conv" if groups == in_ch == out_ch and groups > 1 else "conv"
        return self.emit(node_id, kind, src, p)

    def bn(self, node_id, src, ch) -> str:
        p = BatchNormParams(
            gamma=np.ones(ch, dtype=DTYPE),
            beta=np.zeros(ch, dtype=DTYPE),
            running_mean=np.zeros(ch, dtype=DTYPE),
            running_var=np.ones(ch, dtype=DTYPE),
        )
        return self.emit(node_id, "batchnorm", src, p)

    def graph(self) -> ModelGraph:
        g = ModelGraph(tuple(self.nodes))
        g.validate()
        return g


def _bottleneck(b: _Builder, prefix, src, in_ch, width, stride) -> str:
    """ResNet v1 bottleneck: stride sits on the first 1x1 conv."""
    out_ch = width * _EXPANSION
    x = b.conv(f"{prefix}.conv1", src, in_ch, width, 1, stride=stride)
    x = b.bn(f"{prefix}.bn1", x, width)
    x = b.emit(f"{prefix}.relu1", "relu", x)
    x = b.conv(f"{prefix}.conv2", x, width, width, 3, padding=1)
    x = b.bn(f"{prefix}.bn2", x, width)
    x = b.emit(f"{prefix}.relu2", "relu", x)
    x = b.conv(f"{prefix}.conv3", x, width, out_ch, 1)
    x = b.bn(f"{prefix}.bn3", x, out_ch)
    if stride != 1 or in_ch != out_ch:
        s = b.conv(f"{prefix}.downsample.conv", src, in_ch, out_ch, 1, stride=stride)
        s = b.bn(f"{prefix}.downsample.bn", s, out_ch)
    else:
        s = src
    x = b.emit(f"{prefix}.add", "add", (x, s))
    return b.emit(f"{prefix}.relu3", "relu", x)


def build_resnet50(num_classes: int) -> ModelGraph:
    """ResNet-50 v1 with the classifier sized for num_classes."""
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    b = _Builder()
    x = b.conv("conv1", INPUT, 3, 64, 7, stride=2, padding=3)
    x = b.bn("bn1", x, 64)
    x = b.emit("relu1", "relu", x)
    x = b.emit("maxpool", "pool", x, PoolSpec("max", 3, 2, 1))
    in_ch = 64
    for stage, (blocks, width) in enumerate(zip(_RESNET_STAGE_BLOCKS, _RESNET_STAGE_WIDTHS), 1):
        for block in range(blocks):
            stride = 2 if stage > 1 and block == 0 else 1
            x = _bottleneck(b, f"layer{stage}.{block}", x, in_ch, width, stride)
            in_ch = width * _EXPANSION
    x = b.emit("avgpool", "global_avg_pool", x)
    w = np.zeros((RESNET50_FEATURE_WIDTH, num_classes), dtype=DTYPE)
    x = b.emit("fc", "fully_connected", x, FCParams(w, np.zeros(num_classes, dtype=DTYPE)))
    b.emit("softmax", "softmax", x)
    return b.graph()


def build_mobilenet_v1(num_classes: int, width_multiplier: float = 1.0) -> ModelGraph:
    """MobileNetV1: stem conv + 13 depthwise-separable blocks."""
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    if width_multiplier <= 0:
        raise ValueError(f"width_multiplier must be positive, got {width_multiplier}")

    def scaled(ch: int) -> int:
        return max(1, int(ch * width_multiplier))

    b = _Builder()
    ch = scaled(32)
    x = b.conv("conv1", INPUT, 3, ch, 3, stride=2, padding=1)
    x = b.bn("bn1", x, ch)
    x = b.emit("relu1", "relu", x)
    for i, (out_ch, stride) in enumerate(_MOBILENET_SCHEDULE, 1):
        out_ch = scaled(out_ch)
        x = b.conv(f"block{i}.dw", x, ch, ch, 3, stride=stride, padding=1, groups=ch)
        x = b.bn(f"block{i}.dw.bn", x, ch)
        x = b.emit(f"block{i}.dw.relu", "relu", x)
        x = b.conv(f"block{i}.pw", x, ch, out_ch, 1)
        x = b.bn(f"block{i}.pw.bn", x, out_ch)
        x = b.emit(f"block{i}.pw.relu", "relu", x)
        ch = out_ch
    x = b.emit("avgpool", "global_avg_pool", x)
    w = np.zeros((ch, num_classes), dtype=DTYPE)
    x = b.emit("fc", "fully_connected", x, FCParams(w, np.zeros(num_classes, dtype=DTYPE)))
    b.emit("softmax", "softmax", x)
    return b.graph()


ARCHITECTURES = {
    "resnet50_v1": build_resnet50,
    "mobilenet_v1": build_mobilenet_v1,
}


def randomize_weights(graph: ModelGraph, seed: int) -> dict[str, np.ndarray]:
    """He-style random weights for every tensor in the graph.

    Batchnorms that feed a residual add get gamma scaled by 1/sqrt(2):
    the sum of two same-variance paths then keeps unit variance, so deep
    stacks of random blocks neither explode nor wash out input signal.
    """
    rng = np.random.default_rng(seed)
    feeds_add = set()
    by_id = {n.id: n for n in graph.nodes}
    for n in graph.nodes:
        if n.kind == "add":
            feeds_add.update(s for s in n.inputs if s in by_id)

    out: dict[str, np.ndarray] = {}
    for n in graph.nodes:
        p = n.params
        if n.kind in ("conv", "depthwise_conv"):
            fan_in = (p.in_channels // p.groups) * p.kernel[0] * p.kernel[1]
            std = math.sqrt(2.0 / fan_in)
            out[f"{n.id}.weight"] = (rng.standard_normal(p.weights.shape) * std).astype(DTYPE)
            if p.bias is not None:
                out[f"{n.id}.bias"] = np.zeros_like(p.bias)
        elif n.kind == "batchnorm":
            c = p.channels
            gamma = rng.uniform(0.8, 1.2, c)
            if n.id in feeds_add:
                gamma = gamma / math.sqrt(2.0)
            out[f"{n.id}.gamma"] = gamma.astype(DTYPE)
            out[f"{n.id}.beta"] = (rng.standard_normal(c) * 0.05).astype(DTYPE)
            out[f"{n.id}.running_mean"] = (rng.standard_normal(c) * 0.05).astype(DTYPE)
            out[f"{n.id}.running_var"] = rng.uniform(0.8, 1.2, c).astype(DTYPE)
        elif n.kind == "fully_connected":
            std = math.sqrt(2.0 / p.in_features)
            out[f"{n.id}.weight"] = (rng.standard_normal(p.weights.shape) * std).astype(DTYPE)
            out[f"{n.id}.bias"] = np.zeros_like(p.bias)
    return out
