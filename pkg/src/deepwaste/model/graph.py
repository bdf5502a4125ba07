"""Dataflow graphs for CNN inference.

A graph is an ordered collection of nodes; edges are named references to
producer nodes, with the reserved name ``input`` standing for the graph
input. Validation proves the graph acyclic with a single output, checks
operator arity, infers every intermediate shape, and locates the single
global-average-pool node that serves as the feature tap for transfer
learning.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..engine import BatchNormParams, ConvParams, conv_output_hw, fold_batchnorm
from ..engine.tensor import as_tensor, pair as _pair
from ..errors import GraphValidationError, ShapeError

INPUT = "input"

NODE_KINDS = frozenset(
    {
        "conv",
        "depthwise_conv",
        "batchnorm",
        "relu",
        "pool",
        "global_avg_pool",
        "fully_connected",
        "softmax",
        "add",
    }
)

_ARITY = {"add": 2}  # every other kind takes exactly one input


@dataclass(frozen=True)
class PoolSpec:
    mode: str
    kernel: tuple[int, int]
    stride: tuple[int, int] | None = None
    padding: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.mode not in ("max", "avg"):
            raise ValueError(f"pool mode must be 'max' or 'avg', got {self.mode!r}")
        object.__setattr__(self, "kernel", _pair(self.kernel))
        stride = _pair(self.stride) if self.stride is not None else self.kernel
        object.__setattr__(self, "stride", stride)
        object.__setattr__(self, "padding", _pair(self.padding))


@dataclass(frozen=True)
class FCParams:
    weights: np.ndarray  # in_features x out_features
    bias: np.ndarray

    def __post_init__(self):
        w = as_tensor(self.weights)
        if w.ndim != 2:
            raise ShapeError(f"fully-connected weights must be 2-D, got shape {w.shape}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", as_tensor(self.bias, (w.shape[1],)))

    @property
    def in_features(self) -> int:
        return self.weights.shape[0]

    @property
    def out_features(self) -> int:
        return self.weights.shape[1]


_PARAM_TYPES = {
    "conv": ConvParams,
    "depthwise_conv": ConvParams,
    "batchnorm": BatchNormParams,
    "pool": PoolSpec,
    "fully_connected": FCParams,
}


@dataclass(frozen=True)
class GraphNode:
    id: str
    kind: str
    inputs: tuple[str, ...] = ()
    params: object = None

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise GraphValidationError(f"unknown op kind {self.kind!r} on node {self.id!r}")
        object.__setattr__(self, "inputs", tuple(self.inputs))
        want = _PARAM_TYPES.get(self.kind)
        if want is not None and not isinstance(self.params, want):
            raise GraphValidationError(
                f"node {self.id!r} ({self.kind}) needs {want.__name__} params"
            )
        if want is None and self.params is not None:
            raise GraphValidationError(f"node {self.id!r} ({self.kind}) takes no params")


def _node_tensors(node: GraphNode) -> dict[str, np.ndarray]:
    p = node.params
    if node.kind in ("conv", "depthwise_conv"):
        out = {f"{node.id}.weight": p.weights}
        if p.bias is not None:
            out[f"{node.id}.bias"] = p.bias
        return out
    if node.kind == "batchnorm":
        return {
            f"{node.id}.gamma": p.gamma,
            f"{node.id}.beta": p.beta,
            f"{node.id}.running_mean": p.running_mean,
            f"{node.id}.running_var": p.running_var,
        }
    if node.kind == "fully_connected":
        return {f"{node.id}.weight": p.weights, f"{node.id}.bias": p.bias}
    return {}


def _with_node_tensors(node: GraphNode, pick) -> GraphNode:
    """Rebuild node params from pick(tensor_name, current_value)."""
    p = node.params
    if node.kind in ("conv", "depthwise_conv"):
        bias = None if p.bias is None else pick(f"{node.id}.bias", p.bias)
        return replace(
            node, params=replace(p, weights=pick(f"{node.id}.weight", p.weights), bias=bias)
        )
    if node.kind == "batchnorm":
        return replace(
            node,
            params=BatchNormParams(
                gamma=pick(f"{node.id}.gamma", p.gamma),
                beta=pick(f"{node.id}.beta", p.beta),
                running_mean=pick(f"{node.id}.running_mean", p.running_mean),
                running_var=pick(f"{node.id}.running_var", p.running_var),
                eps=p.eps,
            ),
        )
    if node.kind == "fully_connected":
        return replace(
            node,
            params=FCParams(pick(f"{node.id}.weight", p.weights), pick(f"{node.id}.bias", p.bias)),
        )
    return node


# tensors trainable by the transfer-learning head / counted as model parameters;
# batchnorm running statistics are inference buffers, not parameters
_BUFFER_SUFFIXES = (".running_mean", ".running_var")


def is_parameter(tensor_name: str) -> bool:
    return not tensor_name.endswith(_BUFFER_SUFFIXES)


@dataclass(frozen=True)
class ModelGraph:
    nodes: tuple[GraphNode, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))

    def node(self, node_id: str) -> GraphNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def validate(self, input_shape: tuple[int, ...] | None = None) -> tuple[str, ...]:
        """Check structural invariants; return a topological node order.

        With input_shape (N, C, H, W) also infers every intermediate shape,
        so a validated graph executes without shape errors.
        """
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise GraphValidationError(f"duplicate node ids: {dup}")
        if INPUT in ids:
            raise GraphValidationError(f"node id {INPUT!r} is reserved for the graph input")
        by_id = {n.id: n for n in self.nodes}
        for n in self.nodes:
            want = _ARITY.get(n.kind, 1)
            if len(n.inputs) != want:
                raise GraphValidationError(
                    f"node {n.id!r} ({n.kind}) takes {want} input(s), got {len(n.inputs)}"
                )
            for src in n.inputs:
                if src != INPUT and src not in by_id:
                    raise GraphValidationError(f"node {n.id!r} reads unknown node {src!r}")

        order = self._topological_order(by_id)

        consumed = {src for n in self.nodes for src in n.inputs}
        outputs = [i for i in ids if i not in consumed]
        if len(outputs) != 1:
            raise GraphValidationError(f"graph must have exactly one output node, got {outputs}")
        if INPUT not in consumed:
            raise GraphValidationError("no node reads the graph input")
        taps = [n.id for n in self.nodes if n.kind == "global_avg_pool"]
        if len(taps) != 1:
            raise GraphValidationError(
                f"graph must contain exactly one global_avg_pool feature tap, got {taps}"
            )
        if input_shape is not None:
            self.infer_shapes(input_shape, order=order)
        return order

    def _topological_order(self, by_id) -> tuple[str, ...]:
        indeg = {n.id: sum(1 for s in n.inputs if s != INPUT) for n in self.nodes}
        consumers: dict[str, list[str]] = {n.id: [] for n in self.nodes}
        for n in self.nodes:
            for src in n.inputs:
                if src != INPUT:
                    consumers[src].append(n.id)
        ready = [i for i, d in indeg.items() if d == 0]
        order: list[str] = []
        while ready:
            nid = ready.pop()
            order.append(nid)
            for c in consumers[nid]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        if len(order) != len(self.nodes):
            stuck = sorted(i for i, d in indeg.items() if d > 0)
            raise GraphValidationError(f"graph contains a cycle through {stuck}")
        return tuple(order)

    def infer_shapes(self, input_shape, order=None) -> dict[str, tuple[int, ...]]:
        if order is None:
            order = self._topological_order({n.id: n for n in self.nodes})
        shapes: dict[str, tuple[int, ...]] = {INPUT: tuple(input_shape)}
        by_id = {n.id: n for n in self.nodes}
        for nid in order:
            n = by_id[nid]
            try:
                shapes[nid] = _infer_node_shape(n, [shapes[s] for s in n.inputs])
            except ShapeError as e:
                raise GraphValidationError(f"node {nid!r} ({n.kind}): {e}") from e
        return shapes

    @property
    def output_id(self) -> str:
        consumed = {src for n in self.nodes for src in n.inputs}
        (out,) = [n.id for n in self.nodes if n.id not in consumed]
        return out

    @property
    def feature_tap_id(self) -> str:
        (tap,) = [n.id for n in self.nodes if n.kind == "global_avg_pool"]
        return tap

    def tensors(self) -> dict[str, np.ndarray]:
        """All weight tensors in node order (the serialization order)."""
        out: dict[str, np.ndarray] = {}
        for n in self.nodes:
            out.update(_node_tensors(n))
        return out

    def with_tensors(self, values: dict[str, np.ndarray]) -> ModelGraph:
        """New graph with weights replaced by values; unknown names rejected."""
        needed = self.tensors().keys()
        extra = sorted(set(values) - set(needed))
        if extra:
            raise KeyError(extra[0])

        def pick(name, current):
            arr = as_tensor(values[name])
            if arr.shape != current.shape:
                raise ShapeError(
                    f"tensor {name!r}: expected shape {current.shape}, got {arr.shape}"
                )
            return arr

        return ModelGraph(tuple(_with_node_tensors(n, pick) for n in self.nodes))

    def parameter_count(self) -> int:
        return sum(v.size for k, v in self.tensors().items() if is_parameter(k))


def fold_batchnorms(graph: ModelGraph) -> ModelGraph:
    """Merge every conv -> batchnorm pair into the conv, dropping the BN node.

    A pair folds only when the batchnorm is the sole consumer of the conv.
    Both builders satisfy that everywhere, so folded graphs contain no
    batchnorm nodes at all.
    """
    consumers: dict[str, list[GraphNode]] = {}
    for n in graph.nodes:
        for src in n.inputs:
            consumers.setdefault(src, []).append(n)
    by_id = {n.id: n for n in graph.nodes}

    folded: dict[str, GraphNode] = {}  # conv id -> conv with BN absorbed
    dropped: dict[str, str] = {}  # bn id -> conv id now standing in for it
    for n in graph.nodes:
        if n.kind != "batchnorm":
            continue
        src = by_id.get(n.inputs[0])
        if src is None or src.kind not in ("conv", "depthwise_conv"):
            continue
        if len(consumers.get(src.id, ())) != 1:
            continue
        folded[src.id] = replace(src, params=fold_batchnorm(src.params, n.params))
        dropped[n.id] = src.id

    nodes = []
    for n in graph.nodes:
        if n.id in dropped:
            continue
        n = folded.get(n.id, n)
        if any(s in dropped for s in n.inputs):
            n = replace(n, inputs=tuple(dropped.get(s, s) for s in n.inputs))
        nodes.append(n)
    return ModelGraph(tuple(nodes))


def _infer_node_shape(n: GraphNode, ins: list[tuple[int, ...]]) -> tuple[int, ...]:
    kind, p = n.kind, n.params
    if kind in ("conv", "depthwise_conv"):
        (s,) = ins
        if len(s) != 4:
            raise ShapeError(f"expected NCHW input, got shape {s}")
        if s[1] != p.in_channels:
            raise ShapeError(f"input has {s[1]} channels, conv expects {p.in_channels}")
        ho, wo = conv_output_hw(s[2], s[3], p.kernel, p.stride, p.padding, p.dilation)
        return (s[0], p.out_channels, ho, wo)
    if kind == "batchnorm":
        (s,) = ins
        if len(s) != 4 or s[1] != p.channels:
            raise ShapeError(f"input shape {s} does not match batchnorm over {p.channels} channels")
        return s
    if kind == "pool":
        (s,) = ins
        if len(s) != 4:
            raise ShapeError(f"expected NCHW input, got shape {s}")
        ho, wo = conv_output_hw(s[2], s[3], p.kernel, p.stride, p.padding, (1, 1))
        return (s[0], s[1], ho, wo)
    if kind == "global_avg_pool":
        (s,) = ins
        if len(s) != 4:
            raise ShapeError(f"expected NCHW input, got shape {s}")
        return (s[0], s[1])
    if kind == "fully_connected":
        (s,) = ins
        if len(s) != 2 or s[1] != p.in_features:
            raise ShapeError(f"input shape {s} does not match weights {p.weights.shape}")
        return (s[0], p.out_features)
    if kind == "add":
        a, b = ins
        if a != b:
            raise ShapeError(f"add inputs disagree: {a} vs {b}")
        return a
    # relu / softmax pass shape through
    (s,) = ins
    return s
