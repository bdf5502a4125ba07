"""Graph execution: forward passes, predictions, feature extraction.

A Model is immutable after construction; concurrent forward calls from
multiple threads are safe because execution keeps all state in locals.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..engine import (
    batchnorm_infer,
    conv2d,
    depthwise_conv2d,
    fully_connected,
    global_avg_pool,
    pool2d,
    relu,
    softmax,
)
from ..engine.tensor import DTYPE, as_tensor
from ..errors import ShapeError
from .graph import INPUT, GraphNode, ModelGraph, fold_batchnorms
from .modelio import InputSpec


@dataclass(frozen=True)
class Prediction:
    """One classification: confidences aligned with labels, argmax, timing."""

    labels: tuple[str, ...]
    confidences: np.ndarray
    latency_ms: float

    @property
    def label(self) -> str:
        return self.labels[int(np.argmax(self.confidences))]

    def as_dict(self) -> dict[str, float]:
        return {lab: float(c) for lab, c in zip(self.labels, self.confidences)}


def _eval_node(n: GraphNode, args: list[np.ndarray]) -> np.ndarray:
    kind = n.kind
    if kind == "conv":
        return conv2d(args[0], n.params)
    if kind == "depthwise_conv":
        return depthwise_conv2d(args[0], n.params)
    if kind == "batchnorm":
        return batchnorm_infer(args[0], n.params)
    if kind == "relu":
        return relu(args[0])
    if kind == "pool":
        p = n.params
        return pool2d(args[0], p.mode, p.kernel, p.stride, p.padding)
    if kind == "global_avg_pool":
        return global_avg_pool(args[0])
    if kind == "fully_connected":
        return fully_connected(args[0], n.params.weights, n.params.bias)
    if kind == "softmax":
        return softmax(args[0], axis=-1)
    if kind == "add":
        return args[0] + args[1]
    raise AssertionError(f"unreachable op kind {kind}")


class Model:
    """A validated, weight-bearing graph plus its input contract and labels."""

    def __init__(
        self,
        graph: ModelGraph,
        input_spec: InputSpec,
        labels: tuple[str, ...],
        architecture: str = "custom",
        model_id: str | None = None,
    ):
        self._order = graph.validate(
            (1, input_spec.channels, input_spec.height, input_spec.width)
        )
        self.graph = graph
        self.input_spec = input_spec
        self.labels = tuple(labels)
        self.architecture = architecture
        self.model_id = model_id
        self._by_id = {n.id: n for n in graph.nodes}
        self.output_id = graph.output_id
        self.feature_tap_id = graph.feature_tap_id
        fc = next(n for n in graph.nodes if n.kind == "fully_connected")
        if fc.params.out_features != len(self.labels):
            raise ShapeError(
                f"model emits {fc.params.out_features} classes "
                f"but carries {len(self.labels)} labels"
            )

    @classmethod
    def from_graph(cls, graph, input_spec, labels, architecture="custom", model_id=None,
                   fold_bn: bool = False) -> "Model":
        if fold_bn:
            graph = fold_batchnorms(graph)
        return cls(graph, input_spec, labels, architecture, model_id)

    def folded(self) -> "Model":
        """Copy of this model with every batchnorm merged into its conv."""
        return Model(
            fold_batchnorms(self.graph),
            self.input_spec,
            self.labels,
            self.architecture,
            self.model_id,
        )

    @property
    def feature_width(self) -> int:
        shapes = self.graph.infer_shapes(
            (1, self.input_spec.channels, self.input_spec.height, self.input_spec.width)
        )
        return shapes[self.feature_tap_id][1]

    def _check_input(self, x: np.ndarray, batch: bool) -> np.ndarray:
        x = as_tensor(x)
        s = self.input_spec
        want = (s.channels, s.height, s.width)
        ok = x.ndim == 4 and x.shape[1:] == want and (batch or x.shape[0] == 1)
        if not ok:
            lead = "N" if batch else "1"
            raise ShapeError(
                f"expected input {lead}x{s.channels}x{s.height}x{s.width}, got {x.shape}"
            )
        return x

    def _execute(self, x: np.ndarray, upto: str) -> np.ndarray:
        remaining = {INPUT: 0}
        for n in self.graph.nodes:
            for src in n.inputs:
                remaining[src] = remaining.get(src, 0) + 1
        values: dict[str, np.ndarray] = {INPUT: x}
        for nid in self._order:
            n = self._by_id[nid]
            values[nid] = _eval_node(n, [values[s] for s in n.inputs])
            if nid == upto:
                return values[nid]
            for src in n.inputs:
                remaining[src] -= 1
                if remaining[src] == 0 and src != upto:
                    del values[src]  # free activations as soon as consumed
        return values[upto]

    def forward(self, x: np.ndarray) -> Prediction:
        """Classify one 1xCxHxW tensor; deterministic for fixed input."""
        x = self._check_input(x, batch=False)
        t0 = time.perf_counter()
        probs = self._execute(x, self.output_id)
        latency_ms = (time.perf_counter() - t0) * 1e3
        return Prediction(self.labels, probs.reshape(-1).astype(DTYPE), latency_ms)

    def forward_batch(self, x: np.ndarray) -> np.ndarray:
        """(N, C, H, W) -> (N, num_classes) class probabilities."""
        x = self._check_input(x, batch=True)
        return self._execute(x, self.output_id)

    def extract_features(self, x: np.ndarray) -> np.ndarray:
        """Activations at the global-average-pool tap, as a flat vector."""
        x = self._check_input(x, batch=False)
        return self._execute(x, self.feature_tap_id).reshape(-1)

    def features_batch(self, x: np.ndarray) -> np.ndarray:
        x = self._check_input(x, batch=True)
        return self._execute(x, self.feature_tap_id)
