"""Desk-scale transfer learning: frozen backbone, trainable softmax head.

Features come from the model's global-average-pool tap; only the final
fully-connected layer is learned, which keeps the objective convex and
the whole loop reproducible from a single seed. Gradients are analytic
and checked against central finite differences in the test suite.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DecodeError, DatasetError, MissingClassError, ShapeError
from .imaging import decode, to_input_tensor
from .model.graph import FCParams, ModelGraph
from .model.runtime import Model


@dataclass(frozen=True)
class HeadWeights:
    """W is classes x features; b is one bias per class."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise ShapeError(f"head shapes disagree: W {W.shape}, b {b.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("head weights must be finite")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def num_classes(self) -> int:
        return self.W.shape[0]

    @property
    def feature_width(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    epochs: int = 100
    batch_size: int = 32
    weight_decay: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")


def extract_dataset_features(model: Model, items) -> tuple[np.ndarray, np.ndarray]:
    """Row i = backbone features of item i; labels returned as class indices."""
    index = {label: k for k, label in enumerate(model.labels)}
    features = np.zeros((len(items), model.feature_width), dtype=np.float32)
    labels = np.zeros(len(items), dtype=np.int64)
    for row, item in enumerate(items):
        if item.label not in index:
            raise DatasetError(f"item {item.id} has label {item.label!r} unknown to the model")
        try:
            img = decode(item.path.read_bytes())
        except (OSError, DecodeError) as e:
            raise DatasetError(f"cannot decode item {item.id}: {e}") from e
        features[row] = model.extract_features(to_input_tensor(img, model.input_spec))
        labels[row] = index[item.label]
    return features, labels


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, label: int) -> float:
    """-log softmax(logits)[label], computed in float64."""
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    if not 0 <= label < z.size:
        raise ValueError(f"label {label} out of range for {z.size} classes")
    shifted = z - z.max()
    return float(np.log(np.exp(shifted).sum()) - shifted[label])


def head_gradient(
    W: np.ndarray,
    b: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    weight_decay: float = 0.0,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Gradient of mean cross-entropy + (decay/2)*||W||^2 at (W, b).

    dW = (softmax(z) - onehot)^T x / N + decay * W, with z = x W^T + b.
    """
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[1]:
        raise ShapeError(f"features {x.shape} do not match head W {W.shape}")
    if y.shape != (x.shape[0],):
        raise ShapeError(f"labels shape {y.shape} does not match {x.shape[0]} rows")
    n = x.shape[0]
    z = x @ W.T + b
    p = _softmax_rows(z)
    # log-sum-exp form: -log p underflows for badly separated logits, lse never does
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    nll = lse - shifted[np.arange(n), y]
    loss = float(nll.mean() + 0.5 * weight_decay * np.sum(W * W))
    g = p
    g[np.arange(n), y] -= 1.0
    g /= n
    dW = g.T @ x + weight_decay * W
    db = g.sum(axis=0)
    return dW, db, loss


def train_head(
    features: np.ndarray, labels: np.ndarray, cfg: TrainConfig, num_classes: int | None = None
) -> tuple[HeadWeights, list[float]]:
    """Minibatch SGD with momentum from zero init; per-epoch mean loss history."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ShapeError(f"features {x.shape} and labels {y.shape} do not line up")
    if num_classes is None:
        num_classes = int(y.max()) + 1 if y.size else 0
    if num_classes < 2:
        raise MissingClassError(f"need at least 2 classes, got {num_classes}")
    if x.shape[0] < num_classes:
        raise DatasetError(f"need at least {num_classes} items, got {x.shape[0]}")
    missing = sorted(set(range(num_classes)) - set(int(v) for v in y))
    if missing:
        raise MissingClassError(f"training data lacks class indices: {missing}")

    n, f = x.shape
    W = np.zeros((num_classes, f), dtype=np.float64)
    b = np.zeros(num_classes, dtype=np.float64)
    vW = np.zeros_like(W)
    vb = np.zeros_like(b)
    rng = np.random.default_rng(cfg.seed)
    history: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            dW, db, loss = head_gradient(W, b, x[batch], y[batch], cfg.weight_decay)
            vW = cfg.momentum * vW - cfg.learning_rate * dW
            vb = cfg.momentum * vb - cfg.learning_rate * db
            W = W + vW
            b = b + vb
            epoch_loss += loss * (len(batch) / n)
        history.append(epoch_loss)
    return HeadWeights(W, b), history


def head_accuracy(head: HeadWeights, features, labels) -> float:
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    preds = np.argmax(x @ head.W.T + head.b, axis=1)
    return float((preds == y).mean())


def attach_head(model: Model, head: HeadWeights) -> Model:
    """New model whose fully-connected layer holds the trained head."""
    if head.feature_width != model.feature_width:
        raise ShapeError(
            f"head expects {head.feature_width} features, "
            f"model taps {model.feature_width}"
        )
    fc_nodes = [n for n in model.graph.nodes if n.kind == "fully_connected"]
    (fc,) = fc_nodes
    if head.num_classes != fc.params.out_features:
        raise ShapeError(
            f"head has {head.num_classes} classes, model fc emits {fc.params.out_features}"
        )
    params = FCParams(
        head.W.T.astype(np.float32), head.b.astype(np.float32)
    )
    nodes = tuple(replace(n, params=params) if n.id == fc.id else n for n in model.graph.nodes)
    return Model(
        ModelGraph(nodes),
        model.input_spec,
        model.labels,
        model.architecture,
        model.model_id,
    )


def write_loss_csv(history: list[float], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "mean_loss"])
        for epoch, loss in enumerate(history, 1):
            writer.writerow([epoch, f"{loss:.8f}"])
