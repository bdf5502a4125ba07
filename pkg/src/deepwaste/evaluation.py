"""Per-class average precision, confusion counts, and latency statistics.

AP here is the interpolation-free classic form: rank by score descending
(stable ties) and average precision at each positive rank. mAP is the
unweighted mean over classes. That definition is deliberate and oracle-
tested; see the per-class report for the individual values.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .errors import MissingClassError, UndefinedMetricError
from .imaging import decode, to_input_tensor


def average_precision(scores, positives) -> float:
    """Mean precision at the rank of each positive, ties in input order."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    if scores.shape != positives.shape or scores.ndim != 1:
        raise ValueError(
            f"scores and positives must be equal-length vectors, got "
            f"{scores.shape} and {positives.shape}"
        )
    total = int(positives.sum())
    if total == 0:
        raise UndefinedMetricError("average precision is undefined without positives")
    order = np.argsort(-scores, kind="stable")
    hits = 0
    ap = 0.0
    for rank, idx in enumerate(order, 1):
        if positives[idx]:
            hits += 1
            ap += hits / rank
    return ap / total


def confusion_matrix(truths, predictions, num_classes: int) -> np.ndarray:
    """counts[true][pred]; inputs are class indices."""
    truths = np.asarray(truths, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if truths.shape != predictions.shape or truths.ndim != 1:
        raise ValueError("truths and predictions must be equal-length vectors")
    for name, arr in (("truth", truths), ("prediction", predictions)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValueError(f"{name} labels must lie in [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (truths, predictions), 1)
    return counts


@dataclass(frozen=True)
class LatencyStats:
    runs: int
    mean_ms: float
    p50_ms: float
    p95_ms: float
    min_ms: float
    max_ms: float

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("latency stats need at least one run")
        if not self.min_ms <= self.p50_ms <= self.p95_ms <= self.max_ms:
            raise ValueError("latency percentiles are out of order")

    @classmethod
    def from_times(cls, times_ms) -> "LatencyStats":
        t = np.asarray(times_ms, dtype=np.float64)
        return cls(
            runs=t.size,
            mean_ms=float(t.mean()),
            p50_ms=float(np.percentile(t, 50)),
            p95_ms=float(np.percentile(t, 95)),
            min_ms=float(t.min()),
            max_ms=float(t.max()),
        )

    def as_dict(self) -> dict:
        return {
            "runs": self.runs,
            "mean_ms": self.mean_ms,
            "p50_ms": self.p50_ms,
            "p95_ms": self.p95_ms,
            "min_ms": self.min_ms,
            "max_ms": self.max_ms,
        }


@dataclass(frozen=True)
class EvalReport:
    labels: tuple[str, ...]
    per_class_ap: dict[str, float]
    mean_ap: float
    confusion: np.ndarray  # rows = true, cols = predicted
    counts: dict[str, int]

    def as_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "per_class_ap": {k: float(v) for k, v in self.per_class_ap.items()},
            "mean_ap": float(self.mean_ap),
            "confusion": self.confusion.tolist(),
            "counts": dict(self.counts),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)

    def to_table(self) -> str:
        """Aligned per-class AP table with an Overall row."""
        rows = [(label.capitalize(), self.per_class_ap[label]) for label in self.labels]
        rows.append(("Overall", self.mean_ap))
        name_w = max(len(name) for name, _ in rows)
        lines = [f"{'Class'.ljust(name_w)}  Average precision"]
        for name, value in rows:
            lines.append(f"{name.ljust(name_w)}  {value:.3f}")
        return "\n".join(lines)


def mean_average_precision(per_class_ap: dict[str, float]) -> float:
    """Unweighted mean over classes."""
    if not per_class_ap:
        raise UndefinedMetricError("no per-class values to average")
    return float(sum(per_class_ap.values()) / len(per_class_ap))


def score_items(model, items) -> tuple[np.ndarray, np.ndarray]:
    """(N x K confidences, N true indices) for dataset items, no augmentation."""
    index = {label: i for i, label in enumerate(model.labels)}
    scores = np.zeros((len(items), len(model.labels)), dtype=np.float32)
    truths = np.zeros(len(items), dtype=np.int64)
    for row, item in enumerate(sorted(items, key=lambda i: i.id)):
        img = decode(item.path.read_bytes())
        scores[row] = model.forward(to_input_tensor(img, model.input_spec)).confidences
        truths[row] = index[item.label]
    return scores, truths


def evaluate(model, items) -> EvalReport:
    """One-vs-rest AP per class + confusion from argmax over a test split."""
    labels = model.labels
    present = {item.label for item in items}
    missing = [label for label in labels if label not in present]
    if missing:
        raise MissingClassError(f"split has no items for class(es): {', '.join(missing)}")
    scores, truths = score_items(model, items)
    per_class = {
        label: average_precision(scores[:, k], truths == k) for k, label in enumerate(labels)
    }
    preds = np.argmax(scores, axis=1)
    counts = {label: int((truths == k).sum()) for k, label in enumerate(labels)}
    return EvalReport(
        labels=labels,
        per_class_ap=per_class,
        mean_ap=mean_average_precision(per_class),
        confusion=confusion_matrix(truths, preds, len(labels)),
        counts=counts,
    )


def latency_benchmark(model, x: np.ndarray, runs: int, warmup: int = 1) -> LatencyStats:
    """Wall-clock forward times after discarding warmup runs."""
    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")
    if warmup < 0:
        raise ValueError(f"warmup must be >= 0, got {warmup}")
    for _ in range(warmup):
        model.forward(x)
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        model.forward(x)
        times.append((time.perf_counter() - t0) * 1e3)
    return LatencyStats.from_times(times)
