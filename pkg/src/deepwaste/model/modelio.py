"""Model file (de)serialization.

A model comes as two files: a UTF-8 JSON manifest and a headerless blob
of little-endian float32 tensors concatenated in manifest order with no
alignment padding. The pair is self-contained, so classification runs
with no network access and no external registry.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..engine import BatchNormParams, ConvParams
from ..errors import ModelFormatError, ModelValidationError, ShapeError, TruncatedBlobError
from .builders import ARCHITECTURES
from .graph import FCParams, GraphNode, ModelGraph, PoolSpec

MAGIC = "DWMODEL"
FORMAT_VERSION = 1

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class InputSpec:
    height: int
    width: int
    channels: int = 3
    mean: tuple[float, ...] = IMAGENET_MEAN
    std: tuple[float, ...] = IMAGENET_STD

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))
        object.__setattr__(self, "std", tuple(float(v) for v in self.std))
        if len(self.mean) != self.channels or len(self.std) != self.channels:
            raise ValueError("normalization constants must have one entry per channel")
        if any(s <= 0 for s in self.std):
            raise ValueError("normalization std must be positive")


@dataclass(frozen=True)
class TensorRecord:
    name: str
    dtype: str
    shape: tuple[int, ...]
    offset: int
    length: int  # bytes


@dataclass(frozen=True)
class ModelManifest:
    architecture: str
    input_spec: InputSpec
    labels: tuple[str, ...]
    tensors: tuple[TensorRecord, ...]
    format_version: int = FORMAT_VERSION

    def parameter_count(self) -> int:
        from .graph import is_parameter

        return sum(
            int(np.prod(t.shape, dtype=np.int64)) if t.shape else 1
            for t in self.tensors
            if is_parameter(t.name)
        )


def _graph_to_json(graph: ModelGraph) -> list[dict]:
    nodes = []
    for n in graph.nodes:
        rec: dict = {"id": n.id, "kind": n.kind, "inputs": list(n.inputs)}
        p = n.params
        if n.kind in ("conv", "depthwise_conv"):
            rec["attrs"] = {
                "out_channels": p.out_channels,
                "in_channels": p.in_channels,
                "kernel": list(p.kernel),
                "stride": list(p.stride),
                "padding": list(p.padding),
                "dilation": list(p.dilation),
                "groups": p.groups,
                "has_bias": p.bias is not None,
            }
        elif n.kind == "batchnorm":
            rec["attrs"] = {"channels": p.channels, "eps": p.eps}
        elif n.kind == "pool":
            rec["attrs"] = {
                "mode": p.mode,
                "kernel": list(p.kernel),
                "stride": list(p.stride),
                "padding": list(p.padding),
            }
        elif n.kind == "fully_connected":
            rec["attrs"] = {"in_features": p.in_features, "out_features": p.out_features}
        nodes.append(rec)
    return nodes


def _graph_from_json(records: list[dict]) -> ModelGraph:
    nodes = []
    for rec in records:
        kind = rec["kind"]
        attrs = rec.get("attrs", {})
        params = None
        if kind in ("conv", "depthwise_conv"):
            shape = (
                attrs["out_channels"],
                attrs["in_channels"] // attrs["groups"],
                *attrs["kernel"],
            )
            params = ConvParams(
                out_channels=attrs["out_channels"],
                in_channels=attrs["in_channels"],
                kernel=tuple(attrs["kernel"]),
                stride=tuple(attrs["stride"]),
                padding=tuple(attrs["padding"]),
                dilation=tuple(attrs["dilation"]),
                groups=attrs["groups"],
                weights=np.zeros(shape, dtype=np.float32),
                bias=np.zeros(attrs["out_channels"], np.float32) if attrs["has_bias"] else None,
            )
        elif kind == "batchnorm":
            c = attrs["channels"]
            params = BatchNormParams(
                np.ones(c, np.float32),
                np.zeros(c, np.float32),
                np.zeros(c, np.float32),
                np.ones(c, np.float32),
                eps=attrs["eps"],
            )
        elif kind == "pool":
            params = PoolSpec(
                attrs["mode"],
                tuple(attrs["kernel"]),
                tuple(attrs["stride"]),
                tuple(attrs["padding"]),
            )
        elif kind == "fully_connected":
            params = FCParams(
                np.zeros((attrs["in_features"], attrs["out_features"]), np.float32),
                np.zeros(attrs["out_features"], np.float32),
            )
        nodes.append(GraphNode(rec["id"], kind, tuple(rec["inputs"]), params))
    return ModelGraph(tuple(nodes))


def save_model(
    graph: ModelGraph,
    weights: dict[str, np.ndarray],
    manifest_path: str | Path,
    blob_path: str | Path,
    *,
    architecture: str,
    input_spec: InputSpec,
    labels: tuple[str, ...],
) -> ModelManifest:
    """Write the manifest/blob pair; returns the manifest that was written.

    weights must cover every tensor the graph declares; tensors land in
    the blob in graph declaration order, gap-free.
    """
    graph.validate()
    if architecture not in ARCHITECTURES and architecture != "custom":
        raise ModelFormatError(f"unknown architecture id {architecture!r}")
    declared = graph.tensors()
    records = []
    chunks = []
    offset = 0
    for name, ref in declared.items():
        if name not in weights:
            node_id = name.rsplit(".", 1)[0]
            raise ModelFormatError(f"missing tensor {name!r} for node {node_id!r}")
        arr = np.ascontiguousarray(weights[name], dtype="<f4")
        if arr.shape != ref.shape:
            raise ModelValidationError(
                f"tensor {name!r}: expected shape {ref.shape}, got {arr.shape}"
            )
        raw = arr.tobytes()
        records.append(TensorRecord(name, "f32", tuple(arr.shape), offset, len(raw)))
        chunks.append(raw)
        offset += len(raw)
    extra = sorted(set(weights) - set(declared))
    if extra:
        raise ModelValidationError(f"weights contain tensors the graph does not declare: {extra}")

    manifest = ModelManifest(
        architecture=architecture,
        input_spec=input_spec,
        labels=tuple(labels),
        tensors=tuple(records),
    )
    doc = {
        "magic": MAGIC,
        "format_version": FORMAT_VERSION,
        "architecture": architecture,
        "input": {
            "height": input_spec.height,
            "width": input_spec.width,
            "channels": input_spec.channels,
            "mean": list(input_spec.mean),
            "std": list(input_spec.std),
        },
        "labels": list(labels),
        "tensors": [
            {
                "name": r.name,
                "dtype": r.dtype,
                "shape": list(r.shape),
                "offset": r.offset,
                "length": r.length,
            }
            for r in records
        ],
    }
    if architecture == "custom":
        doc["graph"] = _graph_to_json(graph)
    Path(blob_path).write_bytes(b"".join(chunks))
    Path(manifest_path).write_text(json.dumps(doc, indent=1), encoding="utf-8")
    return manifest


def read_manifest(manifest_path: str | Path) -> tuple[ModelManifest, dict, str]:
    """Parse and structurally check a manifest; returns (manifest, raw doc, sha256)."""
    raw = Path(manifest_path).read_bytes()
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ModelFormatError(f"manifest is not valid JSON: {e}") from e
    if not isinstance(doc, dict) or doc.get("magic") != MAGIC:
        raise ModelFormatError(f"bad magic: expected {MAGIC!r}, got {doc.get('magic')!r}")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format_version {doc.get('format_version')!r}")
    try:
        spec = InputSpec(
            height=int(doc["input"]["height"]),
            width=int(doc["input"]["width"]),
            channels=int(doc["input"]["channels"]),
            mean=doc["input"]["mean"],
            std=doc["input"]["std"],
        )
        labels = tuple(str(v) for v in doc["labels"])
        tensors = tuple(
            TensorRecord(
                name=str(t["name"]),
                dtype=str(t["dtype"]),
                shape=tuple(int(v) for v in t["shape"]),
                offset=int(t["offset"]),
                length=int(t["length"]),
            )
            for t in doc["tensors"]
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"manifest field missing or malformed: {e}") from e
    manifest = ModelManifest(
        architecture=str(doc.get("architecture", "")),
        input_spec=spec,
        labels=labels,
        tensors=tensors,
    )
    return manifest, doc, hashlib.sha256(raw).hexdigest()


def _check_records(tensors: tuple[TensorRecord, ...], blob_len: int) -> None:
    prev_end = None
    for t in tensors:
        if t.dtype != "f32":
            raise ModelFormatError(f"tensor {t.name!r} has unsupported dtype {t.dtype!r}")
        want = int(np.prod(t.shape, dtype=np.int64)) * 4 if t.shape else 4
        if t.length != want:
            raise ModelValidationError(
                f"tensor {t.name!r}: shape {t.shape} needs {want} bytes, record says {t.length}"
            )
        if prev_end is not None and t.offset < prev_end:
            raise ModelValidationError(f"tensor {t.name!r} overlaps the previous tensor")
        if t.offset + t.length > blob_len:
            raise TruncatedBlobError(
                f"blob holds {blob_len} bytes but tensor {t.name!r} "
                f"ends at byte {t.offset + t.length}"
            )
        prev_end = t.offset + t.length


def load_model(manifest_path: str | Path, blob_path: str | Path, fold_bn: bool = False):
    """Load, validate, and (optionally) batchnorm-fold a model file pair."""
    from .runtime import Model

    manifest, doc, digest = read_manifest(manifest_path)
    if manifest.architecture in ARCHITECTURES:
        graph = ARCHITECTURES[manifest.architecture](len(manifest.labels))
    elif manifest.architecture == "custom":
        if "graph" not in doc:
            raise ModelFormatError("custom-architecture manifest lacks a graph description")
        graph = _graph_from_json(doc["graph"])
        graph.validate()
    else:
        raise ModelFormatError(f"unknown architecture id {manifest.architecture!r}")

    blob = Path(blob_path).read_bytes()
    _check_records(manifest.tensors, len(blob))
    values = {
        t.name: np.frombuffer(blob, dtype="<f4", count=t.length // 4, offset=t.offset)
        .reshape(t.shape)
        .copy()
        for t in manifest.tensors
    }
    missing = sorted(set(graph.tensors()) - set(values))
    if missing:
        raise ModelValidationError(f"model file lacks tensor {missing[0]!r}")
    try:
        graph = graph.with_tensors(values)
    except KeyError as e:
        raise ModelValidationError(f"tensor {e.args[0]!r} does not belong to the architecture")
    except ShapeError as e:
        raise ModelValidationError(str(e)) from e

    return Model.from_graph(
        graph,
        input_spec=manifest.input_spec,
        labels=manifest.labels,
        architecture=manifest.architecture,
        model_id=digest,
        fold_bn=fold_bn,
    )
