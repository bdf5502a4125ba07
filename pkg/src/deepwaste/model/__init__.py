"""Model graphs, builders, file format, and the inference runtime."""

from .builders import (
    ARCHITECTURES,
    MOBILENET_FEATURE_WIDTH,
    RESNET50_FEATURE_WIDTH,
    build_mobilenet_v1,
    build_resnet50,
    randomize_weights,
)
from .graph import (
    INPUT,
    FCParams,
    GraphNode,
    ModelGraph,
    PoolSpec,
    fold_batchnorms,
    is_parameter,
)
from .modelio import (
    FORMAT_VERSION,
    IMAGENET_MEAN,
    IMAGENET_STD,
    MAGIC,
    InputSpec,
    ModelManifest,
    TensorRecord,
    load_model,
    read_manifest,
    save_model,
)
from .runtime import Model, Prediction

__all__ = [
    "ARCHITECTURES",
    "FORMAT_VERSION",
    "IMAGENET_MEAN",
    "IMAGENET_STD",
    "INPUT",
    "MAGIC",
    "MOBILENET_FEATURE_WIDTH",
    "RESNET50_FEATURE_WIDTH",
    "FCParams",
    "GraphNode",
    "InputSpec",
    "Model",
    "ModelGraph",
    "ModelManifest",
    "PoolSpec",
    "Prediction",
    "TensorRecord",
    "build_mobilenet_v1",
    "build_resnet50",
    "fold_batchnorms",
    "is_parameter",
    "load_model",
    "randomize_weights",
    "read_manifest",
    "save_model",
]
