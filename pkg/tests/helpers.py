"""Shared fixture builders for the test suite."""

import numpy as np

from deepwaste import CLASS_LABELS
from deepwaste.datastore import DatasetStore
from deepwaste.engine import ConvParams
from deepwaste.imaging import ImageRGB8, encode
from deepwaste.model import INPUT, FCParams, GraphNode, InputSpec, Model, ModelGraph

CHANNEL_OF = {"trash": 0, "recycle": 1, "compost": 2}


def make_png(color=(255, 0, 0), size=(8, 8), noise_rng=None) -> bytes:
    w, h = size
    pixels = np.zeros((h, w, 3), dtype=np.uint8)
    pixels[:] = color
    if noise_rng is not None:
        jitter = noise_rng.integers(0, 40, size=(h, w, 3), dtype=np.uint8)
        pixels = np.clip(pixels.astype(np.int32) + jitter, 0, 255).astype(np.uint8)
    return encode(ImageRGB8(pixels), "png")


def label_png(label: str, index: int = 0) -> bytes:
    """Distinct bytes per (label, index); dominant channel encodes the label."""
    c = CHANNEL_OF[label]
    color = [0, 0, 0]
    color[c] = 200
    color[(c + 1) % 3] = index % 199  # stay below the dominant channel
    color[(c + 2) % 3] = index // 199
    return make_png(tuple(color), size=(4, 4))


def color_model() -> Model:
    """Classifies by dominant channel: R=trash, G=recycle, B=compost."""
    eye = np.zeros((3, 3, 1, 1), dtype=np.float32)
    for c in range(3):
        eye[c, c, 0, 0] = 1.0
    graph = ModelGraph(
        (
            GraphNode("mix", "conv", (INPUT,), ConvParams(3, 3, 1, weights=eye)),
            GraphNode("relu", "relu", ("mix",)),
            GraphNode("gap", "global_avg_pool", ("relu",)),
            GraphNode(
                "fc",
                "fully_connected",
                ("gap",),
                FCParams(np.eye(3, dtype=np.float32) * 20.0, np.zeros(3, dtype=np.float32)),
            ),
            GraphNode("softmax", "softmax", ("fc",)),
        )
    )
    spec = InputSpec(8, 8, mean=(0.0, 0.0, 0.0), std=(1.0, 1.0, 1.0))
    return Model(graph, spec, CLASS_LABELS)


def populate_store(root, per_class: int, split: str = "unassigned") -> DatasetStore:
    store = DatasetStore(root)
    for label in CLASS_LABELS:
        for i in range(per_class):
            store.add_item(label_png(label, i), label, split=split)
    return store


def build_paper_store(root) -> DatasetStore:
    """The corpus shape reported for the original dataset: 395/427/396."""
    store = DatasetStore(root)
    for label, count in (("trash", 395), ("recycle", 427), ("compost", 396)):
        for i in range(count):
            store.add_item(label_png(label, i), label)
    return store
