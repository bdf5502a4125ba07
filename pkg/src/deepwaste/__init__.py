"""DeepWaste: offline trash/recycle/compost classification.

A from-scratch CNN inference engine (ResNet-50, MobileNetV1), transfer
learning on frozen backbone features, per-class average-precision
evaluation, an annotated dataset store with a contribution loop, and a
local classification service.
"""

CLASS_LABELS = ("trash", "recycle", "compost")

__version__ = "0.1.0"
