"""Exception hierarchy shared across the package."""


class DeepWasteError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(DeepWasteError, ValueError):
    """Tensor or layer shapes are inconsistent."""


class GraphValidationError(DeepWasteError, ValueError):
    """Model graph is structurally invalid (cycle, bad edge, bad shapes)."""


class ModelFormatError(DeepWasteError):
    """Model file has a bad magic string, version, or malformed manifest."""


class TruncatedBlobError(ModelFormatError):
    """Weight blob is shorter than the manifest's tensor table requires."""


class ModelValidationError(DeepWasteError):
    """Loaded tensors do not match the declared architecture."""


class DecodeError(DeepWasteError, ValueError):
    """Image byte stream could not be decoded."""


class UnknownLabelError(DeepWasteError, ValueError):
    """Label is not one of the configured waste categories."""


class DatasetError(DeepWasteError):
    """Dataset store invariant violated (missing file, bad manifest, ...)."""


class UndefinedMetricError(DeepWasteError, ValueError):
    """Metric is undefined for the given inputs (e.g. AP with no positives)."""


class MissingClassError(DeepWasteError, ValueError):
    """An operation requires every class to be present and one is not."""
