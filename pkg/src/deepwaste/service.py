"""Local classification service.

Everything runs in-process on this host: the model is loaded once and
shared immutably across requests, and no handler ever opens an outbound
connection. Classification is side-effect free; POST /v1/items is the
single mutating endpoint and funnels through the dataset store's
single-writer contract.
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware

from .datastore import DatasetStore
from .errors import DatasetError, DecodeError, UnknownLabelError
from .imaging import decode, to_input_tensor
from .model.runtime import Model

MAX_UPLOAD_BYTES = 10 * 1024 * 1024
_IMAGE_TYPES = {"image/png", "image/jpeg"}


def classify_bytes(model: Model, data: bytes, label_notes: dict[str, str] | None = None) -> dict:
    """Decode + preprocess + forward; shared by the service and the CLI.

    Identical bytes against the same model yield an identical document.
    """
    img = decode(data)
    prediction = model.forward(to_input_tensor(img, model.input_spec))
    ranked = sorted(
        zip(model.labels, prediction.confidences),
        key=lambda lc: (-float(lc[1]), model.labels.index(lc[0])),
    )
    top = ranked[0][0]
    return {
        "predictions": [
            {"label": label, "confidence": float(conf)} for label, conf in ranked
        ],
        "model_id": model.model_id or "unversioned",
        "latency_ms": prediction.latency_ms,
        "note": (label_notes or {}).get(top),
    }


def _item_record(item) -> dict:
    return {
        "id": item.id,
        "label": item.label,
        "metadata": item.metadata,
        "source": item.source,
        "split": item.split,
        "created_at": item.created_at,
    }


def _read_upload(image: UploadFile, max_bytes: int) -> bytes:
    if image.content_type not in _IMAGE_TYPES:
        raise HTTPException(
            status_code=422,
            detail=f"unsupported content type {image.content_type!r}; send PNG or JPEG",
        )
    data = image.file.read(max_bytes + 1)
    if len(data) > max_bytes:
        raise HTTPException(
            status_code=413, detail=f"payload exceeds the {max_bytes} byte limit"
        )
    return data


def create_app(
    model: Model,
    store: DatasetStore,
    label_notes: dict[str, str] | None = None,
    cors_origins: tuple[str, ...] = ("*",),
    max_upload_bytes: int = MAX_UPLOAD_BYTES,
) -> FastAPI:
    app = FastAPI(title="deepwaste", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["GET", "POST"],
        allow_headers=["*"],
    )

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "model_id": model.model_id or "unversioned"}

    @app.post("/v1/classify")
    def classify(image: UploadFile = File(...)):
        data = _read_upload(image, max_upload_bytes)
        try:
            return classify_bytes(model, data, label_notes)
        except DecodeError as e:
            raise HTTPException(status_code=400, detail=str(e))

    @app.post("/v1/items")
    def contribute(
        image: UploadFile = File(...),
        label: str = Form(...),
        metadata: str = Form(""),
    ):
        data = _read_upload(image, max_upload_bytes)
        before = store.stats()["total"]
        try:
            item = store.add_item(data, label, metadata=metadata, source="user_contributed")
        except (DecodeError, UnknownLabelError, DatasetError) as e:
            raise HTTPException(status_code=400, detail=str(e))
        return {"id": item.id, "created": store.stats()["total"] > before}

    @app.get("/v1/items")
    def list_items(
        split: Optional[str] = None,
        label: Optional[str] = None,
        source: Optional[str] = None,
    ):
        items = store.list_items(split=split, label=label, source=source)
        return {"items": [_item_record(i) for i in items], "total": len(items)}

    @app.get("/v1/stats")
    def stats():
        return store.stats()

    @app.get("/v1/model")
    def model_info():
        spec = model.input_spec
        return {
            "model_id": model.model_id or "unversioned",
            "architecture": model.architecture,
            "labels": list(model.labels),
            "input": {
                "height": spec.height,
                "width": spec.width,
                "channels": spec.channels,
                "mean": list(spec.mean),
                "std": list(spec.std),
            },
            "label_notes": label_notes or {},
        }

    return app
