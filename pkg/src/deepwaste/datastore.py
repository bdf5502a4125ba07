"""Persistent annotated image corpus with stratified splits.

Layout on disk: <root>/manifest.json plus content-addressed image files
under <root>/images/<first two hash chars>/<sha256>.<ext>. The manifest
is rewritten atomically (temp file + rename), so readers always see a
consistent snapshot and a crash mid-write never corrupts the store.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import tempfile
import zipfile
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from PIL import Image

from . import CLASS_LABELS
from .errors import DatasetError, UnknownLabelError
from .imaging import decode

MAGIC = "DWDATA"
FORMAT_VERSION = 1

SPLITS = ("train", "val", "test", "unassigned")
SOURCES = ("bundled", "user_contributed")
DEFAULT_RATIOS = (0.7, 0.1, 0.2)

_EXT = {"png": "png", "jpeg": "jpg"}


@dataclass(frozen=True)
class DatasetItem:
    id: str  # sha256 of the image bytes
    filename: str  # store-relative image path
    label: str
    metadata: str = ""
    source: str = "bundled"
    split: str = "unassigned"
    created_at: str = ""
    path: Path | None = None  # absolute location, set by the store

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "filename": self.filename,
            "label": self.label,
            "metadata": self.metadata,
            "source": self.source,
            "split": self.split,
            "created_at": self.created_at,
        }


def _check_label(label: str) -> str:
    if label not in CLASS_LABELS:
        raise UnknownLabelError(
            f"unknown label {label!r}; valid labels: {', '.join(CLASS_LABELS)}"
        )
    return label


def _largest_remainder(n: int, ratios: tuple[float, ...]) -> list[int]:
    """Split n into integer parts proportional to ratios, summing to n."""
    exact = [n * r for r in ratios]
    parts = [int(v) for v in exact]
    short = n - sum(parts)
    by_frac = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - parts[i]), i))
    for i in by_frac[:short]:
        parts[i] += 1
    return parts


class DatasetStore:
    """Single-writer, multi-reader store rooted at a directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.manifest_path = self.root / "manifest.json"
        self.images_dir = self.root / "images"
        if self.manifest_path.exists():
            self._load()
        else:
            self.root.mkdir(parents=True, exist_ok=True)
            self.images_dir.mkdir(exist_ok=True)
            self._items: dict[str, DatasetItem] = {}
            self._split_seed: int | None = None
            self._write()

    def _load(self) -> None:
        try:
            doc = json.loads(self.manifest_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise DatasetError(f"cannot read dataset manifest: {e}") from e
        if doc.get("magic") != MAGIC:
            raise DatasetError(f"bad dataset magic: {doc.get('magic')!r}")
        if doc.get("format_version") != FORMAT_VERSION:
            raise DatasetError(f"unsupported dataset format_version {doc.get('format_version')!r}")
        if tuple(doc.get("labels", ())) != CLASS_LABELS:
            raise DatasetError(f"dataset labels {doc.get('labels')!r} do not match {CLASS_LABELS}")
        self._items = {}
        self._split_seed = doc.get("split_seed")
        for rec in doc["items"]:
            item = DatasetItem(
                id=rec["id"],
                filename=rec["filename"],
                label=_check_label(rec["label"]),
                metadata=rec.get("metadata", ""),
                source=rec["source"],
                split=rec["split"],
                created_at=rec["created_at"],
                path=self.root / rec["filename"],
            )
            if item.id in self._items:
                raise DatasetError(f"duplicate item id {item.id}")
            if not item.path.is_file():
                raise DatasetError(f"item {item.id} references missing file {rec['filename']}")
            self._items[item.id] = item

    def _write(self) -> None:
        doc = {
            "magic": MAGIC,
            "format_version": FORMAT_VERSION,
            "labels": list(CLASS_LABELS),
            "split_seed": self._split_seed,
            "items": [item.to_record() for item in self._ordered()],
        }
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".manifest-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                f.write(json.dumps(doc, indent=1))
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, self.manifest_path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def _ordered(self) -> list[DatasetItem]:
        return sorted(self._items.values(), key=lambda i: (i.created_at, i.id))

    def add_item(
        self,
        image_bytes: bytes,
        label: str,
        metadata: str = "",
        source: str = "bundled",
        split: str = "unassigned",
    ) -> DatasetItem:
        """Store an image content-addressed; byte-identical re-adds are no-ops."""
        _check_label(label)
        if source not in SOURCES:
            raise DatasetError(f"unknown source {source!r}; valid sources: {', '.join(SOURCES)}")
        if split not in SPLITS:
            raise DatasetError(f"unknown split {split!r}; valid splits: {', '.join(SPLITS)}")
        img_id = hashlib.sha256(image_bytes).hexdigest()
        existing = self._items.get(img_id)
        if existing is not None:
            if existing.label != label:
                raise DatasetError(
                    f"image {img_id[:12]} already stored with label "
                    f"{existing.label!r}, refusing relabel to {label!r}"
                )
            return existing

        try:
            with Image.open(io.BytesIO(image_bytes)) as im:
                fmt = (im.format or "").lower()
        except Exception:
            fmt = ""
        decode(image_bytes)  # raises DecodeError on anything unreadable
        ext = _EXT.get(fmt, "png")
        rel = Path("images") / img_id[:2] / f"{img_id}.{ext}"
        dest = self.root / rel
        dest.parent.mkdir(parents=True, exist_ok=True)
        if not dest.exists():
            dest.write_bytes(image_bytes)
        item = DatasetItem(
            id=img_id,
            filename=str(rel),
            label=label,
            metadata=metadata,
            source=source,
            split=split,
            created_at=datetime.now(timezone.utc).isoformat(),
            path=dest,
        )
        self._items[img_id] = item
        self._write()
        return item

    def get_item(self, item_id: str) -> DatasetItem:
        try:
            return self._items[item_id]
        except KeyError:
            raise DatasetError(f"no item with id {item_id}") from None

    def read_image(self, item_id: str) -> bytes:
        return self.get_item(item_id).path.read_bytes()

    def stats(self) -> dict:
        counts = {label: 0 for label in CLASS_LABELS}
        by_split = {split: 0 for split in SPLITS}
        for item in self._items.values():
            counts[item.label] += 1
            by_split[item.split] += 1
        return {"counts": counts, "by_split": by_split, "total": len(self._items)}

    def list_items(self, **filters) -> list[DatasetItem]:
        """Items ordered by (created_at, id); filter by label/split/source."""
        allowed = {"label", "split", "source"}
        unknown = set(filters) - allowed
        if unknown:
            raise DatasetError(
                f"unknown filter key {sorted(unknown)[0]!r}; valid keys: "
                f"{', '.join(sorted(allowed))}"
            )
        items = self._ordered()
        for key, value in filters.items():
            if value is None:
                continue
            items = [i for i in items if getattr(i, key) == value]
        return items

    def assign_splits(self, ratios: tuple[float, float, float] = DEFAULT_RATIOS, seed: int = 0):
        """Stratified (train, val, test) partition, deterministic per seed."""
        if len(ratios) != 3 or any(r < 0 for r in ratios):
            raise DatasetError(f"ratios must be three non-negative numbers, got {ratios}")
        if abs(sum(ratios) - 1.0) > 1e-9:
            raise DatasetError(f"ratios must sum to 1, got {sum(ratios)}")
        parts = sum(1 for r in ratios if r > 0)
        names = ("train", "val", "test")
        rng = np.random.default_rng(seed)
        assignment: dict[str, str] = {}
        for label in CLASS_LABELS:
            ids = [i.id for i in self._ordered() if i.label == label]
            if len(ids) < parts:
                raise DatasetError(
                    f"class {label!r} has {len(ids)} items, fewer than the {parts} split parts"
                )
            order = rng.permutation(len(ids))
            counts = _largest_remainder(len(ids), tuple(ratios))
            cursor = 0
            for name, count in zip(names, counts):
                for k in order[cursor : cursor + count]:
                    assignment[ids[int(k)]] = name
                cursor += count
        for item_id, split in assignment.items():
            self._items[item_id] = replace(self._items[item_id], split=split)
        self._split_seed = seed
        self._write()

    def export_archive(self, archive_path: str | Path) -> None:
        """Single zip holding the manifest and every referenced image."""
        with zipfile.ZipFile(archive_path, "w", zipfile.ZIP_STORED) as zf:
            zf.write(self.manifest_path, "manifest.json")
            for item in self._ordered():
                zf.write(item.path, item.filename)

    @classmethod
    def import_archive(cls, archive_path: str | Path, root: str | Path) -> "DatasetStore":
        root = Path(root)
        if (root / "manifest.json").exists():
            raise DatasetError(f"refusing to import into existing dataset at {root}")
        root.mkdir(parents=True, exist_ok=True)
        with zipfile.ZipFile(archive_path) as zf:
            for name in zf.namelist():
                target = root / name
                if not target.resolve().is_relative_to(root.resolve()):
                    raise DatasetError(f"archive entry escapes dataset root: {name}")
            zf.extractall(root)
        return cls(root)
