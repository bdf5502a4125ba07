"""Command-line entry point composing the model, dataset, and service.

Model files live in a directory holding model.json + model.bin; the
directory comes from --model, then the DEEPWASTE_MODEL_DIR environment
variable, then ./model. Dataset stores are directories given by --data
(default ./dataset).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import CLASS_LABELS, __version__
from .datastore import DEFAULT_RATIOS, DatasetStore
from .errors import DeepWasteError
from .evaluation import evaluate, latency_benchmark
from .model import InputSpec, build_mobilenet_v1, build_resnet50, load_model, randomize_weights, save_model
from .service import classify_bytes, create_app
from .training import TrainConfig, attach_head, extract_dataset_features, train_head, write_loss_csv

MODEL_DIR_ENV = "DEEPWASTE_MODEL_DIR"
MANIFEST_NAME = "model.json"
BLOB_NAME = "model.bin"


def _model_dir(args) -> Path:
    if args.model:
        return Path(args.model)
    env = os.environ.get(MODEL_DIR_ENV)
    return Path(env) if env else Path("model")


def _load(args, fold_bn: bool = True):
    d = _model_dir(args)
    return load_model(d / MANIFEST_NAME, d / BLOB_NAME, fold_bn=fold_bn)


def _store(args) -> DatasetStore:
    return DatasetStore(args.data)


def _emit(args, doc: dict, human: str | None = None) -> None:
    if getattr(args, "json", False):
        print(json.dumps(doc, indent=2))
    else:
        print(human if human is not None else json.dumps(doc, indent=2))


def cmd_classify(args) -> int:
    model = _load(args)
    doc = classify_bytes(model, Path(args.image).read_bytes())
    top = doc["predictions"][0]
    _emit(args, doc, f"{top['label']}  ({top['confidence']:.3f}, {doc['latency_ms']:.0f} ms)")
    return 0


def cmd_evaluate(args) -> int:
    model = _load(args)
    store = _store(args)
    report = evaluate(model, store.list_items(split=args.split))
    _emit(args, report.as_dict(), report.to_table())
    return 0


def cmd_train_head(args) -> int:
    model = _load(args, fold_bn=False)
    store = _store(args)
    items = store.list_items(split=args.split)
    if not items:
        raise DeepWasteError(f"no items in split {args.split!r}")
    cfg = TrainConfig(
        learning_rate=args.lr,
        momentum=args.momentum,
        epochs=args.epochs,
        batch_size=args.batch_size,
        weight_decay=args.weight_decay,
        seed=args.seed,
    )
    features, labels = extract_dataset_features(model, items)
    head, history = train_head(features, labels, cfg, num_classes=len(model.labels))
    tuned = attach_head(model, head)
    out = Path(args.out) if args.out else _model_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    save_model(
        tuned.graph,
        tuned.graph.tensors(),
        out / MANIFEST_NAME,
        out / BLOB_NAME,
        architecture=tuned.architecture,
        input_spec=tuned.input_spec,
        labels=tuned.labels,
    )
    if args.loss_csv:
        write_loss_csv(history, args.loss_csv)
    doc = {
        "items": len(items),
        "epochs": cfg.epochs,
        "final_loss": history[-1],
        "model_dir": str(out),
    }
    _emit(args, doc, f"trained on {len(items)} items; final loss {history[-1]:.4f} -> {out}")
    return 0


def cmd_bench(args) -> int:
    model = _load(args, fold_bn=not args.no_fold)
    spec = model.input_spec
    rng = np.random.default_rng(args.seed)
    x = rng.standard_normal((1, spec.channels, spec.height, spec.width)).astype(np.float32)
    stats = latency_benchmark(model, x, runs=args.runs, warmup=args.warmup)
    doc = stats.as_dict()
    _emit(
        args,
        doc,
        f"{args.runs} runs: mean {stats.mean_ms:.1f} ms, p50 {stats.p50_ms:.1f} ms, "
        f"p95 {stats.p95_ms:.1f} ms, min {stats.min_ms:.1f} ms, max {stats.max_ms:.1f} ms",
    )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    model = _load(args)
    store = _store(args)
    notes = json.loads(Path(args.label_notes).read_text()) if args.label_notes else None
    app = create_app(model, store, label_notes=notes, cors_origins=tuple(args.origins))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_init_model(args) -> int:
    builders = {"resnet50_v1": build_resnet50, "mobilenet_v1": build_mobilenet_v1}
    graph = builders[args.arch](len(CLASS_LABELS))
    graph = graph.with_tensors(randomize_weights(graph, seed=args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(
        graph,
        graph.tensors(),
        out / MANIFEST_NAME,
        out / BLOB_NAME,
        architecture=args.arch,
        input_spec=InputSpec(args.size, args.size),
        labels=CLASS_LABELS,
    )
    _emit(args, {"architecture": args.arch, "model_dir": str(out)}, f"{args.arch} -> {out}")
    return 0


def cmd_dataset_add(args) -> int:
    store = _store(args)
    item = store.add_item(
        Path(args.image).read_bytes(), args.label, metadata=args.metadata, source=args.source
    )
    _emit(args, {"id": item.id, "label": item.label}, item.id)
    return 0


def cmd_dataset_stats(args) -> int:
    stats = _store(args).stats()
    lines = [f"{label:8s} {stats['counts'][label]}" for label in CLASS_LABELS]
    lines.append(f"{'total':8s} {stats['total']}")
    _emit(args, stats, "\n".join(lines))
    return 0


def cmd_dataset_split(args) -> int:
    store = _store(args)
    ratios = tuple(float(v) for v in args.ratios.split(","))
    store.assign_splits(ratios, seed=args.seed)
    _emit(args, store.stats(), f"split {ratios} with seed {args.seed}")
    return 0


def cmd_dataset_export(args) -> int:
    _store(args).export_archive(args.archive)
    _emit(args, {"archive": args.archive}, args.archive)
    return 0


def cmd_dataset_import(args) -> int:
    store = DatasetStore.import_archive(args.archive, args.data)
    _emit(args, store.stats(), f"imported {store.stats()['total']} items into {args.data}")
    return 0


def _add_model_arg(p) -> None:
    p.add_argument("--model", help=f"model directory (default ${MODEL_DIR_ENV} or ./model)")


def _add_data_arg(p) -> None:
    p.add_argument("--data", default="dataset", help="dataset directory (default ./dataset)")


def _add_json_arg(p) -> None:
    p.add_argument("--json", action="store_true", help="machine-readable output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deepwaste", description=__doc__)
    parser.add_argument("--version", action="version", version=f"deepwaste {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="classify one image file")
    p.add_argument("image")
    _add_model_arg(p)
    _add_json_arg(p)
    p.set_defaults(fn=cmd_classify)

    p = sub.add_parser("evaluate", help="per-class AP report over a dataset split")
    p.add_argument("--split", default="test", choices=("train", "val", "test", "unassigned"))
    _add_model_arg(p)
    _add_data_arg(p)
    _add_json_arg(p)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("train-head", help="train the classification head on a split")
    p.add_argument("--split", default="train")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output model directory (default: overwrite input)")
    p.add_argument("--loss-csv", help="write per-epoch loss history here")
    _add_model_arg(p)
    _add_data_arg(p)
    _add_json_arg(p)
    p.set_defaults(fn=cmd_train_head)

    p = sub.add_parser("bench", help="forward-pass latency statistics")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-fold", action="store_true", help="skip batchnorm folding")
    _add_model_arg(p)
    _add_json_arg(p)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("serve", help="run the local classification service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--origins", nargs="*", default=["*"], help="CORS origins")
    p.add_argument("--label-notes", help="JSON file mapping label -> caveat text")
    _add_model_arg(p)
    _add_data_arg(p)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("init-model", help="write a random-weight model file pair")
    p.add_argument("--arch", default="resnet50_v1", choices=("resnet50_v1", "mobilenet_v1"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=224, help="square input size")
    p.add_argument("--out", required=True)
    _add_json_arg(p)
    p.set_defaults(fn=cmd_init_model)

    ds = sub.add_parser("dataset", help="manage the annotated image corpus")
    dsub = ds.add_subparsers(dest="dataset_command", required=True)

    p = dsub.add_parser("add", help="add one labeled image")
    p.add_argument("image")
    p.add_argument("--label", required=True)
    p.add_argument("--metadata", default="")
    p.add_argument("--source", default="bundled", choices=("bundled", "user_contributed"))
    _add_data_arg(p)
    _add_json_arg(p)
    p.set_defaults(fn=cmd_dataset_add)

    p = dsub.add_parser("stats", help="per-class counts")
    _add_data_arg(p)
    _add_json_arg(p)
    p.set_defaults(fn=cmd_dataset_stats)

    p = dsub.add_parser("split", help="assign stratified train/val/test splits")
    p.add_argument("--ratios", default=",".join(str(r) for r in DEFAULT_RATIOS))
    p.add_argument("--seed", type=int, default=0)
    _add_data_arg(p)
    _add_json_arg(p)
    p.set_defaults(fn=cmd_dataset_split)

    p = dsub.add_parser("export", help="write the corpus as one zip archive")
    p.add_argument("archive")
    _add_data_arg(p)
    _add_json_arg(p)
    p.set_defaults(fn=cmd_dataset_export)

    p = dsub.add_parser("import", help="load a corpus archive into a fresh directory")
    p.add_argument("archive")
    _add_data_arg(p)
    _add_json_arg(p)
    p.set_defaults(fn=cmd_dataset_import)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (DeepWasteError, OSError, ValueError) as e:
        print(f"deepwaste: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
