"""Command-line entry point: synth, annotate, train, calibrate, predict,
evaluate, probe, ablate.

Artifacts are JSON/JSONL. Every JSON artifact embeds provenance
(tool version, config hash, seed); pure-JSONL record streams get a sibling
``*.manifest.json`` carrying the same fields. Outputs are written to a
temporary file and renamed, so an existing artifact is never left half
overwritten. Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

import torch

from . import __version__
from .annotator import DEFAULT_TEMPLATE, LiveClient, LiveClientConfig, MockClient, annotate
from .corpus import (
    Dataset,
    LabelSpace,
    SyntheticSpec,
    generate_synthetic_corpus,
    load_annotations,
    load_dataset,
    save_annotations,
    save_dataset,
    synthetic_mock_table,
)
from .errors import EmoalignError
from .evaluation import descriptor_pool, evaluate, nearest_neighbors
from .inference import (
    ThresholdTable,
    calibrate_on_samples,
    predict_multi,
    predict_single,
    predict_valence_activation,
    score_labels,
)
from .model import EmotionModel
from .training import TrainConfig, ablate_dimensions, format_ablation_table, train


def config_digest(config: dict) -> str:
    """Stable hash of semantic configuration (never includes filesystem paths)."""
    blob = json.dumps(config, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def artifact_envelope(config: dict, seed: int) -> dict:
    return {"tool_version": __version__, "config_hash": config_digest(config), "seed": seed}


def write_json_atomic(path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n")
    os.replace(tmp, path)


def write_jsonl_atomic(path, records) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
    os.replace(tmp, path)


def write_text_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text if text.endswith("\n") else text + "\n")
    os.replace(tmp, path)


def _load_label_space(path) -> LabelSpace:
    return LabelSpace.from_dict(json.loads(Path(path).read_text()))


def _load_string_list(path) -> list[str]:
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = data.get("labels", data.get("phrases"))
    if not isinstance(data, list):
        raise EmoalignError(f"{path}: expected a JSON list of strings")
    return [str(item) for item in data]


def _split_view(dataset: Dataset, split) -> Dataset:
    if split is None:
        return dataset
    return Dataset(name=dataset.name, kind=dataset.kind, samples=dataset.by_split(split))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    spec = SyntheticSpec.from_dict(json.loads(Path(args.spec).read_text())) if args.spec else SyntheticSpec()
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    dataset, annotations, seen_space, unseen_space = generate_synthetic_corpus(spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, out_dir / "dataset.jsonl")
    save_annotations(annotations, out_dir / "annotations.jsonl")
    envelope = artifact_envelope(spec.to_dict(), spec.seed)
    write_json_atomic(out_dir / "labels_seen.json", {**envelope, **seen_space.to_dict()})
    write_json_atomic(out_dir / "labels_unseen.json", {**envelope, **unseen_space.to_dict()})
    write_json_atomic(out_dir / "mock_table.json", synthetic_mock_table(spec))
    write_json_atomic(
        out_dir / "synth.manifest.json",
        {
            **envelope,
            "spec": spec.to_dict(),
            "files": ["dataset.jsonl", "annotations.jsonl", "labels_seen.json",
                      "labels_unseen.json", "mock_table.json"],
            "n_samples": len(dataset),
        },
    )
    print(f"wrote synthetic corpus ({len(dataset)} samples) to {out_dir}")
    return 0


def cmd_annotate(args) -> int:
    dataset = load_dataset(args.infile, format=args.format, kind=args.kind)
    if args.client == "mock":
        table = json.loads(Path(args.mock_table).read_text()) if args.mock_table else {}
        client = MockClient(table)
        client_config = {"client": "mock", "table": table}
    else:
        if not args.client_config:
            raise EmoalignError("--client live requires --client-config")
        live_config = LiveClientConfig.from_file(args.client_config)
        client = LiveClient(live_config)
        client_config = {"client": "live", "deployment": live_config.deployment}
    annotations = annotate(
        dataset, client, args.cache,
        template=DEFAULT_TEMPLATE,
        max_attempts=args.max_attempts,
        backoff=args.backoff,
        max_in_flight=args.max_in_flight,
    )
    save_annotations(annotations, args.out)
    envelope = artifact_envelope(
        {"command": "annotate", "template_version": DEFAULT_TEMPLATE.version, **client_config},
        seed=0,
    )
    write_json_atomic(
        Path(args.out).with_suffix(".manifest.json"),
        {**envelope, "n_annotations": len(annotations)},
    )
    print(f"wrote {len(annotations)} annotations to {args.out}")
    return 0


def _train_config_from_args(args) -> TrainConfig:
    base = TrainConfig.from_dict(json.loads(Path(args.config).read_text())) if args.config else TrainConfig()
    overrides = {
        name: getattr(args, name)
        for name in ("seed", "epochs", "batch_size", "learning_rate", "emotion_dim",
                     "temperature", "checkpoint_dir", "selection_metric")
        if getattr(args, name, None) is not None
    }
    return dataclasses.replace(base, **overrides)


def cmd_train(args) -> int:
    config = _train_config_from_args(args)
    dataset = load_dataset(args.data, kind=args.kind)
    annotations = load_annotations(args.annotations)
    report = train(dataset, annotations, config)
    semantic = {k: v for k, v in config.to_dict().items() if k != "checkpoint_dir"}
    write_json_atomic(args.out, {**artifact_envelope(semantic, config.seed), **report.to_dict()})
    print(f"selected epoch {report.selected_epoch} "
          f"({report.selection_metric}={report.val_metrics[report.selected_epoch]:.4f}); "
          f"checkpoint at {report.checkpoint_path}")
    return 0


def cmd_calibrate(args) -> int:
    model = EmotionModel.load(args.model)
    dataset = _split_view(load_dataset(args.val, kind="multi"), args.split)
    space = _load_label_space(args.labels)
    table = calibrate_on_samples(
        model, dataset.samples, space,
        provenance=f"{dataset.name}/{args.split or 'all'}",
    )
    envelope = artifact_envelope(
        {"command": "calibrate", "label_space": space.name, "split": args.split},
        seed=model.encoder_config.seed,
    )
    write_json_atomic(args.out, {**envelope, **table.to_dict()})
    print(f"calibrated {len(table.thresholds)} thresholds -> {args.out}")
    return 0


def cmd_predict(args) -> int:
    model = EmotionModel.load(args.model)
    space = _load_label_space(args.labels)
    dataset = _split_view(load_dataset(args.infile, kind=space.kind), args.split)
    thresholds = ThresholdTable.load(args.thresholds) if args.thresholds else None
    records = []
    for sample in dataset.samples:
        vector = score_labels(sample.text, space, model)
        record = {"id": sample.id, "scores": vector.scores}
        if space.kind == "single":
            record["prediction"] = predict_single(sample.text, space, model)
        elif space.kind == "multi":
            if thresholds is None:
                raise EmoalignError("multi-label prediction requires --thresholds")
            record["prediction"] = sorted(predict_multi(sample.text, space, thresholds, model))
        else:
            valence, activation = predict_valence_activation(sample.text, model)
            record["prediction"] = {"valence": valence, "activation": activation}
        records.append(record)
    write_jsonl_atomic(args.out, records)
    envelope = artifact_envelope(
        {"command": "predict", "label_space": space.name, "split": args.split},
        seed=model.encoder_config.seed,
    )
    write_json_atomic(Path(args.out).with_suffix(".manifest.json"),
                      {**envelope, "n_predictions": len(records)})
    print(f"wrote {len(records)} predictions to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    model = EmotionModel.load(args.model)
    space = _load_label_space(args.labels)
    dataset = _split_view(load_dataset(args.data, kind=space.kind), args.split)
    thresholds = ThresholdTable.load(args.thresholds) if args.thresholds else None
    seen = _load_string_list(args.seen) if args.seen else None
    report = evaluate(dataset, model, space, thresholds=thresholds, seen_classes=seen)
    envelope = artifact_envelope(
        {"command": "evaluate", "label_space": space.name, "split": args.split,
         "seen": seen, "kind": space.kind},
        seed=model.encoder_config.seed,
    )
    write_json_atomic(args.out, {**envelope, **report.to_dict()})
    if args.text_out:
        write_text_atomic(args.text_out, report.to_text_table())
    summary = (f"macro-F1={report.macro_f1:.4f}" if report.macro_f1 is not None
               else str(report.correlations))
    print(f"evaluated {report.n_samples} samples: {summary} -> {args.out}")
    return 0


def cmd_probe(args) -> int:
    model = EmotionModel.load(args.model)
    targets = _load_string_list(args.targets)
    if args.pool_annotations:
        annotations = load_annotations(args.pool_annotations)
        samples = None
        if args.pool_data:
            samples = load_dataset(args.pool_data, kind="multi").samples
        pool = descriptor_pool(annotations, samples=samples, split=args.pool_split)
    elif args.pool:
        pool = _load_string_list(args.pool)
    else:
        raise EmoalignError("probe requires --pool or --pool-annotations")
    table = nearest_neighbors(targets, pool, args.k, model)
    envelope = artifact_envelope(
        {"command": "probe", "k": args.k, "n_targets": len(targets), "n_pool": len(pool)},
        seed=model.encoder_config.seed,
    )
    write_json_atomic(args.out, {**envelope, **table.to_dict()})
    if args.text_out:
        write_text_atomic(args.text_out, table.to_text_table())
    print(f"probed {len(targets)} targets against {len(pool)} pool phrases -> {args.out}")
    return 0


def cmd_ablate(args) -> int:
    config = _train_config_from_args(args)
    dataset = load_dataset(args.data, kind=args.kind)
    annotations = load_annotations(args.annotations)
    spaces = [_load_label_space(path) for path in args.labels]
    dims = [int(d) for d in args.dims.split(",") if d.strip()]
    rows = ablate_dimensions(dataset, annotations, dims, config, label_spaces=spaces)
    semantic = {k: v for k, v in config.to_dict().items() if k != "checkpoint_dir"}
    envelope = artifact_envelope({**semantic, "dims": dims}, config.seed)
    write_json_atomic(args.out, {**envelope, "rows": rows})
    table_text = format_ablation_table(rows)
    if args.text_out:
        write_text_atomic(args.text_out, table_text)
    print(table_text)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emoalign",
        description="Contrastive text/emotion-descriptor alignment toolkit",
    )
    parser.add_argument("--version", action="version", version=f"emoalign {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the deterministic synthetic corpus")
    p.add_argument("--spec", help="JSON file of corpus-shape fields")
    p.add_argument("--seed", type=int, help="override the spec seed")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("annotate", help="elicit descriptor annotations via an LLM client")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--format", choices=("jsonl", "tsv"), default="jsonl")
    p.add_argument("--kind", choices=("single", "multi", "dimensional"), default="multi")
    p.add_argument("--cache", required=True)
    p.add_argument("--client", choices=("live", "mock"), default="mock")
    p.add_argument("--mock-table", help="JSON file: keyword -> comma-separated response")
    p.add_argument("--client-config", help="JSON file: endpoint/deployment/credential_env")
    p.add_argument("--max-attempts", type=int, default=3)
    p.add_argument("--backoff", type=float, default=0.5)
    p.add_argument("--max-in-flight", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("train", help="train the alignment model on annotations")
    p.add_argument("--config", help="JSON file of training fields")
    p.add_argument("--data", required=True)
    p.add_argument("--kind", choices=("single", "multi"), default="multi")
    p.add_argument("--annotations", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--emotion-dim", type=int, dest="emotion_dim")
    p.add_argument("--temperature", type=float)
    p.add_argument("--selection-metric", dest="selection_metric",
                   choices=("val_micro_f1_at_0.5", "val_loss"))
    p.add_argument("--checkpoint-dir", dest="checkpoint_dir")
    p.add_argument("--out", required=True, help="training report JSON")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="grid-search per-label thresholds on validation data")
    p.add_argument("--model", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("predict", help="score texts against a label space")
    p.add_argument("--model", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--thresholds")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="run the matching inference head and score it")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--labels", required=True)
    p.add_argument("--thresholds")
    p.add_argument("--seen", help="JSON list of class names seen in training")
    p.add_argument("--out", required=True)
    p.add_argument("--text-out", dest="text_out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("probe", help="nearest-neighbor retrieval over a descriptor pool")
    p.add_argument("--model", required=True)
    p.add_argument("--targets", required=True, help="JSON list of target phrases")
    p.add_argument("--pool", help="JSON list of candidate phrases")
    p.add_argument("--pool-annotations", help="annotations JSONL to build the pool from")
    p.add_argument("--pool-data", help="dataset JSONL for split filtering of the pool")
    p.add_argument("--pool-split", choices=("train", "val", "test"), default="test")
    p.add_argument("-k", type=int, default=4)
    p.add_argument("--out", required=True)
    p.add_argument("--text-out", dest="text_out")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("ablate", help="train and evaluate across emotion-space dimensions")
    p.add_argument("--dims", required=True, help="comma-separated dimension list")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--kind", choices=("single", "multi"), default="multi")
    p.add_argument("--annotations", required=True)
    p.add_argument("--labels", nargs="+", default=[], help="label-space JSON files")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--temperature", type=float)
    p.add_argument("--checkpoint-dir", dest="checkpoint_dir")
    p.add_argument("--out", required=True)
    p.add_argument("--text-out", dest="text_out")
    p.set_defaults(func=cmd_ablate)

    return parser


def run(argv=None) -> int:
    """Parse and execute; returns the process exit status instead of exiting."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    torch.set_num_threads(1)  # reproducible reductions across runs
    try:
        return args.func(args)
    except EmoalignError as exc:
        print(f"emoalign {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"emoalign {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
