"""Command-line entry point.

Subcommands mirror the pipeline stages (``ingest``, ``embed``, ``train``,
``gridsearch``, ``evaluate``, ``report``) plus ``run`` for the whole chain.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .benchmarks import load_benchmarks
from .errors import ConfigError, DataError, EmbedClassError, NumericError
from .ingest import SplitSpec
from .metrics import full_report
from .model_select import (
    ClassifierFamily,
    GridCell,
    predict_model_labels,
    predict_model_scores,
    train_cell,
)
from .linear_models import SvmLoss
from .pipeline import (
    StageFailure,
    ensure_embeddings,
    load_config,
    prepare_dataset,
    run_pipeline,
)
from .serialize import load_model, save_model


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embedclass",
        description="Train and evaluate linear classifiers on frozen-encoder image embeddings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p, with_out=False):
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--preset", default=None,
                       help="override the preprocessing preset "
                            "(cbis-ddsm, chexpert, ham10000, pad-ufes-20, odir)")
        p.add_argument("--encoder", default=None, help="override the encoder graph path")
        p.add_argument("--encoder-id", default=None, help="override the encoder id")
        p.add_argument("--cache-dir", default=None, help="override the embedding cache directory")
        if with_out:
            p.add_argument("--out", default=None, help="override the output location")

    p = sub.add_parser("run", help="full pipeline: ingest, embed, grid search, evaluate")
    add_config(p)
    p.add_argument("--canonical", action="store_true",
                   help="omit run-specific state so identical runs emit byte-identical records")

    p = sub.add_parser("ingest", help="validate a manifest and write split id lists")
    add_config(p, with_out=True)

    p = sub.add_parser("embed", help="compute or refresh the embedding cache")
    add_config(p)

    p = sub.add_parser("train", help="train one configuration (no grid search)")
    add_config(p, with_out=True)
    p.add_argument("--c", type=float, required=True, help="regularization strength C")
    p.add_argument("--loss", default=None, choices=[l.value for l in SvmLoss])

    p = sub.add_parser("gridsearch", help="cross-validated grid search on the training split")
    add_config(p)

    p = sub.add_parser("evaluate", help="evaluate a saved model on the test split")
    add_config(p)
    p.add_argument("--model", required=True, help="model file from train/gridsearch")
    p.add_argument("--micro", action="store_true",
                   help="also print micro-averaged precision/recall/F1")

    p = sub.add_parser("report", help="compare a run record against the benchmark table")
    p.add_argument("--run-record", required=True, help="run_record.json from a finished run")
    p.add_argument("--benchmarks", default=None, help="alternate benchmark constants file")
    p.add_argument("--dataset", default=None, help="benchmark name override")
    return parser


def _load(args, canonical: bool = False):
    from dataclasses import replace

    from .errors import ConfigError as _ConfigError
    from .preprocess import PRESETS

    config = load_config(args.config, canonical=canonical)
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed,
                         split_spec=SplitSpec.ratio(config.split_spec.train_fraction, args.seed)
                         if config.split_spec.train_fraction is not None
                         else config.split_spec)
    if getattr(args, "preset", None):
        if args.preset not in PRESETS:
            raise _ConfigError(f"unknown preset {args.preset!r}; options: {sorted(PRESETS)}")
        config = replace(config, preprocess=PRESETS[args.preset])
    if getattr(args, "encoder", None):
        graph = Path(args.encoder)
        if not graph.exists():
            raise _ConfigError(f"encoder graph does not exist: {graph}")
        config = replace(config, encoder_graph=graph)
    if getattr(args, "encoder_id", None):
        config = replace(config, encoder_id=args.encoder_id)
    if getattr(args, "cache_dir", None):
        config = replace(config, cache_dir=Path(args.cache_dir))
    return config


def _cmd_run(args) -> int:
    record = run_pipeline(_load(args, canonical=args.canonical))
    print(record.to_json())
    return 0


def _cmd_ingest(args) -> int:
    config = _load(args)
    ds, train, test, n_imputed = prepare_dataset(config)
    out = Path(args.out) if args.out else config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "train_ids.txt").write_text("\n".join(train.ids) + "\n")
    (out / "test_ids.txt").write_text("\n".join(test.ids) + "\n")
    summary = {
        "dataset": ds.name,
        "n_samples": len(ds),
        "n_train": len(train),
        "n_test": len(test),
        "n_imputed_labels": n_imputed,
        "classes": list(config.schema.class_names),
        "task": config.schema.task_kind.value,
    }
    (out / "ingest_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _cmd_embed(args) -> int:
    config = _load(args)
    ds, _, _, _ = prepare_dataset(config)
    matrix, stats = ensure_embeddings(config, ds)
    print(json.dumps({
        "cache_path": stats.cache_path,
        "cache_hit": stats.cache_hit,
        "encoder_invocations": stats.encoder_invocations,
        "rows": matrix.n_rows,
        "dim": matrix.dim,
    }, indent=2, sort_keys=True))
    return 0


def _cmd_train(args) -> int:
    config = _load(args)
    ds, train, _, _ = prepare_dataset(config)
    matrix, _ = ensure_embeddings(config, ds)
    x = matrix.rows_for(train.ids).astype(np.float64)
    y = train.label_matrix()
    loss = SvmLoss(args.loss) if args.loss else None
    cell = GridCell(
        0, config.family, args.c,
        loss=loss if config.family is ClassifierFamily.LINEAR_SVM else None,
    )
    model = train_cell(x, y, config.schema, cell, config.seed)
    config.out_dir.mkdir(parents=True, exist_ok=True)
    out = Path(args.out) if args.out else config.out_dir / "model.bin"
    save_model(model, out)
    print(json.dumps({"model": str(out), "config": cell.config()}, indent=2, sort_keys=True))
    return 0


def _cmd_gridsearch(args) -> int:
    from .model_select import grid_search

    config = _load(args)
    ds, train, _, _ = prepare_dataset(config)
    matrix, _ = ensure_embeddings(config, ds)
    x = matrix.rows_for(train.ids).astype(np.float64)
    cv, model = grid_search(x, train.label_matrix(), config.schema,
                            config.family, config.grid, config.seed)
    config.out_dir.mkdir(parents=True, exist_ok=True)
    with open(config.out_dir / "cv_results.csv", "w", encoding="utf-8") as fh:
        fh.write("family,config,fold,auc\n")
        for family, desc, fold, auc in cv.csv_rows():
            fh.write(f'{family},"{desc}",{fold},{auc!r}\n')
    save_model(model, config.out_dir / "model.bin")
    winner = cv.winner_record()
    (config.out_dir / "winner.json").write_text(json.dumps(winner, indent=2, sort_keys=True))
    print(json.dumps(winner, indent=2, sort_keys=True))
    return 0


def _cmd_evaluate(args) -> int:
    config = _load(args)
    ds, _, test, _ = prepare_dataset(config)
    matrix, _ = ensure_embeddings(config, ds)
    model = load_model(args.model)
    x = matrix.rows_for(test.ids).astype(np.float64)
    scores = predict_model_scores(model, x)
    labels = predict_model_labels(model, x)
    report = full_report(test.label_matrix(), labels, scores.scores, config.schema.task_kind)
    doc = report.to_dict(config.schema.class_names)
    if args.micro:
        from .metrics import micro_precision_recall_f1

        micro = micro_precision_recall_f1(test.label_matrix(), labels, config.schema.task_kind)
        doc["micro"] = {"precision": micro.precision, "recall": micro.recall, "f1": micro.f1}
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def _cmd_report(args) -> int:
    record = json.loads(Path(args.run_record).read_text("utf-8"))
    table = load_benchmarks(args.benchmarks)
    dataset = args.dataset or (record.get("benchmark") or {}).get("dataset") or record["dataset"]
    achieved = record["metrics"]["auc"]
    row = table.compare(dataset, achieved)
    print(json.dumps(row, indent=2, sort_keys=True))
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "ingest": _cmd_ingest,
    "embed": _cmd_embed,
    "train": _cmd_train,
    "gridsearch": _cmd_gridsearch,
    "evaluate": _cmd_evaluate,
    "report": _cmd_report,
}


def _exit_code_for(exc: Exception) -> int:
    if isinstance(exc, StageFailure):
        return _exit_code_for(exc.cause)
    if isinstance(exc, ConfigError):
        return 2
    if isinstance(exc, NumericError):
        return 4
    if isinstance(exc, (DataError, EmbedClassError)):
        return 3
    return 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except EmbedClassError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code_for(exc)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
