"""End-to-end orchestration: ingest -> preprocess -> embed -> select -> report.

A run is fully described by one TOML config file plus a seed. Embeddings
are cached per (dataset, encoder, preprocess) triple; a warm cache means
the embed stage performs zero encoder invocations, which also makes
rerunning after a mid-pipeline failure cheap. Stage failures are wrapped
in :class:`StageFailure` carrying the stage name; previously written
artifacts stay on disk for resume.

The orchestrator itself is single-threaded; parallelism belongs to the
stage modules (per-image preprocessing, independent grid cells).
"""

from __future__ import annotations

import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .benchmarks import load_benchmarks
from .cache import EmbeddingMatrix, read_cache, write_cache
from .encoder import EncoderSpec, load_encoder
from .errors import ConfigError, DataError, EmbedClassError, ValidationError
from .ingest import (
    Dataset,
    LabelSchema,
    SplitSpec,
    TaskKind,
    impute_missing_labels,
    load_manifest,
    read_split_file,
    split,
)
from .linear_models import SvmLoss
from .kernel_svm import KernelKind
from .metrics import full_report, roc_curve_points
from .model_select import (
    ClassifierFamily,
    HyperGrid,
    grid_search,
    predict_model_labels,
    predict_model_scores,
)
from .preprocess import PRESETS, Normalization, PreprocessSpec, preprocess_image
from .serialize import save_model


class StageFailure(EmbedClassError):
    """A pipeline stage failed; carries the stage name and original error."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[stage {stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class RunConfig:
    name: str
    seed: int
    out_dir: Path
    cache_dir: Path
    manifest: Path
    schema: LabelSchema
    split_spec: SplitSpec
    preprocess: PreprocessSpec
    encoder_id: str
    encoder_graph: Path
    batch_size: int
    family: ClassifierFamily
    grid: HyperGrid
    benchmark_name: str | None = None
    benchmarks_path: Path | None = None
    canonical: bool = False


def _require(table: dict, key: str, section: str):
    if key not in table:
        raise ConfigError(f"config section [{section}] is missing {key!r}")
    return table[key]


def load_config(path: str | Path, canonical: bool = False) -> RunConfig:
    """Parse and validate a TOML run config; relative paths resolve against it."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = tomllib.loads(path.read_text("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    base = path.parent

    def respath(value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else base / p

    run = doc.get("run", {})
    data = doc.get("data", {})
    pre = doc.get("preprocess", {})
    enc = doc.get("encoder", {})
    clf = doc.get("classifier", {})

    try:
        task = TaskKind(_require(data, "task", "data"))
    except ValueError as exc:
        raise ConfigError(f"unknown task kind: {exc}") from None
    schema = LabelSchema(task, tuple(_require(data, "classes", "data")))

    if "train_ids" in data or "test_ids" in data:
        if "train_fraction" in data:
            raise ConfigError("config mixes train_fraction with explicit split lists")
        split_spec = SplitSpec.explicit(
            read_split_file(respath(_require(data, "train_ids", "data"))),
            read_split_file(respath(_require(data, "test_ids", "data"))),
        )
    else:
        split_spec = SplitSpec.ratio(
            float(data.get("train_fraction", 0.8)), int(run.get("seed", 0))
        )

    if "preset" in pre:
        preset = pre["preset"]
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; options: {sorted(PRESETS)}")
        prep = PRESETS[preset]
    else:
        crop = pre.get("crop", [pre.get("crop_height"), pre.get("crop_width")])
        if None in crop:
            raise ConfigError("preprocess needs a preset or resize/crop geometry")
        try:
            prep = PreprocessSpec(
                int(_require(pre, "resize_short_side", "preprocess")),
                int(crop[0]),
                int(crop[1]),
                Normalization(pre.get("normalization", "imagenet")),
            )
        except ValueError as exc:
            raise ConfigError(f"bad preprocess config: {exc}") from None

    try:
        family = ClassifierFamily(_require(clf, "family", "classifier"))
    except ValueError:
        raise ConfigError(
            f"unknown classifier family {clf.get('family')!r}; "
            f"options: {[f.value for f in ClassifierFamily]}"
        ) from None
    try:
        grid = HyperGrid(
            c_values=tuple(float(c) for c in clf.get("c_values", (0.1, 1.0, 10.0, 100.0))),
            losses=tuple(SvmLoss(v) for v in clf.get("losses", ("hinge", "squared-hinge"))),
            kernels=tuple(KernelKind(v) for v in clf.get("kernels", ("linear", "rbf"))),
            gamma_modes=tuple(clf.get("gamma_modes", ("scale", "auto"))),
        )
    except ValueError as exc:
        raise ConfigError(f"bad classifier grid: {exc}") from None

    graph = respath(_require(enc, "graph", "encoder"))
    if not graph.exists():
        raise ConfigError(f"encoder graph does not exist: {graph}")

    benchmark = data.get("benchmark")
    return RunConfig(
        name=str(run.get("name", path.stem)),
        seed=int(run.get("seed", 0)),
        out_dir=respath(str(run.get("out_dir", "out"))),
        cache_dir=respath(str(run.get("cache_dir", "cache"))),
        manifest=respath(_require(data, "manifest", "data")),
        schema=schema,
        split_spec=split_spec,
        preprocess=prep,
        encoder_id=str(_require(enc, "id", "encoder")),
        encoder_graph=graph,
        batch_size=int(enc.get("batch_size", 32)),
        family=family,
        grid=grid,
        benchmark_name=str(benchmark) if benchmark else None,
        benchmarks_path=respath(doc["benchmarks"]) if "benchmarks" in doc else None,
        canonical=canonical,
    )


@dataclass
class EmbedStats:
    encoder_invocations: int
    cache_hit: bool
    cache_path: str


@dataclass
class RunRecord:
    dataset: str
    encoder_id: str
    family: str
    winning_config: dict
    cv: dict
    metrics: dict
    benchmark: dict | None
    embed_stats: dict
    seed: int
    runtime: dict | None
    artifacts: dict

    def to_json(self) -> str:
        payload = {
            "dataset": self.dataset,
            "encoder_id": self.encoder_id,
            "family": self.family,
            "winning_config": self.winning_config,
            "cv": self.cv,
            "metrics": self.metrics,
            "benchmark": self.benchmark,
            "embed_stats": self.embed_stats,
            "seed": self.seed,
            "runtime": self.runtime,
            "artifacts": self.artifacts,
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def _stage(name: str):
    class _StageContext:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if isinstance(exc, Exception) and not isinstance(exc, StageFailure):
                raise StageFailure(name, exc) from exc
            return False

    return _StageContext()


def prepare_dataset(config: RunConfig) -> tuple[Dataset, Dataset, Dataset, int]:
    """Load, impute, and split the manifest; returns (full, train, test, imputed)."""
    ds = load_manifest(config.manifest, config.schema, name=config.name)
    ds, summary = impute_missing_labels(ds)
    train, test = split(ds, config.split_spec)
    if len(train) == 0 or len(test) == 0:
        raise ValidationError("split produced an empty train or test side")
    return ds, train, test, summary.n_imputed


def cache_path_for(config: RunConfig) -> Path:
    tag = f"{config.name}-{config.encoder_id}-{config.preprocess.identity_hash():016x}"
    return config.cache_dir / f"{tag}.embd"


def ensure_embeddings(config: RunConfig, ds: Dataset) -> tuple[EmbeddingMatrix, EmbedStats]:
    """Return embeddings for every sample, reusing a valid cache when present."""
    path = cache_path_for(config)
    ids = list(ds.ids)
    if path.exists():
        try:
            cached = read_cache(path)
            if set(ids).issubset(set(cached.sample_ids)):
                return cached, EmbedStats(0, True, str(path))
        except DataError:
            pass  # unreadable cache: fall through and rebuild
    encoder = load_encoder(
        EncoderSpec(encoder_id=config.encoder_id, graph_path=config.encoder_graph)
    )
    tensors = [
        preprocess_image(s.image_path, config.preprocess, s.id, missing=s.image_missing)
        for s in ds.samples
    ]
    embeddings = encoder.embed_batch(tensors, batch_size=config.batch_size)
    matrix = EmbeddingMatrix.from_embeddings(
        embeddings, config.encoder_id, config.preprocess.identity_hash()
    )
    config.cache_dir.mkdir(parents=True, exist_ok=True)
    write_cache(matrix, path)
    return matrix, EmbedStats(len(embeddings), False, str(path))


def write_metrics_csv(path: Path, report, class_names) -> None:
    """Metric table CSV: a macro row plus one row per class."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("class,accuracy,recall,precision,f1,auc\n")
        fh.write(
            f"macro,{report.accuracy!r},{report.prf.macro_recall!r},"
            f"{report.prf.macro_precision!r},{report.prf.macro_f1!r},{report.auc.macro!r}\n"
        )
        for i, name in enumerate(class_names):
            c = report.prf.per_class[i]
            auc = report.auc.per_class[i]
            fh.write(
                f"{name},,{c.recall!r},{c.precision!r},{c.f1!r},"
                f"{'' if auc is None else repr(auc)}\n"
            )


def write_roc_csv(path: Path, y_true: np.ndarray, scores: np.ndarray, task: TaskKind) -> None:
    """ROC staircases as CSV. Binary: (fpr,tpr,threshold); else a class column."""
    with open(path, "w", encoding="utf-8") as fh:
        if task is TaskKind.BINARY:
            fh.write("fpr,tpr,threshold\n")
            for fpr, tpr, thr in roc_curve_points(y_true[:, 1], scores[:, 1]):
                fh.write(f"{float(fpr)!r},{float(tpr)!r},{float(thr)!r}\n")
            return
        fh.write("class,fpr,tpr,threshold\n")
        for c in range(y_true.shape[1]):
            col = y_true[:, c]
            if col.sum() in (0, len(col)):
                continue
            for fpr, tpr, thr in roc_curve_points(col, scores[:, c]):
                fh.write(f"{c},{float(fpr)!r},{float(tpr)!r},{float(thr)!r}\n")


def run_pipeline(config: RunConfig) -> RunRecord:
    """Execute the full pipeline and persist the RunRecord and artifacts."""
    timings: dict[str, float] = {}
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    with _stage("ingest"):
        ds, train, test, n_imputed = prepare_dataset(config)
    timings["ingest"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    with _stage("embed"):
        matrix, estats = ensure_embeddings(config, ds)
        x_train = matrix.rows_for(train.ids).astype(np.float64)
        x_test = matrix.rows_for(test.ids).astype(np.float64)
    timings["embed"] = time.perf_counter() - t0

    y_train = train.label_matrix()
    y_test = test.label_matrix()

    t0 = time.perf_counter()
    with _stage("gridsearch"):
        cv, model = grid_search(
            x_train, y_train, config.schema, config.family, config.grid, config.seed
        )
    timings["gridsearch"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    with _stage("evaluate"):
        scores = predict_model_scores(model, x_test)
        labels = predict_model_labels(model, x_test)
        report = full_report(y_test, labels, scores.scores, config.schema.task_kind)
    timings["evaluate"] = time.perf_counter() - t0

    with _stage("report"):
        benchmark = None
        if config.benchmark_name:
            table = load_benchmarks(config.benchmarks_path)
            benchmark = table.compare(config.benchmark_name, report.auc.macro)

        model_path = out / "model.bin"
        save_model(model, model_path)
        cv_csv = out / "cv_results.csv"
        with open(cv_csv, "w", encoding="utf-8") as fh:
            fh.write("family,config,fold,auc\n")
            for family, desc, fold, auc in cv.csv_rows():
                fh.write(f'{family},"{desc}",{fold},{auc!r}\n')
        metrics_csv = out / "metrics.csv"
        write_metrics_csv(metrics_csv, report, config.schema.class_names)
        winner_json = out / "winner.json"
        winner_json.write_text(json.dumps(cv.winner_record(), indent=2, sort_keys=True))
        roc_csv = out / "roc_points.csv"
        write_roc_csv(roc_csv, y_test, scores.scores, config.schema.task_kind)

        record = RunRecord(
            dataset=config.name,
            encoder_id=config.encoder_id,
            family=config.family.value,
            winning_config=cv.winner.config(),
            cv=cv.winner_record(),
            metrics=report.to_dict(config.schema.class_names),
            benchmark=benchmark,
            embed_stats={
                "cache_path": Path(estats.cache_path).name,
                "n_imputed_labels": n_imputed,
                "n_train": len(train),
                "n_test": len(test),
            },
            seed=config.seed,
            # runtime describes this execution (reruns differ); canonical output drops it
            runtime=None if config.canonical else {
                "timings": {k: round(v, 6) for k, v in timings.items()},
                "encoder_invocations": estats.encoder_invocations,
                "cache_hit": estats.cache_hit,
            },
            artifacts={
                "model": model_path.name,
                "cv_results": cv_csv.name,
                "metrics": metrics_csv.name,
                "winner": winner_json.name,
                "roc_points": roc_csv.name,
            },
        )
        (out / "run_record.json").write_text(record.to_json())
    return record
