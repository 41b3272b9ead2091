"""Dataset manifests: loading, label imputation, and train/test splitting.

A manifest is a UTF-8 CSV with header ``id,image_path,<class_1>,...,<class_K>``.
Label cells are ``0``, ``1``, empty (absent), or ``-1`` (an uncertainty marker,
normalized to absent at parse time). Absent entries are represented as NaN
until :func:`impute_missing_labels` replaces them with 0.0.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ManifestParseError, SchemaError, ValidationError
from .rng import shuffle


class TaskKind(enum.Enum):
    BINARY = "binary"
    MULTICLASS = "multiclass"
    MULTILABEL = "multilabel"


@dataclass(frozen=True)
class LabelSchema:
    """Task kind plus the ordered class (or label) names."""

    task_kind: TaskKind
    class_names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.class_names)
        object.__setattr__(self, "class_names", names)
        if len(names) < 2:
            raise SchemaError("schema needs at least 2 classes")
        if len(set(names)) != len(names):
            raise SchemaError("class names must be unique")
        if any(not n for n in names):
            raise SchemaError("class names must be non-empty")
        if self.task_kind is TaskKind.BINARY and len(names) != 2:
            raise SchemaError("binary task requires exactly 2 classes")

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


@dataclass(frozen=True)
class Sample:
    """One manifest row. ``labels`` is float64 length K; NaN marks absent."""

    id: str
    image_path: str
    labels: np.ndarray
    image_missing: bool = False

    def __post_init__(self):
        arr = np.asarray(self.labels, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)


@dataclass(frozen=True)
class Dataset:
    schema: LabelSchema
    samples: tuple[Sample, ...]
    name: str = ""

    def __post_init__(self):
        samples = tuple(self.samples)
        object.__setattr__(self, "samples", samples)
        k = self.schema.n_classes
        seen: set[str] = set()
        for s in samples:
            if s.id in seen:
                raise ValidationError(f"duplicate sample id {s.id!r}")
            seen.add(s.id)
            if s.labels.shape != (k,):
                raise ValidationError(
                    f"sample {s.id!r}: label vector has length {s.labels.shape}, expected {k}"
                )

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.samples)

    def label_matrix(self) -> np.ndarray:
        """Stacked n x K label matrix (may contain NaN before imputation)."""
        if not self.samples:
            return np.zeros((0, self.schema.n_classes))
        return np.stack([s.labels for s in self.samples])

    def subset(self, ids: Iterable[str], name: str = "") -> "Dataset":
        wanted = set(ids)
        picked = tuple(s for s in self.samples if s.id in wanted)
        return Dataset(self.schema, picked, name or self.name)


@dataclass(frozen=True)
class SplitSpec:
    """Either a seeded ratio split or explicit train/test id lists."""

    seed: int = 0
    train_fraction: float | None = None
    train_ids: tuple[str, ...] | None = None
    test_ids: tuple[str, ...] | None = None

    @classmethod
    def ratio(cls, train_fraction: float, seed: int) -> "SplitSpec":
        return cls(seed=seed, train_fraction=train_fraction)

    @classmethod
    def explicit(cls, train_ids: Sequence[str], test_ids: Sequence[str]) -> "SplitSpec":
        return cls(train_ids=tuple(train_ids), test_ids=tuple(test_ids))

    def __post_init__(self):
        explicit = self.train_ids is not None or self.test_ids is not None
        if self.train_fraction is not None:
            if explicit:
                raise ValidationError("split spec cannot mix ratio and explicit lists")
            if not (0.0 < self.train_fraction < 1.0):
                raise ValidationError("train fraction must lie in (0, 1)")
        elif explicit:
            if self.train_ids is None or self.test_ids is None:
                raise ValidationError("explicit split needs both train and test id lists")
            overlap = set(self.train_ids) & set(self.test_ids)
            if overlap:
                raise ValidationError(f"explicit split lists overlap: {sorted(overlap)[:5]}")
        else:
            raise ValidationError("split spec needs a train fraction or explicit lists")


@dataclass(frozen=True)
class ImputationSummary:
    n_imputed: int
    n_samples_affected: int


_ABSENT = float("nan")
_CELL_VALUES = {"0": 0.0, "1": 1.0, "": _ABSENT, "-1": _ABSENT}


def load_manifest(path: str | Path, schema: LabelSchema, name: str = "") -> Dataset:
    """Parse a manifest CSV into a :class:`Dataset`.

    Raises :class:`ManifestParseError` with the offending line number for
    malformed rows, :class:`SchemaError` when the header classes disagree
    with ``schema``, and :class:`ValidationError` on duplicate ids.
    """
    path = Path(path)
    k = schema.n_classes
    samples: list[Sample] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestParseError("empty manifest", line=1) from None
        if len(header) != 2 + k or header[0] != "id" or header[1] != "image_path":
            raise ManifestParseError(
                f"header must be id,image_path,<{k} class columns>; got {header}", line=1
            )
        if tuple(header[2:]) != schema.class_names:
            raise SchemaError(
                f"manifest classes {header[2:]} do not match schema {list(schema.class_names)}"
            )
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 2 + k:
                raise ManifestParseError(
                    f"expected {2 + k} columns, found {len(row)}", line=line
                )
            sample_id, image_path = row[0], row[1].strip()
            if image_path and not Path(image_path).is_absolute():
                image_path = str(path.parent / image_path)
            if not sample_id:
                raise ManifestParseError("empty sample id", line=line)
            if sample_id in seen:
                raise ValidationError(f"duplicate sample id {sample_id!r}")
            seen.add(sample_id)
            labels = np.empty(k, dtype=np.float64)
            for j, cell in enumerate(row[2:]):
                cell = cell.strip()
                if cell not in _CELL_VALUES:
                    raise ManifestParseError(
                        f"label cell {cell!r} is not one of 0, 1, -1, empty", line=line
                    )
                labels[j] = _CELL_VALUES[cell]
            _check_row_labels(schema, sample_id, labels, line)
            samples.append(
                Sample(
                    id=sample_id,
                    image_path=image_path,
                    labels=labels,
                    image_missing=not image_path,
                )
            )
    return Dataset(schema=schema, samples=tuple(samples), name=name or path.stem)


def _check_row_labels(schema: LabelSchema, sample_id: str, labels: np.ndarray, line: int):
    # Single-label tasks must carry exactly one positive so that imputation
    # leaves every row one-hot; multilabel rows are free 0/1/absent vectors.
    if schema.task_kind in (TaskKind.BINARY, TaskKind.MULTICLASS):
        if np.nansum(labels) != 1.0:
            raise SchemaError(
                f"line {line}: sample {sample_id!r} must mark exactly one class, "
                f"found sum {np.nansum(labels)}"
            )


def impute_missing_labels(ds: Dataset) -> tuple[Dataset, ImputationSummary]:
    """Replace every absent (NaN) label entry with 0.0."""
    n_imputed = 0
    n_affected = 0
    new_samples = []
    for s in ds.samples:
        mask = np.isnan(s.labels)
        hits = int(mask.sum())
        if hits:
            labels = np.where(mask, 0.0, s.labels)
            new_samples.append(replace(s, labels=labels))
            n_imputed += hits
            n_affected += 1
        else:
            new_samples.append(s)
    out = Dataset(ds.schema, tuple(new_samples), ds.name) if n_imputed else ds
    return out, ImputationSummary(n_imputed=n_imputed, n_samples_affected=n_affected)


def _train_size(fraction: float, n: int) -> int:
    # round(fraction * n) with exact halves rounded down
    return int(math.ceil(fraction * n - 0.5))


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Partition ``ds`` into (train, test) per ``spec``.

    Ratio mode keeps ``round_half_down(fraction * n)`` samples for training,
    with membership decided by a Fisher-Yates shuffle of the sample indices
    under the spec's seed. Explicit mode selects the listed ids (lists may
    cover a subset of the dataset). Sample order inside each side follows
    the original manifest order.
    """
    if len(ds) == 0:
        raise ValidationError("cannot split an empty dataset")
    if spec.train_fraction is not None:
        n = len(ds)
        n_train = _train_size(spec.train_fraction, n)
        order = shuffle(list(range(n)), spec.seed)
        train_idx = set(order[:n_train])
        train = tuple(s for i, s in enumerate(ds.samples) if i in train_idx)
        test = tuple(s for i, s in enumerate(ds.samples) if i not in train_idx)
    else:
        by_id = {s.id: s for s in ds.samples}
        for sid in (*spec.train_ids, *spec.test_ids):
            if sid not in by_id:
                raise ValidationError(f"split list references unknown id {sid!r}")
        train_ids = set(spec.train_ids)
        test_ids = set(spec.test_ids)
        train = tuple(s for s in ds.samples if s.id in train_ids)
        test = tuple(s for s in ds.samples if s.id in test_ids)
    return (
        Dataset(ds.schema, train, f"{ds.name}/train"),
        Dataset(ds.schema, test, f"{ds.name}/test"),
    )


def read_split_file(path: str | Path) -> tuple[str, ...]:
    """Read a one-id-per-line split file."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return tuple(line.strip() for line in lines if line.strip())
