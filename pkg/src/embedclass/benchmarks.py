"""Benchmark AUC comparison table.

The reference values ship as a versioned JSON constants file rather than
living in code, so alternate benchmark sets can be swapped in with
``--benchmarks``. Deltas are reported without judgment thresholds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ValidationError


@dataclass(frozen=True)
class BenchmarkTable:
    version: int
    values: dict[str, float]

    def __post_init__(self):
        for name, auc in self.values.items():
            if not (0.0 <= auc <= 1.0):
                raise ValidationError(f"benchmark AUC for {name!r} outside [0, 1]: {auc}")

    def compare(self, dataset: str, achieved_auc: float) -> dict:
        """(benchmark, achieved, delta) for one dataset; unknown names error."""
        key = dataset.lower()
        if key not in self.values:
            raise ValidationError(
                f"dataset {dataset!r} has no benchmark entry; known: {sorted(self.values)}"
            )
        benchmark = self.values[key]
        return {
            "dataset": key,
            "benchmark_auc": benchmark,
            "achieved_auc": achieved_auc,
            "delta": achieved_auc - benchmark,
        }


def load_benchmarks(path: str | Path | None = None) -> BenchmarkTable:
    """Load a benchmark table; defaults to the packaged constants file."""
    if path is None:
        raw = resources.files("embedclass").joinpath("data/benchmarks.json").read_text("utf-8")
    else:
        raw = Path(path).read_text("utf-8")
    doc = json.loads(raw)
    return BenchmarkTable(version=int(doc.get("version", 1)), values=dict(doc["benchmarks"]))
