"""Export manifests: provenance and integrity for emitted graphs."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path


@dataclass(frozen=True)
class ExportManifest:
    encoder_id: str
    source_checkpoint: str
    opset: int
    input_spec: dict  # {"layout": "NCHW", "height": 224 | "dynamic", ...}
    output_dim: int
    content_hash: str  # sha256 hex of the emitted .onnx file

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "ExportManifest":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**doc)

    def verify_file(self, graph_path: str | Path) -> bool:
        return file_hash(graph_path) == self.content_hash


def file_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
