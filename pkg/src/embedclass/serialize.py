"""Versioned binary persistence for trained models.

Layout (little-endian throughout):

* magic ``LMDL``, u16 version (currently 1)
* u32 header length, then that many bytes of UTF-8 JSON describing the
  model: family, kind/loss/kernel, task, class names, C, gamma, and the
  parameter shapes
* float64 parameter payloads in header-declared order
  (linear: weights then intercepts; kernel: support vectors, dual
  coefficients, then intercepts)
* u64 checksum: first 8 bytes (LE u64) of SHA-256 over everything above

The same checksum rule as the embedding cache keeps readers simple.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError
from .ingest import LabelSchema, TaskKind
from .kernel_svm import KernelKind, KernelModel
from .linear_models import LinearModel, ModelKind, SvmLoss

MAGIC = b"LMDL"
VERSION = 1


class ModelFileError(DataError):
    """Model file is missing, corrupt, or from an unsupported version."""


def _checksum(blob: bytes) -> int:
    return struct.unpack("<Q", hashlib.sha256(blob).digest()[:8])[0]


def save_model(model: LinearModel | KernelModel, path: str | Path) -> int:
    path = Path(path)
    if isinstance(model, KernelModel):
        header = {
            "family": "kernel",
            "kernel": model.kind.value,
            "gamma": model.gamma,
            "task": model.schema.task_kind.value,
            "class_names": list(model.schema.class_names),
            "C": model.C,
            "shapes": {
                "support_vectors": list(model.support_vectors.shape),
                "dual_coefs": list(model.dual_coefs.shape),
                "intercepts": list(model.intercepts.shape),
            },
        }
        payloads = [model.support_vectors, model.dual_coefs, model.intercepts]
    else:
        header = {
            "family": "linear",
            "kind": model.kind.value,
            "loss": model.loss.value if model.loss else None,
            "task": model.schema.task_kind.value,
            "class_names": list(model.schema.class_names),
            "C": model.C,
            "shapes": {
                "weights": list(model.weights.shape),
                "intercepts": list(model.intercepts.shape),
            },
        }
        payloads = [model.weights, model.intercepts]

    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<H", VERSION), struct.pack("<I", len(header_bytes)), header_bytes]
    for arr in payloads:
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    blob = b"".join(parts)
    checksum = _checksum(blob)
    with open(path, "wb") as fh:
        fh.write(blob)
        fh.write(struct.pack("<Q", checksum))
    return checksum


def load_model(path: str | Path) -> LinearModel | KernelModel:
    blob = Path(path).read_bytes()
    if len(blob) < 18 or blob[:4] != MAGIC:
        raise ModelFileError(f"{path}: not a model file")
    (version,) = struct.unpack("<H", blob[4:6])
    if version != VERSION:
        raise ModelFileError(f"{path}: unsupported model version {version}")
    if _checksum(blob[:-8]) != struct.unpack("<Q", blob[-8:])[0]:
        raise ModelFileError(f"{path}: checksum mismatch")
    (header_len,) = struct.unpack("<I", blob[6:10])
    header = json.loads(blob[10 : 10 + header_len].decode("utf-8"))
    schema = LabelSchema(TaskKind(header["task"]), tuple(header["class_names"]))
    pos = 10 + header_len

    def take(shape) -> np.ndarray:
        nonlocal pos
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(shape)
        pos += count * 8
        return arr.astype(np.float64)

    shapes = header["shapes"]
    if header["family"] == "kernel":
        sv = take(shapes["support_vectors"])
        coefs = take(shapes["dual_coefs"])
        intercepts = take(shapes["intercepts"])
        return KernelModel(
            support_vectors=sv,
            dual_coefs=coefs,
            intercepts=intercepts,
            kind=KernelKind(header["kernel"]),
            gamma=header["gamma"],
            C=header["C"],
            schema=schema,
        )
    weights = take(shapes["weights"])
    intercepts = take(shapes["intercepts"])
    return LinearModel(
        kind=ModelKind(header["kind"]),
        weights=weights,
        intercepts=intercepts,
        C=header["C"],
        schema=schema,
        loss=SvmLoss(header["loss"]) if header.get("loss") else None,
    )
