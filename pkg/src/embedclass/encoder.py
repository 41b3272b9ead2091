"""Frozen encoder handles: load an ONNX graph once, embed tensors forever.

Two encoder ids carry pinned contracts:

* ``resnet50-penultimate`` — global-pooled convolutional features, 2048-d,
  dynamic spatial input (H, W >= 32).
* ``clip-vit-b32-visual`` — vision-transformer projection features, 512-d,
  fixed 224x224 input; larger preprocessed tensors are bilinearly resized
  down to 224 inside :meth:`Encoder.embed_batch`.

Any other id is treated as a custom encoder (stubs, experiments); its
embedding width and input geometry are taken from the graph itself.

Graphs must expose a single float32 input ``pixel_values`` (N x 3 x H x W)
and a single float32 output ``embedding`` (N x d), opset >= 13.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, NumericError
from .onnx_format import OnnxModel, load_model
from .onnx_runtime import GraphExecutor
from .preprocess import ImageTensor, resize_bilinear

INPUT_NAME = "pixel_values"
OUTPUT_NAME = "embedding"

RESNET50_ID = "resnet50-penultimate"
CLIP_ID = "clip-vit-b32-visual"

KNOWN_ENCODER_DIMS = {RESNET50_ID: 2048, CLIP_ID: 512}
_DYNAMIC_MIN_SIDE = 32
_CLIP_SIDE = 224


class EncoderLoadError(DataError):
    """Graph missing, malformed, or inconsistent with the encoder spec."""


@dataclass(frozen=True)
class EncoderSpec:
    """What to load and what the loaded graph must look like."""

    encoder_id: str
    graph_path: str | Path
    embedding_dim: int | None = None

    @classmethod
    def resnet50(cls, graph_path) -> "EncoderSpec":
        return cls(RESNET50_ID, graph_path, KNOWN_ENCODER_DIMS[RESNET50_ID])

    @classmethod
    def clip_vit_b32(cls, graph_path) -> "EncoderSpec":
        return cls(CLIP_ID, graph_path, KNOWN_ENCODER_DIMS[CLIP_ID])

    def expected_dim(self) -> int | None:
        if self.embedding_dim is not None:
            return self.embedding_dim
        return KNOWN_ENCODER_DIMS.get(self.encoder_id)


@dataclass(frozen=True)
class Embedding:
    vector: np.ndarray
    sample_id: str


class Encoder:
    """Immutable handle over a validated graph; safe to share across threads.

    ``embed_batch`` is pure: parallel callers may embed disjoint batches
    concurrently (inter-batch parallelism); within a batch execution is a
    single numpy pass.
    """

    def __init__(self, spec: EncoderSpec, model: OnnxModel, embedding_dim: int):
        self.spec = spec
        self.embedding_dim = embedding_dim
        self._executor = GraphExecutor(model)
        self._fixed_side = _CLIP_SIDE if spec.encoder_id == CLIP_ID else None

    @property
    def encoder_id(self) -> str:
        return self.spec.encoder_id

    def _prepare(self, tensor: ImageTensor) -> np.ndarray:
        data = tensor.data
        if not np.all(np.isfinite(data)):
            raise NumericError(f"sample {tensor.sample_id!r}: non-finite input tensor")
        _, h, w = data.shape
        if self._fixed_side is not None:
            if h < self._fixed_side or w < self._fixed_side:
                raise DataError(
                    f"sample {tensor.sample_id!r}: {self.encoder_id} needs inputs of at "
                    f"least {self._fixed_side}x{self._fixed_side}, got {h}x{w}"
                )
            if (h, w) != (self._fixed_side, self._fixed_side):
                data = resize_bilinear(data, self._fixed_side, self._fixed_side)
        elif self.encoder_id == RESNET50_ID and min(h, w) < _DYNAMIC_MIN_SIDE:
            raise DataError(
                f"sample {tensor.sample_id!r}: {self.encoder_id} needs H, W >= "
                f"{_DYNAMIC_MIN_SIDE}, got {h}x{w}"
            )
        return data

    def embed_batch(self, tensors: list[ImageTensor], batch_size: int = 32) -> list[Embedding]:
        """Embed tensors in input order, chunked by ``batch_size``."""
        if batch_size <= 0:
            raise ValueError("batch_size must be positive")
        out: list[Embedding] = []
        for start in range(0, len(tensors), batch_size):
            chunk = tensors[start : start + batch_size]
            batch = np.stack([self._prepare(t) for t in chunk]).astype(np.float32)
            result = self._executor.run({INPUT_NAME: batch})[OUTPUT_NAME]
            result = np.asarray(result, dtype=np.float32)
            if result.ndim != 2 or result.shape != (len(chunk), self.embedding_dim):
                raise NumericError(
                    f"graph returned shape {result.shape}, expected "
                    f"({len(chunk)}, {self.embedding_dim})"
                )
            if not np.all(np.isfinite(result)):
                bad = chunk[int(np.argwhere(~np.isfinite(result))[0][0])].sample_id
                raise NumericError(f"non-finite embedding produced for sample {bad!r}")
            for tensor, row in zip(chunk, result):
                out.append(Embedding(vector=np.ascontiguousarray(row), sample_id=tensor.sample_id))
        return out


def load_encoder(spec: EncoderSpec) -> Encoder:
    """Load and validate a graph, returning an immutable :class:`Encoder`.

    Raises :class:`EncoderLoadError` when the file is missing, when the
    graph does not expose the ``pixel_values``/``embedding`` interface, or
    when the output width disagrees with the spec (for instance a graph
    whose classification head was never removed).
    """
    path = Path(spec.graph_path)
    if not path.exists():
        raise EncoderLoadError(f"encoder graph not found: {path}")
    model = load_model(path)
    if model.opset and model.opset < 13:
        raise EncoderLoadError(f"graph opset {model.opset} too old; need >= 13")
    if len(model.inputs) != 1 or model.inputs[0].name != INPUT_NAME:
        names = [i.name for i in model.inputs]
        raise EncoderLoadError(
            f"graph must declare exactly one input named {INPUT_NAME!r}, found {names}"
        )
    if len(model.outputs) != 1 or model.outputs[0].name != OUTPUT_NAME:
        names = [o.name for o in model.outputs]
        raise EncoderLoadError(
            f"graph must declare exactly one output named {OUTPUT_NAME!r}, found {names}"
        )
    out_dims = model.outputs[0].dims
    if len(out_dims) != 2:
        raise EncoderLoadError(
            f"output rank {len(out_dims)} is not a vector batch; the graph looks like it "
            "still carries extra structure - re-export the encoder with the head removed"
        )
    width = out_dims[1]
    if not isinstance(width, int):
        raise EncoderLoadError("output width must be a concrete dimension")
    expected = spec.expected_dim()
    if expected is not None and width != expected:
        raise EncoderLoadError(
            f"graph output width {width} does not match expected embedding dim {expected} "
            f"for {spec.encoder_id!r}; re-export with the classification head removed"
        )
    return Encoder(spec, model, width)
