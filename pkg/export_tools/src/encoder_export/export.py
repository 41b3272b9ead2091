"""Top-level export entry points: build, write, validate, manifest."""

from __future__ import annotations

from pathlib import Path

from embedclass.encoder import EncoderSpec, load_encoder

from . import clip_visual, resnet50
from .manifest import ExportManifest, file_hash

OPSET = 17


class ExportError(RuntimeError):
    """Checkpoint retrieval or graph conversion failed."""


def _emit(out_path: Path, graph: bytes, encoder_id: str, checkpoint: str,
          input_spec: dict, output_dim: int) -> ExportManifest:
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(graph)
    # confirm the consumer accepts the file and reads the promised width
    handle = load_encoder(EncoderSpec(encoder_id, out_path))
    if handle.embedding_dim != output_dim:
        raise ExportError(
            f"exported graph reports width {handle.embedding_dim}, expected {output_dim}"
        )
    manifest = ExportManifest(
        encoder_id=encoder_id,
        source_checkpoint=checkpoint,
        opset=OPSET,
        input_spec=input_spec,
        output_dim=output_dim,
        content_hash=file_hash(out_path),
    )
    manifest.save(out_path.with_suffix("").with_suffix(".manifest.json")
                  if out_path.suffix == ".onnx" else out_path.with_name(out_path.name + ".manifest.json"))
    return manifest


def export_resnet50_penultimate(
    out_path: str | Path, pretrained: bool = True, seed: int = 0
) -> ExportManifest:
    """Export ResNet50 with its classification head removed (2048-wide)."""
    try:
        model, checkpoint = resnet50.load_source_model(pretrained, seed)
    except Exception as exc:
        raise ExportError(f"cannot load ResNet50 checkpoint: {exc}") from exc
    graph = resnet50.build_resnet50_graph(model)
    return _emit(
        Path(out_path),
        graph,
        resnet50.ENCODER_ID,
        checkpoint,
        {"layout": "NCHW", "height": "dynamic", "width": "dynamic", "min_side": 32},
        resnet50.OUTPUT_DIM,
    )


def export_clip_visual(
    out_path: str | Path, pretrained: bool = True, seed: int = 0
) -> ExportManifest:
    """Export the CLIP ViT-B/32 visual tower plus projection (512-wide)."""
    try:
        model, checkpoint = clip_visual.load_source_model(pretrained, seed)
    except Exception as exc:
        raise ExportError(f"cannot load CLIP checkpoint: {exc}") from exc
    graph = clip_visual.build_clip_visual_graph(model)
    return _emit(
        Path(out_path),
        graph,
        clip_visual.ENCODER_ID,
        checkpoint,
        {"layout": "NCHW", "height": clip_visual.IMAGE_SIZE, "width": clip_visual.IMAGE_SIZE},
        clip_visual.OUTPUT_DIM,
    )
