import json

import numpy as np
import pytest
import torch

from embedclass.encoder import EncoderSpec, load_encoder
from embedclass.preprocess import ImageTensor

from encoder_export.clip_visual import build_clip_visual_graph
from encoder_export.export import ExportError, export_clip_visual, export_resnet50_penultimate
from encoder_export.manifest import ExportManifest, file_hash


@pytest.fixture(scope="module")
def resnet_export(tmp_path_factory):
    out = tmp_path_factory.mktemp("resnet") / "resnet50-penultimate.onnx"
    manifest = export_resnet50_penultimate(out, pretrained=False, seed=0)
    return out, manifest


@pytest.fixture(scope="module")
def clip_export(tmp_path_factory):
    out = tmp_path_factory.mktemp("clip") / "clip-vit-b32-visual.onnx"
    manifest = export_clip_visual(out, pretrained=False, seed=0)
    return out, manifest


def test_resnet_manifest_dims(resnet_export):
    path, manifest = resnet_export
    assert manifest.output_dim == 2048
    assert manifest.encoder_id == "resnet50-penultimate"
    assert manifest.opset == 17
    assert manifest.input_spec["height"] == "dynamic"
    assert manifest.verify_file(path)


def test_resnet_handles_multiple_input_sizes(resnet_export):
    # global pooling makes the feature width independent of spatial size
    path, _ = resnet_export
    enc = load_encoder(EncoderSpec("resnet50-penultimate", path))
    for side in (224, 512):
        x = np.random.default_rng(side).normal(size=(3, side, side)).astype(np.float32)
        out = enc.embed_batch([ImageTensor(x, f"s{side}", 0)])
        assert out[0].vector.shape == (2048,)


def test_resnet_reexport_is_deterministic(tmp_path, resnet_export):
    _, manifest = resnet_export
    again = export_resnet50_penultimate(tmp_path / "again.onnx", pretrained=False, seed=0)
    assert again.content_hash == manifest.content_hash


def test_clip_manifest_dims(clip_export):
    path, manifest = clip_export
    assert manifest.output_dim == 512
    assert manifest.encoder_id == "clip-vit-b32-visual"
    assert manifest.input_spec == {"layout": "NCHW", "height": 224, "width": 224}
    assert manifest.verify_file(path)


def test_clip_graph_has_single_image_input(clip_export):
    # no text tower: the consumer's loader demands exactly one input and accepts this graph
    path, _ = clip_export
    enc = load_encoder(EncoderSpec.clip_vit_b32(path))
    assert enc.embedding_dim == 512


def test_clip_non_224_config_rejected():
    from transformers import CLIPVisionConfig, CLIPVisionModelWithProjection

    torch.manual_seed(0)
    odd = CLIPVisionModelWithProjection(CLIPVisionConfig(image_size=96, patch_size=32))
    with pytest.raises(ValueError, match="224"):
        build_clip_visual_graph(odd)


def test_manifest_round_trip(tmp_path, resnet_export):
    _, manifest = resnet_export
    path = tmp_path / "m.json"
    manifest.save(path)
    back = ExportManifest.load(path)
    assert back == manifest


def test_manifest_written_next_to_graph(resnet_export):
    path, manifest = resnet_export
    sidecar = path.parent / "resnet50-penultimate.manifest.json"
    assert sidecar.exists()
    doc = json.loads(sidecar.read_text())
    assert doc["content_hash"] == manifest.content_hash == file_hash(path)


def test_pretrained_download_failure_is_explicit(tmp_path):
    # this sandbox has no route to the checkpoint hosts
    with pytest.raises(ExportError, match="checkpoint"):
        export_resnet50_penultimate(tmp_path / "x.onnx", pretrained=True)
