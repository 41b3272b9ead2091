import numpy as np
import pytest
import torch

from embedclass.encoder import EncoderSpec, load_encoder
from embedclass.preprocess import ImageTensor

from encoder_export.clip_visual import ENCODER_ID as CLIP_ID
from encoder_export.clip_visual import IMAGE_SIZE
from encoder_export.clip_visual import load_source_model as load_clip
from encoder_export.export import export_clip_visual, export_resnet50_penultimate
from encoder_export.parity import PARITY_TOLERANCE, parity_check
from encoder_export.resnet50 import ENCODER_ID as RESNET_ID
from encoder_export.resnet50 import build_resnet50_graph
from encoder_export.resnet50 import load_source_model as load_resnet


@pytest.fixture(scope="module")
def resnet_pair(tmp_path_factory):
    out = tmp_path_factory.mktemp("rparity") / "resnet50-penultimate.onnx"
    export_resnet50_penultimate(out, pretrained=False, seed=0)
    model, _ = load_resnet(pretrained=False, seed=0)
    return out, model


@pytest.fixture(scope="module")
def clip_pair(tmp_path_factory):
    out = tmp_path_factory.mktemp("cparity") / "clip-vit-b32-visual.onnx"
    export_clip_visual(out, pretrained=False, seed=0)
    model, _ = load_clip(pretrained=False, seed=0)
    return out, model


def test_resnet_parity_within_tolerance(resnet_pair):
    path, model = resnet_pair
    report = parity_check(path, model, RESNET_ID, input_side=None, n_samples=16, seed=0)
    assert report.n_random == 16
    assert report.n_images >= 4
    assert report.max_abs_deviation <= PARITY_TOLERANCE
    assert report.passed


def test_clip_parity_within_tolerance(clip_pair):
    path, model = clip_pair
    report = parity_check(path, model, CLIP_ID, input_side=IMAGE_SIZE, n_samples=16, seed=0)
    assert report.max_abs_deviation <= PARITY_TOLERANCE
    assert report.passed


def test_zero_tensor_paths_agree(resnet_pair):
    path, model = resnet_pair
    enc = load_encoder(EncoderSpec(RESNET_ID, path))
    zero = np.zeros((1, 3, 64, 64), dtype=np.float32)
    ours = enc.embed_batch([ImageTensor(zero[0], "zero", 0)])[0].vector
    with torch.no_grad():
        ref = model(torch.from_numpy(zero)).numpy()[0]
    assert np.max(np.abs(ours - ref)) <= PARITY_TOLERANCE


def test_fp16_quantized_graph_fails_parity(tmp_path):
    # negative control: rounding weights through fp16 must push deviation past 1e-4
    model, _ = load_resnet(pretrained=False, seed=3)
    quantized, _ = load_resnet(pretrained=False, seed=3)
    with torch.no_grad():
        for p_orig, p_quant in zip(model.parameters(), quantized.parameters()):
            p_quant.copy_(p_orig.half().float())
    path = tmp_path / "quantized.onnx"
    path.write_bytes(build_resnet50_graph(quantized))
    report = parity_check(path, model, RESNET_ID, input_side=None, n_samples=4, seed=1)
    assert report.max_abs_deviation > PARITY_TOLERANCE
    assert not report.passed


def test_parity_deterministic(clip_pair):
    path, model = clip_pair
    a = parity_check(path, model, CLIP_ID, input_side=IMAGE_SIZE, n_samples=2, seed=7)
    b = parity_check(path, model, CLIP_ID, input_side=IMAGE_SIZE, n_samples=2, seed=7)
    assert a.max_abs_deviation == b.max_abs_deviation
