import numpy as np
import pytest

from conftest import build_identity_stub
from embedclass.encoder import (
    CLIP_ID,
    RESNET50_ID,
    EncoderLoadError,
    EncoderSpec,
    load_encoder,
)
from embedclass.errors import DataError, NumericError
from embedclass.onnx_format import Node, OnnxModel, ValueInfo, save_model
from embedclass.preprocess import ImageTensor, resize_bilinear


def make_tensor(shape=(3, 2, 4), seed=0, sample_id="s"):
    rng = np.random.default_rng(seed)
    return ImageTensor(rng.uniform(0, 1, shape).astype(np.float32), sample_id, 0)


def build_pool_encoder(path, out_dim, declared_input=("batch", 3, 224, 224), seed=0):
    """GlobalAveragePool -> Flatten -> Gemm(3 -> out_dim): any-size input."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(3, out_dim)).astype(np.float32)
    nodes = [
        Node("GlobalAveragePool", ("pixel_values",), ("p",), {}),
        Node("Flatten", ("p",), ("f",), {"axis": 1}),
        Node("Gemm", ("f", "w"), ("embedding",), {}),
    ]
    model = OnnxModel(
        nodes=nodes,
        initializers={"w": w},
        inputs=[ValueInfo("pixel_values", 1, declared_input)],
        outputs=[ValueInfo("embedding", 1, ("batch", out_dim))],
    )
    save_model(model, path)
    return path


def test_load_stub_reports_dim(tmp_path):
    path = build_identity_stub(tmp_path / "stub.onnx")
    enc = load_encoder(EncoderSpec("identity-8", path))
    assert enc.embedding_dim == 8
    assert enc.encoder_id == "identity-8"


def test_missing_graph_file(tmp_path):
    with pytest.raises(EncoderLoadError, match="not found"):
        load_encoder(EncoderSpec("identity-8", tmp_path / "ghost.onnx"))


def test_untruncated_classifier_head_rejected(tmp_path):
    # graph ends in a 1000-wide output but the spec expects 2048
    path = build_pool_encoder(tmp_path / "cls.onnx", out_dim=1000)
    with pytest.raises(EncoderLoadError, match="re-export"):
        load_encoder(EncoderSpec.resnet50(path))


def test_wrong_output_rank_rejected(tmp_path):
    nodes = [Node("Identity", ("pixel_values",), ("embedding",), {})]
    model = OnnxModel(
        nodes=nodes,
        initializers={},
        inputs=[ValueInfo("pixel_values", 1, ("batch", 3, 8, 8))],
        outputs=[ValueInfo("embedding", 1, ("batch", 3, 8, 8))],
    )
    save_model(model, tmp_path / "rank4.onnx")
    with pytest.raises(EncoderLoadError, match="re-export"):
        load_encoder(EncoderSpec("x", tmp_path / "rank4.onnx"))


def test_wrong_io_names_rejected(tmp_path):
    model = OnnxModel(
        nodes=[Node("Flatten", ("images",), ("features",), {"axis": 1})],
        initializers={},
        inputs=[ValueInfo("images", 1, ("batch", 3, 2, 2))],
        outputs=[ValueInfo("features", 1, ("batch", 12))],
    )
    save_model(model, tmp_path / "names.onnx")
    with pytest.raises(EncoderLoadError, match="pixel_values"):
        load_encoder(EncoderSpec("x", tmp_path / "names.onnx"))


def test_embed_batch_order_and_determinism(tmp_path):
    enc = load_encoder(EncoderSpec("identity-8", build_identity_stub(tmp_path / "s.onnx")))
    tensors = [make_tensor(seed=i, sample_id=f"t{i}") for i in range(3)]
    out1 = enc.embed_batch(tensors)
    out2 = enc.embed_batch(tensors)
    assert [e.sample_id for e in out1] == ["t0", "t1", "t2"]
    for a, b in zip(out1, out2):
        assert np.array_equal(a.vector, b.vector)


def test_batch_invariance(tmp_path):
    enc = load_encoder(EncoderSpec("identity-8", build_identity_stub(tmp_path / "s.onnx")))
    tensors = [make_tensor(seed=i, sample_id=f"t{i}") for i in range(64)]
    big = enc.embed_batch(tensors, batch_size=64)
    singles = [enc.embed_batch([t], batch_size=1)[0] for t in tensors]
    for a, b in zip(big, singles):
        assert np.array_equal(a.vector, b.vector)


def test_zero_tensor_embeds_to_stable_finite_vector(tmp_path):
    path = build_pool_encoder(tmp_path / "p.onnx", out_dim=16)
    zero = ImageTensor(np.zeros((3, 224, 224), dtype=np.float32), "missing", 0)
    enc1 = load_encoder(EncoderSpec("pool-16", path))
    enc2 = load_encoder(EncoderSpec("pool-16", path))
    v1 = enc1.embed_batch([zero])[0].vector
    v2 = enc2.embed_batch([zero])[0].vector
    assert np.all(np.isfinite(v1))
    assert np.array_equal(v1, v2)


def test_nonfinite_input_rejected_with_sample_id(tmp_path):
    enc = load_encoder(EncoderSpec("identity-8", build_identity_stub(tmp_path / "s.onnx")))
    bad = ImageTensor.__new__(ImageTensor)
    data = np.full((3, 2, 4), np.nan, dtype=np.float32)
    object.__setattr__(bad, "data", data)
    object.__setattr__(bad, "sample_id", "poisoned")
    object.__setattr__(bad, "spec_hash", 0)
    with pytest.raises(NumericError, match="poisoned"):
        enc.embed_batch([bad])


def test_clip_id_resizes_larger_inputs(tmp_path):
    path = build_pool_encoder(tmp_path / "clip.onnx", out_dim=512)
    enc = load_encoder(EncoderSpec.clip_vit_b32(path))
    big = make_tensor((3, 448, 448), seed=1, sample_id="big")
    small_data = resize_bilinear(big.data, 224, 224)
    direct = enc.embed_batch([ImageTensor(small_data, "direct", 0)])[0].vector
    adapted = enc.embed_batch([big])[0].vector
    assert np.allclose(direct, adapted, atol=1e-6)


def test_clip_id_rejects_tiny_inputs(tmp_path):
    path = build_pool_encoder(tmp_path / "clip.onnx", out_dim=512)
    enc = load_encoder(EncoderSpec.clip_vit_b32(path))
    with pytest.raises(DataError, match="at least 224"):
        enc.embed_batch([make_tensor((3, 100, 100), sample_id="tiny")])


def test_resnet_id_enforces_minimum_side(tmp_path):
    path = build_pool_encoder(tmp_path / "r.onnx", out_dim=2048)
    enc = load_encoder(EncoderSpec.resnet50(path))
    with pytest.raises(DataError, match="32"):
        enc.embed_batch([make_tensor((3, 16, 16), sample_id="small")])
    out = enc.embed_batch([make_tensor((3, 64, 48), sample_id="ok")])
    assert out[0].vector.shape == (2048,)


def test_known_encoder_dims_pinned(tmp_path):
    # the two first-class encoder ids carry fixed embedding widths
    wrong = build_pool_encoder(tmp_path / "w.onnx", out_dim=512)
    with pytest.raises(EncoderLoadError):
        load_encoder(EncoderSpec(RESNET50_ID, wrong))
    ok = build_pool_encoder(tmp_path / "c.onnx", out_dim=512)
    assert load_encoder(EncoderSpec(CLIP_ID, ok)).embedding_dim == 512
