import numpy as np
import pytest
from PIL import Image

from embedclass.errors import ConfigError, DecodeError
from embedclass.preprocess import (
    IMAGENET_MEAN,
    IMAGENET_STD,
    PRESETS,
    ImageTensor,
    Normalization,
    PreprocessSpec,
    decode_resize_crop,
    denormalize_imagenet,
    normalize_imagenet,
    normalize_median_mad,
    preprocess_image,
    resize_bilinear,
)

SPEC224 = PreprocessSpec(224, 224, 224, Normalization.IMAGENET)


def tensor_of(values) -> ImageTensor:
    return ImageTensor(np.asarray(values, dtype=np.float32), "t", 0)


def test_spec_validation():
    with pytest.raises(ConfigError):
        PreprocessSpec(0, 10, 10, Normalization.IMAGENET)
    with pytest.raises(ConfigError):
        PreprocessSpec(100, 200, 300, Normalization.IMAGENET)
    # one crop side may exceed the short side (covers the long side)
    PreprocessSpec(2, 2, 4, Normalization.IMAGENET)


def test_median_mad_hand_example():
    # values {1..5}: median 3, MAD 1 -> {-2,-1,0,1,2}
    t = tensor_of(np.tile(np.array([1.0, 2, 3, 4, 5]), (3, 1, 1)))
    out = normalize_median_mad(t)
    assert np.allclose(out.data[0, 0], [-2, -1, 0, 1, 2])


def test_median_mad_constant_image_is_zero():
    out = normalize_median_mad(tensor_of(np.full((3, 4, 4), 0.7)))
    assert np.all(out.data == 0.0)


def test_median_mad_output_statistics():
    # oracle: recompute median and MAD directly on the output
    rng = np.random.default_rng(11)
    t = tensor_of(rng.uniform(0, 1, (3, 64, 64)))
    out = normalize_median_mad(t).data.astype(np.float64).ravel()
    assert abs(np.median(out)) < 1e-6
    assert abs(np.median(np.abs(out - np.median(out))) - 1.0) < 1e-6


def test_imagenet_mean_pixel_maps_to_zero():
    data = np.zeros((3, 2, 2), dtype=np.float32)
    for c in range(3):
        data[c] = IMAGENET_MEAN[c]
    out = normalize_imagenet(tensor_of(data))
    assert np.allclose(out.data, 0.0, atol=1e-7)


def test_imagenet_zero_tensor_constant_channels():
    out = normalize_imagenet(tensor_of(np.zeros((3, 2, 2))))
    for c in range(3):
        assert np.allclose(out.data[c], -IMAGENET_MEAN[c] / IMAGENET_STD[c], atol=1e-6)


def test_imagenet_round_trip():
    rng = np.random.default_rng(3)
    t = tensor_of(rng.uniform(0, 1, (3, 8, 8)))
    back = denormalize_imagenet(normalize_imagenet(t))
    assert np.max(np.abs(back.data - t.data)) < 1e-6


def test_grayscale_replicated_and_resized(tmp_path):
    rng = np.random.default_rng(0)
    arr = (rng.uniform(0, 255, (50, 40))).astype(np.uint8)
    p = tmp_path / "gray.png"
    Image.fromarray(arr, mode="L").save(p)
    spec = PreprocessSpec(20, 20, 20, Normalization.IMAGENET)
    t = decode_resize_crop(p, spec, "g1")
    assert t.data.shape == (3, 20, 20)
    assert np.array_equal(t.data[0], t.data[1])
    assert np.array_equal(t.data[0], t.data[2])
    assert t.data.min() >= 0.0 and t.data.max() <= 1.0


def test_missing_image_yields_zero_tensor():
    t = decode_resize_crop("", SPEC224, "odir-sample", missing=True)
    assert t.data.shape == (3, 224, 224)
    assert np.all(t.data == 0.0)


def test_identity_geometry_preserves_values(tmp_path):
    rng = np.random.default_rng(5)
    arr = rng.integers(0, 256, (224, 224, 3), dtype=np.uint8)
    p = tmp_path / "rgb.png"
    Image.fromarray(arr, mode="RGB").save(p)
    t = decode_resize_crop(p, SPEC224, "s")
    assert np.array_equal(t.data, arr.transpose(2, 0, 1).astype(np.float32) / 255.0)


def test_decode_determinism(tmp_path):
    arr = np.random.default_rng(9).integers(0, 256, (30, 45, 3), dtype=np.uint8)
    p = tmp_path / "x.png"
    Image.fromarray(arr, mode="RGB").save(p)
    spec = PreprocessSpec(16, 16, 16, Normalization.IMAGENET)
    a = decode_resize_crop(p, spec, "s")
    b = decode_resize_crop(p, spec, "s")
    assert np.array_equal(a.data, b.data)


def test_corrupt_file_names_sample(tmp_path):
    p = tmp_path / "bad.png"
    p.write_bytes(b"this is not an image")
    with pytest.raises(DecodeError, match="sample-9"):
        decode_resize_crop(p, SPEC224, "sample-9")


def test_missing_file_raises(tmp_path):
    with pytest.raises(DecodeError, match="nope"):
        decode_resize_crop(tmp_path / "nope.png", SPEC224, "nope")


def test_resize_bilinear_identity_and_shape():
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 1, (3, 10, 12)).astype(np.float32)
    assert resize_bilinear(x, 10, 12) is x or np.array_equal(resize_bilinear(x, 10, 12), x)
    y = resize_bilinear(x, 5, 6)
    assert y.shape == (3, 5, 6)
    # constant image stays constant under any resize
    const = np.full((3, 7, 9), 0.25, dtype=np.float32)
    assert np.allclose(resize_bilinear(const, 13, 3), 0.25, atol=1e-6)


def test_presets_cover_the_five_datasets():
    assert set(PRESETS) == {"cbis-ddsm", "chexpert", "ham10000", "pad-ufes-20", "odir"}
    assert PRESETS["cbis-ddsm"].crop_height == 1024
    assert PRESETS["cbis-ddsm"].normalization is Normalization.MEDIAN_MAD
    assert PRESETS["chexpert"].crop_height == 512
    assert PRESETS["chexpert"].normalization is Normalization.IMAGENET
    assert PRESETS["ham10000"].crop_height == 224
    assert PRESETS["odir"].normalization is Normalization.MEDIAN_MAD


def test_identity_hash_sensitivity():
    a = PreprocessSpec(224, 224, 224, Normalization.IMAGENET)
    b = PreprocessSpec(224, 224, 224, Normalization.MEDIAN_MAD)
    c = PreprocessSpec(256, 224, 224, Normalization.IMAGENET)
    hashes = {a.identity_hash(), b.identity_hash(), c.identity_hash()}
    assert len(hashes) == 3
    assert a.identity_hash() == PreprocessSpec(224, 224, 224, Normalization.IMAGENET).identity_hash()
    assert 0 <= a.identity_hash() < 2**64


def test_preprocess_image_full_path(tmp_path):
    arr = np.random.default_rng(2).integers(0, 256, (240, 260, 3), dtype=np.uint8)
    p = tmp_path / "img.png"
    Image.fromarray(arr, mode="RGB").save(p)
    t = preprocess_image(p, PRESETS["ham10000"], "s1")
    assert t.data.shape == (3, 224, 224)
    assert np.all(np.isfinite(t.data))


def test_larger_crop_than_image_errors(tmp_path):
    arr = np.zeros((10, 10), dtype=np.uint8)
    p = tmp_path / "small.png"
    Image.fromarray(arr, mode="L").save(p)
    spec = PreprocessSpec(8, 8, 16, Normalization.IMAGENET)  # wants 16 wide from an 8x8 resize
    with pytest.raises(DecodeError):
        decode_resize_crop(p, spec, "s")
