"""Image decoding and normalization ahead of the encoder.

Every image becomes a float32 ``3 x H x W`` tensor in two steps: bilinear
resize of the short side followed by a center crop, then one of two
intensity normalizations:

* ImageNet constants: per channel ``(x - mean_c) / std_c`` with
  mean (0.485, 0.456, 0.406) and std (0.229, 0.224, 0.225).
* median/MAD: over all pixels of the image jointly,
  ``(x - median) / max(MAD, 1e-6)`` where MAD = median(|x - median|),
  without the 1.4826 consistency factor.

Missing images become all-zero tensors of the spec's shape so a dataset
keeps its row count.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError, DecodeError

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)

MAD_EPSILON = 1e-6


class Normalization(enum.Enum):
    IMAGENET = "imagenet"
    MEDIAN_MAD = "median-mad"


@dataclass(frozen=True)
class PreprocessSpec:
    resize_short_side: int
    crop_height: int
    crop_width: int
    normalization: Normalization

    def __post_init__(self):
        if self.resize_short_side <= 0:
            raise ConfigError("resize_short_side must be positive")
        if self.crop_height > self.resize_short_side and self.crop_width > self.resize_short_side:
            raise ConfigError("crop cannot exceed the post-resize image on both sides")
        if min(self.crop_height, self.crop_width) <= 0:
            raise ConfigError("crop dims must be positive")

    def identity_hash(self) -> int:
        """Stable 64-bit hash of every field that affects pixel values.

        The ImageNet constants are folded in so a future constant change
        invalidates caches keyed on this hash.
        """
        parts = [
            "v1",
            str(self.resize_short_side),
            str(self.crop_height),
            str(self.crop_width),
            self.normalization.value,
        ]
        if self.normalization is Normalization.IMAGENET:
            parts += [f"{v:.6f}" for v in (*IMAGENET_MEAN, *IMAGENET_STD)]
        else:
            parts.append(f"{MAD_EPSILON:.0e}")
        digest = hashlib.sha256("|".join(parts).encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")


# Presets follow the per-dataset geometry and normalization choices the
# pipeline is built around; selectable via --preset on the CLI.
PRESETS: dict[str, PreprocessSpec] = {
    "cbis-ddsm": PreprocessSpec(1024, 1024, 1024, Normalization.MEDIAN_MAD),
    "chexpert": PreprocessSpec(512, 512, 512, Normalization.IMAGENET),
    "ham10000": PreprocessSpec(224, 224, 224, Normalization.IMAGENET),
    "pad-ufes-20": PreprocessSpec(224, 224, 224, Normalization.IMAGENET),
    "odir": PreprocessSpec(224, 224, 224, Normalization.MEDIAN_MAD),
}


@dataclass(frozen=True)
class ImageTensor:
    """float32 CHW pixel tensor plus provenance (sample id, spec hash)."""

    data: np.ndarray
    sample_id: str
    spec_hash: int

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[0] != 3:
            raise ValueError(f"tensor must be 3xHxW, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"tensor for {self.sample_id!r} contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)


def resize_bilinear(chw: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of a CHW float array with half-pixel centers."""
    c, in_h, in_w = chw.shape
    if (in_h, in_w) == (out_h, out_w):
        return chw.astype(np.float32, copy=False)
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (in_w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, in_h - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, in_w - 1)
    y1 = np.clip(y0 + 1, 0, in_h - 1)
    x1 = np.clip(x0 + 1, 0, in_w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)
    wx = np.clip(xs - x0, 0.0, 1.0)
    top = chw[:, y0][:, :, x0] * (1 - wx) + chw[:, y0][:, :, x1] * wx
    bottom = chw[:, y1][:, :, x0] * (1 - wx) + chw[:, y1][:, :, x1] * wx
    out = top * (1 - wy)[None, :, None] + bottom * wy[None, :, None]
    return out.astype(np.float32)


def _decode(path: Path, sample_id: str) -> np.ndarray:
    """Decode PNG/JPEG/TIFF into CHW float32 in [0, 1]; grayscale replicated."""
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode in ("I;16", "I;16B", "I;16L"):
                arr = np.asarray(img, dtype=np.float32) / 65535.0
            elif img.mode == "I":
                arr = np.asarray(img, dtype=np.float32) / 65535.0
            elif img.mode == "F":
                arr = np.asarray(img, dtype=np.float32)
            elif img.mode == "L":
                arr = np.asarray(img, dtype=np.float32) / 255.0
            else:
                arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"sample {sample_id!r}: cannot decode {path}: {exc}") from exc
    if arr.ndim == 2:
        chw = np.repeat(arr[None, :, :], 3, axis=0)
    else:
        chw = arr.transpose(2, 0, 1)
    return np.ascontiguousarray(chw, dtype=np.float32)


def decode_resize_crop(
    image_ref: str | Path,
    spec: PreprocessSpec,
    sample_id: str = "",
    missing: bool = False,
) -> ImageTensor:
    """Decode, resize the short side, and center-crop; values stay in [0, 1].

    A missing image (``missing=True`` or empty ref) yields a zero tensor of
    the spec's shape.
    """
    spec_hash = spec.identity_hash()
    if missing or not str(image_ref):
        zeros = np.zeros((3, spec.crop_height, spec.crop_width), dtype=np.float32)
        return ImageTensor(zeros, sample_id, spec_hash)
    path = Path(image_ref)
    if not path.exists():
        raise DecodeError(f"sample {sample_id!r}: image file not found: {path}")
    chw = _decode(path, sample_id)
    _, h, w = chw.shape
    if h <= w:
        new_h = spec.resize_short_side
        new_w = max(int(round(w * spec.resize_short_side / h)), 1)
    else:
        new_w = spec.resize_short_side
        new_h = max(int(round(h * spec.resize_short_side / w)), 1)
    chw = resize_bilinear(chw, new_h, new_w)
    chw = center_crop(chw, spec.crop_height, spec.crop_width, sample_id)
    return ImageTensor(chw, sample_id, spec_hash)


def center_crop(chw: np.ndarray, out_h: int, out_w: int, sample_id: str = "") -> np.ndarray:
    _, h, w = chw.shape
    if out_h > h or out_w > w:
        raise DecodeError(
            f"sample {sample_id!r}: crop {out_h}x{out_w} exceeds resized image {h}x{w}"
        )
    top = (h - out_h) // 2
    left = (w - out_w) // 2
    return np.ascontiguousarray(chw[:, top : top + out_h, left : left + out_w])


def normalize_imagenet(t: ImageTensor) -> ImageTensor:
    data = (t.data - IMAGENET_MEAN[:, None, None]) / IMAGENET_STD[:, None, None]
    return ImageTensor(data, t.sample_id, t.spec_hash)


def denormalize_imagenet(t: ImageTensor) -> ImageTensor:
    data = t.data * IMAGENET_STD[:, None, None] + IMAGENET_MEAN[:, None, None]
    return ImageTensor(data, t.sample_id, t.spec_hash)


def normalize_median_mad(t: ImageTensor) -> ImageTensor:
    """(x - median) / max(MAD, eps) over all channels and pixels jointly."""
    flat = t.data.astype(np.float64).ravel()
    m = np.median(flat)
    mad = np.median(np.abs(flat - m))
    data = (t.data - m) / max(mad, MAD_EPSILON)
    return ImageTensor(data, t.sample_id, t.spec_hash)


def apply_normalization(t: ImageTensor, spec: PreprocessSpec) -> ImageTensor:
    if spec.normalization is Normalization.IMAGENET:
        return normalize_imagenet(t)
    return normalize_median_mad(t)


def preprocess_image(
    image_ref: str | Path,
    spec: PreprocessSpec,
    sample_id: str = "",
    missing: bool = False,
) -> ImageTensor:
    """decode_resize_crop followed by the spec's normalization."""
    return apply_normalization(decode_resize_crop(image_ref, spec, sample_id, missing), spec)
