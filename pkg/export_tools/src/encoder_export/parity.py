"""Numerical parity between a source torch model and its exported graph.

The exported side runs through the consumer pipeline's public encoder API
(the same code paths production embeddings take), the source side through
torch in eval mode; both see identical float32 tensors. PASS means the
max-abs embedding deviation over seeded random tensors plus the bundled
test images stays within 1e-4.
"""

from __future__ import annotations

import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from embedclass.encoder import EncoderSpec, load_encoder
from embedclass.preprocess import PRESETS, ImageTensor, preprocess_image

from .testimages import generate_test_images

PARITY_TOLERANCE = 1e-4


@dataclass(frozen=True)
class ParityReport:
    encoder_id: str
    n_random: int
    n_images: int
    max_abs_deviation: float
    random_deviation: float
    image_deviation: float
    tolerance: float = PARITY_TOLERANCE

    @property
    def passed(self) -> bool:
        return self.max_abs_deviation <= self.tolerance


def _torch_embeddings(model: torch.nn.Module, batch: np.ndarray) -> np.ndarray:
    with torch.no_grad():
        out = model(torch.from_numpy(batch))
    if hasattr(out, "image_embeds"):
        out = out.image_embeds
    return out.numpy().astype(np.float32)


def _graph_embeddings(encoder, batch: np.ndarray) -> np.ndarray:
    tensors = [ImageTensor(arr, f"parity-{i}", 0) for i, arr in enumerate(batch)]
    embeddings = encoder.embed_batch(tensors, batch_size=len(tensors))
    return np.stack([e.vector for e in embeddings])


def _random_batch(rng: np.random.Generator, n: int, side: int) -> np.ndarray:
    # scale matches normalized pixels (ImageNet normalization spans roughly +-2.2)
    return rng.normal(0.0, 1.0, size=(n, 3, side, side)).astype(np.float32)


def parity_check(
    graph_path: str | Path,
    source_model: torch.nn.Module,
    encoder_id: str,
    input_side: int | None,
    n_samples: int = 16,
    seed: int = 0,
    image_dir: str | Path | None = None,
) -> ParityReport:
    """Compare the exported graph against the torch model.

    ``input_side`` fixes the random-tensor geometry (None picks small
    dynamic sizes suitable for global-pooling backbones). Bundled test
    images go through the production 224 preprocessing preset.
    """
    source_model = source_model.eval()
    encoder = load_encoder(EncoderSpec(encoder_id, graph_path))
    rng = np.random.default_rng(seed)

    sides = [input_side] * n_samples if input_side else [64, 96, 128, 64] * (n_samples // 4 + 1)
    random_dev = 0.0
    for i in range(n_samples):
        batch = _random_batch(rng, 1, sides[i])
        dev = np.max(np.abs(_torch_embeddings(source_model, batch) - _graph_embeddings(encoder, batch)))
        random_dev = max(random_dev, float(dev))

    if image_dir is None:
        tmp = tempfile.TemporaryDirectory(prefix="parity_images_")
        image_paths = generate_test_images(tmp.name)
    else:
        image_paths = generate_test_images(image_dir)
    preset = PRESETS["ham10000"]  # 224 + ImageNet normalization
    tensors = [preprocess_image(p, preset, p.stem) for p in image_paths]
    batch = np.stack([t.data for t in tensors])
    image_dev = float(
        np.max(np.abs(_torch_embeddings(source_model, batch) - _graph_embeddings(encoder, batch)))
    )

    return ParityReport(
        encoder_id=encoder_id,
        n_random=n_samples,
        n_images=len(image_paths),
        max_abs_deviation=max(random_dev, image_dev),
        random_deviation=random_dev,
        image_deviation=image_dev,
    )
