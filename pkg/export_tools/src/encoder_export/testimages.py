"""Deterministic bundled test images for parity checks.

No photographs ship with the tool; instead a fixed-seed set of photo-like
PNGs (smooth gradients, structured patterns, textured noise) is generated
on demand. Identical bytes every time, so parity runs are reproducible.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

BUNDLED_SEED = 20240917


def _gradient(h, w, rng):
    ys = np.linspace(0, 1, h)[:, None]
    xs = np.linspace(0, 1, w)[None, :]
    angle = rng.uniform(0, 2 * np.pi)
    base = np.cos(angle) * xs + np.sin(angle) * ys
    channels = [base * rng.uniform(0.4, 1.0) + rng.uniform(0, 0.3) for _ in range(3)]
    return np.stack(channels, axis=-1)


def _rings(h, w, rng):
    ys = np.linspace(-1, 1, h)[:, None]
    xs = np.linspace(-1, 1, w)[None, :]
    radius = np.sqrt(xs**2 + ys**2)
    freq = rng.uniform(4, 12)
    base = 0.5 + 0.5 * np.sin(freq * np.pi * radius)
    return np.stack([base, base * 0.8 + 0.1, 1.0 - base], axis=-1)


def _texture(h, w, rng):
    noise = rng.uniform(size=(h // 8 + 1, w // 8 + 1, 3))
    big = np.kron(noise, np.ones((8, 8, 1)))[:h, :w]
    fine = rng.normal(0, 0.05, size=(h, w, 3))
    return np.clip(big + fine, 0, 1)


def generate_test_images(out_dir: str | Path, size: int = 256, count: int = 6) -> list[Path]:
    """Write `count` deterministic RGB PNGs into out_dir; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(BUNDLED_SEED)
    makers = [_gradient, _rings, _texture]
    paths = []
    for i in range(count):
        arr = makers[i % len(makers)](size, size, rng)
        img = (np.clip(arr, 0, 1) * 255).astype(np.uint8)
        path = out_dir / f"parity_{i:02d}.png"
        Image.fromarray(img, mode="RGB").save(path)
        paths.append(path)
    return paths
