"""Shared fixtures: stub encoder graphs and synthetic image datasets."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from embedclass.onnx_format import Node, OnnxModel, ValueInfo, save_model


def build_identity_stub(path: Path, height: int = 2, width: int = 4) -> Path:
    """Stub encoder: channel 0 of an h x w input, flattened (h*w dims)."""
    nodes = [
        Node("Gather", ("pixel_values", "chan0"), ("g0",), {"axis": 1}),
        Node("Flatten", ("g0",), ("embedding",), {"axis": 1}),
    ]
    model = OnnxModel(
        nodes=nodes,
        initializers={"chan0": np.asarray(0, dtype=np.int64)},
        inputs=[ValueInfo("pixel_values", 1, ("batch", 3, height, width))],
        outputs=[ValueInfo("embedding", 1, ("batch", height * width))],
    )
    save_model(model, path)
    return path


def write_blob_dataset(
    root: Path,
    n: int = 120,
    seed: int = 42,
    separation: float = 4.0,
    sigma: float = 0.075,
) -> dict:
    """Two-class Gaussian blob images (2 x 4 grayscale PNGs) plus manifest.

    Per-pixel class means sit ``separation * sigma`` apart, so a linear
    model on the 8 flattened pixels separates the classes essentially
    perfectly.
    """
    rng = np.random.default_rng(seed)
    img_dir = root / "imgs"
    img_dir.mkdir(parents=True, exist_ok=True)
    half_gap = 0.5 * separation * sigma
    rows = ["id,image_path,neg,pos"]
    for i in range(n):
        positive = i % 2
        mean = 0.5 + half_gap if positive else 0.5 - half_gap
        values = np.clip(rng.normal(mean, sigma, (2, 4)), 0.0, 1.0)
        img = Image.fromarray((values * 255).astype(np.uint8), mode="L")
        rel = f"imgs/{i:04d}.png"
        img.save(root / rel)
        rows.append(f"img{i:04d},{rel},{1 - positive},{positive}")
    manifest = root / "manifest.csv"
    manifest.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return {"manifest": manifest, "n": n}


def write_run_config(
    root: Path,
    name: str = "toy-blobs",
    seed: int = 1234,
    family: str = "logreg",
    encoder_graph: str = "stub.onnx",
    extra_data: str = "",
    c_values: str = "[0.1, 1.0, 10.0, 100.0]",
) -> Path:
    config = root / "run.toml"
    config.write_text(
        f"""
[run]
name = "{name}"
seed = {seed}
out_dir = "out"
cache_dir = "cache"

[data]
manifest = "manifest.csv"
task = "binary"
classes = ["neg", "pos"]
train_fraction = 0.8
{extra_data}

[preprocess]
resize_short_side = 2
crop = [2, 4]
normalization = "imagenet"

[encoder]
id = "identity-8"
graph = "{encoder_graph}"

[classifier]
family = "{family}"
c_values = {c_values}
""",
        encoding="utf-8",
    )
    return config


@pytest.fixture
def blob_run(tmp_path: Path) -> dict:
    """Complete runnable fixture: blob dataset + stub encoder + config."""
    build_identity_stub(tmp_path / "stub.onnx")
    info = write_blob_dataset(tmp_path, n=120)
    config = write_run_config(tmp_path)
    return {"root": tmp_path, "config": config, **info}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    rows = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" in nodeid and getattr(rep, "when", "call") == "call":
                rows.append((nodeid.split("::")[-1], status == "passed"))
    if rows:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, ok in sorted(rows):
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")
