"""Exporters for the frozen image encoders consumed by the embedclass pipeline."""

from .export import ExportError, export_clip_visual, export_resnet50_penultimate
from .manifest import ExportManifest, file_hash
from .parity import PARITY_TOLERANCE, ParityReport, parity_check

__version__ = "0.1.0"

__all__ = [
    "ExportError",
    "ExportManifest",
    "PARITY_TOLERANCE",
    "ParityReport",
    "export_clip_visual",
    "export_resnet50_penultimate",
    "file_hash",
    "parity_check",
]
