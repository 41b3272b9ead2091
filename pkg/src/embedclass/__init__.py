"""Training-free image classification on frozen-encoder embeddings.

Pipeline: manifest ingest -> dataset-specific preprocessing -> frozen ONNX
encoder -> cached embeddings -> cross-validated linear classifiers
(logistic regression, linear SVM, kernel SVM) -> metric reports with
benchmark comparison.
"""

from .ingest import Dataset, LabelSchema, Sample, SplitSpec, TaskKind
from .preprocess import PRESETS, ImageTensor, Normalization, PreprocessSpec
from .encoder import Embedding, Encoder, EncoderSpec, load_encoder
from .cache import EmbeddingMatrix, read_cache, write_cache
from .linear_models import LinearModel, ScoreMatrix, SvmLoss, train_linear_svm, train_logreg
from .kernel_svm import KernelKind, KernelModel, KernelSpec, kernel_predict, train_kernel_svm
from .model_select import ClassifierFamily, HyperGrid, grid_search, kfold_indices
from .metrics import MetricsReport, accuracy, full_report, precision_recall_f1, roc_auc
from .benchmarks import BenchmarkTable, load_benchmarks
from .pipeline import RunConfig, RunRecord, load_config, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "BenchmarkTable",
    "ClassifierFamily",
    "Dataset",
    "Embedding",
    "EmbeddingMatrix",
    "Encoder",
    "EncoderSpec",
    "HyperGrid",
    "ImageTensor",
    "KernelKind",
    "KernelModel",
    "KernelSpec",
    "LabelSchema",
    "LinearModel",
    "MetricsReport",
    "Normalization",
    "PRESETS",
    "PreprocessSpec",
    "RunConfig",
    "RunRecord",
    "Sample",
    "ScoreMatrix",
    "SplitSpec",
    "SvmLoss",
    "TaskKind",
    "accuracy",
    "full_report",
    "grid_search",
    "kernel_predict",
    "kfold_indices",
    "load_benchmarks",
    "load_config",
    "load_encoder",
    "precision_recall_f1",
    "read_cache",
    "roc_auc",
    "run_pipeline",
    "train_kernel_svm",
    "train_linear_svm",
    "train_logreg",
    "write_cache",
]
