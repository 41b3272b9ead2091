import numpy as np
import pytest

from embedclass.ingest import LabelSchema, TaskKind
from embedclass.kernel_svm import KernelKind, KernelSpec, kernel_predict, train_kernel_svm
from embedclass.linear_models import SvmLoss, predict_scores, train_linear_svm, train_logreg
from embedclass.serialize import ModelFileError, load_model, save_model

BINARY = LabelSchema(TaskKind.BINARY, ("neg", "pos"))


def _data(seed=0, n=30):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 4))
    y = (X[:, 0] + 0.4 * rng.normal(size=n) > 0).astype(float)
    y[:2] = [0.0, 1.0]
    return X, np.column_stack([1 - y, y])


def test_linear_model_round_trip(tmp_path):
    X, Y = _data()
    m = train_logreg(X, Y, BINARY, C=2.0)
    path = tmp_path / "m.bin"
    save_model(m, path)
    back = load_model(path)
    assert back.kind is m.kind
    assert back.C == m.C
    assert back.schema == m.schema
    assert np.array_equal(back.weights, m.weights)
    assert np.array_equal(back.intercepts, m.intercepts)
    probe = np.random.default_rng(1).normal(size=(7, 4))
    assert np.array_equal(predict_scores(back, probe).scores, predict_scores(m, probe).scores)


def test_svm_model_keeps_loss(tmp_path):
    X, Y = _data(3)
    m = train_linear_svm(X, Y, BINARY, C=1.0, loss=SvmLoss.HINGE, seed=1)
    save_model(m, tmp_path / "s.bin")
    back = load_model(tmp_path / "s.bin")
    assert back.loss is SvmLoss.HINGE


def test_kernel_model_round_trip(tmp_path):
    X, Y = _data(5, n=40)
    m = train_kernel_svm(X, Y, BINARY, C=5.0, spec=KernelSpec(KernelKind.RBF, "scale"))
    path = tmp_path / "k.bin"
    save_model(m, path)
    back = load_model(path)
    assert back.kind is KernelKind.RBF
    assert back.gamma == pytest.approx(m.gamma)
    assert np.array_equal(back.support_vectors, m.support_vectors)
    assert np.array_equal(back.dual_coefs, m.dual_coefs)
    probe = np.random.default_rng(2).normal(size=(9, 4))
    assert np.allclose(
        kernel_predict(back, probe).scores, kernel_predict(m, probe).scores, atol=0
    )


def test_corruption_detected(tmp_path):
    X, Y = _data(7)
    save_model(train_logreg(X, Y, BINARY, 1.0), tmp_path / "c.bin")
    blob = bytearray((tmp_path / "c.bin").read_bytes())
    blob[len(blob) // 2] ^= 1
    (tmp_path / "bad.bin").write_bytes(bytes(blob))
    with pytest.raises(ModelFileError, match="checksum"):
        load_model(tmp_path / "bad.bin")


def test_not_a_model_file(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"garbage here")
    with pytest.raises(ModelFileError):
        load_model(p)
