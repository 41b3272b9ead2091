import json

import pytest

from embedclass.benchmarks import load_benchmarks
from embedclass.errors import ValidationError


def test_default_table_values():
    table = load_benchmarks()
    assert table.values == {
        "ham10000": 0.609,
        "cbis-ddsm": 0.464,
        "odir": 0.600,
        "pad-ufes-20": 0.487,
        "chexpert": 0.723,
    }


def test_compare_deltas():
    table = load_benchmarks()
    row = table.compare("ham10000", 0.9586)
    assert row["benchmark_auc"] == 0.609
    assert row["delta"] == pytest.approx(0.3496)
    row = table.compare("CBIS-DDSM", 0.464)
    assert row["delta"] == pytest.approx(0.0)
    row = table.compare("pad-ufes-20", 0.9145)
    assert row["delta"] == pytest.approx(0.4275)


def test_unknown_dataset_is_an_error():
    table = load_benchmarks()
    with pytest.raises(ValidationError, match="mystery"):
        table.compare("mystery", 0.9)


def test_alternate_constants_file(tmp_path):
    p = tmp_path / "alt.json"
    p.write_text(json.dumps({"version": 2, "benchmarks": {"toy": 0.5}}))
    table = load_benchmarks(p)
    assert table.version == 2
    assert table.compare("toy", 0.75)["delta"] == pytest.approx(0.25)


def test_out_of_range_benchmark_rejected(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"version": 1, "benchmarks": {"toy": 1.5}}))
    with pytest.raises(ValidationError):
        load_benchmarks(p)
