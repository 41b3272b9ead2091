import struct

import numpy as np
import pytest

from embedclass.cache import (
    CacheChecksumError,
    CacheFormatError,
    CacheVersionError,
    EmbeddingMatrix,
    read_cache,
    write_cache,
)
from embedclass.errors import ValidationError


def matrix(n=2, d=3, seed=0, encoder="enc-x", phash=0xDEADBEEF):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(n, d)).astype(np.float32)
    return EmbeddingMatrix(data, tuple(f"s{i}" for i in range(n)), encoder, phash)


def test_payload_size_is_exact(tmp_path):
    m = matrix(2, 3)
    path = tmp_path / "c.embd"
    write_cache(m, path)
    blob = path.read_bytes()
    # magic(4) + version(2) + n,d(8) + enc len/bytes + hash(8) + ids + payload + checksum(8)
    meta = 4 + len("enc-x".encode()) + 8 + sum(4 + len(f"s{i}".encode()) for i in range(2))
    assert len(blob) == 4 + 2 + 8 + meta + 2 * 3 * 4 + 8


def test_round_trip_bit_exact(tmp_path):
    m = matrix(17, 9, seed=3, encoder="clip-vit-b32", phash=123456789)
    path = tmp_path / "c.embd"
    checksum = write_cache(m, path)
    back = read_cache(path)
    assert np.array_equal(back.data, m.data)
    assert back.data.tobytes() == m.data.tobytes()
    assert back.sample_ids == m.sample_ids
    assert back.encoder_id == "clip-vit-b32"
    assert back.preprocess_hash == 123456789
    stored = struct.unpack("<Q", path.read_bytes()[-8:])[0]
    assert stored == checksum


def test_empty_cache_valid(tmp_path):
    m = EmbeddingMatrix(np.zeros((0, 5), dtype=np.float32), (), "enc", 1)
    path = tmp_path / "empty.embd"
    write_cache(m, path)
    back = read_cache(path)
    assert back.n_rows == 0
    assert back.dim == 5


def test_truncation_detected(tmp_path):
    path = tmp_path / "c.embd"
    write_cache(matrix(8, 16), path)
    blob = path.read_bytes()
    (tmp_path / "t.embd").write_bytes(blob[: len(blob) - 21])
    with pytest.raises(CacheChecksumError):
        read_cache(tmp_path / "t.embd")


def test_bitflip_detected(tmp_path):
    path = tmp_path / "c.embd"
    write_cache(matrix(4, 4), path)
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    (tmp_path / "f.embd").write_bytes(bytes(blob))
    with pytest.raises(CacheChecksumError, match="checksum"):
        read_cache(tmp_path / "f.embd")


def test_wrong_magic(tmp_path):
    p = tmp_path / "m.embd"
    p.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(CacheFormatError):
        read_cache(p)


def test_wrong_version(tmp_path):
    path = tmp_path / "c.embd"
    write_cache(matrix(), path)
    blob = bytearray(path.read_bytes())
    blob[4:6] = struct.pack("<H", 9)
    (tmp_path / "v.embd").write_bytes(bytes(blob))
    with pytest.raises(CacheVersionError):
        read_cache(tmp_path / "v.embd")


def test_invariant_violations_refused():
    with pytest.raises(ValidationError):
        EmbeddingMatrix(np.zeros((2, 3), dtype=np.float32), ("a",), "e", 0)
    with pytest.raises(ValidationError):
        EmbeddingMatrix(np.zeros((2, 3), dtype=np.float32), ("a", "a"), "e", 0)
    with pytest.raises(ValidationError):
        EmbeddingMatrix(np.zeros(6, dtype=np.float32), ("a",), "e", 0)


def test_different_data_fails_checksum_comparison(tmp_path):
    # same ids/encoder/hash, different payload -> different checksums
    m1 = matrix(5, 8, seed=1)
    m2 = matrix(5, 8, seed=2)
    c1 = write_cache(m1, tmp_path / "a.embd")
    c2 = write_cache(m2, tmp_path / "b.embd")
    assert c1 != c2


def test_rows_for_reorders_and_validates(tmp_path):
    m = matrix(4, 2)
    rows = m.rows_for(["s2", "s0"])
    assert np.array_equal(rows[0], m.data[2])
    assert np.array_equal(rows[1], m.data[0])
    with pytest.raises(ValidationError, match="sX"):
        m.rows_for(["sX"])


@pytest.mark.parametrize("n,d", [(1, 1), (3, 7), (64, 129), (200, 50)])
def test_random_round_trips(tmp_path, n, d):
    m = matrix(n, d, seed=n * 1000 + d)
    write_cache(m, tmp_path / "r.embd")
    back = read_cache(tmp_path / "r.embd")
    assert back.data.tobytes() == m.data.tobytes()
    assert back.sample_ids == m.sample_ids
