import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from seismoaug._io import (
    WEIGHTS_MAGIC,
    TruncatedWeightFile,
    WeightFileError,
    load_weights,
    read_f32,
    read_meta,
    save_weights,
    write_f32,
)


def test_f32_roundtrip_keeps_meta(tmp_path):
    arr = np.arange(24, dtype=np.float64).reshape(2, 3, 4) / 7
    path = write_f32(tmp_path / "a.f32", arr, {"kind": "probe", "note": 3})
    back, meta = read_f32(path)
    assert back.dtype == np.float32 and back.shape == (2, 3, 4)
    np.testing.assert_array_equal(back, arr.astype(np.float32))
    assert meta["kind"] == "probe" and meta["shape"] == [2, 3, 4]
    assert read_meta(path)["note"] == 3


def test_f32_payload_is_little_endian_row_major(tmp_path):
    arr = np.array([[1.0, 2.0], [3.0, -0.5]], dtype=np.float32)
    path = write_f32(tmp_path / "b.f32", arr)
    assert path.read_bytes() == arr.astype("<f4").tobytes(order="C")


def test_f32_size_mismatch_is_reported(tmp_path):
    path = write_f32(tmp_path / "c.f32", np.zeros((4, 4)))
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(ValueError, match="expected 16"):
        read_f32(path)


@given(hnp.arrays(np.float32, hnp.array_shapes(min_dims=0, max_dims=3, max_side=5),
                  elements=st.floats(-1e6, 1e6, width=32)))
def test_weights_roundtrip_bit_exact(tmp_path_factory, arr):
    path = tmp_path_factory.mktemp("w") / "w.bin"
    save_weights(path, {"layer.weight": arr, "layer.bias": arr.ravel()[:1]})
    back = load_weights(path)
    assert list(back) == ["layer.weight", "layer.bias"]
    assert back["layer.weight"].shape == arr.shape
    assert back["layer.weight"].tobytes() == arr.tobytes()


def test_weights_index_format(tmp_path):
    path = save_weights(tmp_path / "w.bin", {"a": np.ones((2, 3)), "b": np.zeros(4)})
    text = path.read_bytes().split(b"\nEND\n")[0].decode().splitlines()
    assert text == [WEIGHTS_MAGIC, "a float32 2,3 0", "b float32 4 24"]


def test_empty_weight_file_is_truncated(tmp_path):
    path = tmp_path / "empty.bin"
    path.write_bytes(b"")
    with pytest.raises(TruncatedWeightFile):
        load_weights(path)


def test_unterminated_index_is_truncated(tmp_path):
    path = tmp_path / "cut.bin"
    path.write_bytes(f"{WEIGHTS_MAGIC}\na float32 2 0\n".encode())
    with pytest.raises(TruncatedWeightFile):
        load_weights(path)


def test_short_payload_is_truncated(tmp_path):
    path = save_weights(tmp_path / "w.bin", {"a": np.ones(10)})
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(TruncatedWeightFile, match="tensor a"):
        load_weights(path)


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOT-A-WEIGHT-FILE\nEND\n")
    with pytest.raises(WeightFileError, match="bad magic"):
        load_weights(path)
