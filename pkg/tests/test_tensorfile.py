import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robsel.errors import FileFormatError
from robsel.tensorfile import read_tensor, write_tensor


def roundtrip(tmp_path, arr):
    path = tmp_path / "t.ptns"
    write_tensor(path, arr)
    back = read_tensor(path)
    assert back.dtype == arr.dtype
    assert back.shape == arr.shape
    assert back.tobytes() == np.ascontiguousarray(arr).tobytes()
    return path


def test_float32_roundtrip(tmp_path):
    arr = np.arange(24, dtype=np.float32).reshape(2, 3, 4) / 7.0
    roundtrip(tmp_path, arr)


def test_uint8_roundtrip(tmp_path):
    arr = np.arange(256, dtype=np.uint8).reshape(16, 16)
    roundtrip(tmp_path, arr)


def test_scalar_and_empty_shapes(tmp_path):
    roundtrip(tmp_path, np.float32(3.5).reshape(()))
    roundtrip(tmp_path, np.zeros((0, 4), dtype=np.uint8))


def test_non_contiguous_input(tmp_path):
    arr = np.arange(36, dtype=np.float32).reshape(6, 6).T
    path = tmp_path / "t.ptns"
    write_tensor(path, arr)
    assert np.array_equal(read_tensor(path), arr)


def test_rejects_unsupported_dtype(tmp_path):
    with pytest.raises(FileFormatError):
        write_tensor(tmp_path / "t.ptns", np.zeros(3, dtype=np.float64))


def test_rejects_bad_magic(tmp_path):
    path = tmp_path / "t.ptns"
    write_tensor(path, np.zeros(3, dtype=np.float32))
    data = bytearray(path.read_bytes())
    data[:4] = b"XXXX"
    path.write_bytes(bytes(data))
    with pytest.raises(FileFormatError, match="magic"):
        read_tensor(path)


def test_rejects_bad_version_and_dtype_code(tmp_path):
    path = tmp_path / "t.ptns"
    write_tensor(path, np.zeros(3, dtype=np.float32))
    raw = path.read_bytes()
    path.write_bytes(raw[:4] + bytes([9]) + raw[5:])
    with pytest.raises(FileFormatError, match="version"):
        read_tensor(path)
    path.write_bytes(raw[:5] + bytes([7]) + raw[6:])
    with pytest.raises(FileFormatError, match="dtype"):
        read_tensor(path)


def test_rejects_truncated_payload(tmp_path):
    path = tmp_path / "t.ptns"
    write_tensor(path, np.zeros((2, 2), dtype=np.float32))
    raw = path.read_bytes()
    path.write_bytes(raw[:-3])
    with pytest.raises(FileFormatError, match="payload"):
        read_tensor(path)
    path.write_bytes(raw[:5])
    with pytest.raises(FileFormatError):
        read_tensor(path)


def test_missing_file(tmp_path):
    with pytest.raises(FileFormatError):
        read_tensor(tmp_path / "absent.ptns")


@settings(max_examples=60, deadline=None)
@given(
    data=st.data(),
    dtype=st.sampled_from(["float32", "uint8"]),
    rank=st.integers(min_value=0, max_value=4),
)
def test_fuzzed_roundtrip_bitwise(tmp_path, data, dtype, rank):
    shape = tuple(data.draw(st.integers(min_value=0, max_value=5)) for _ in range(rank))
    count = int(np.prod(shape)) if shape else 1
    if dtype == "float32":
        values = data.draw(
            st.lists(
                st.floats(width=32, allow_nan=False, allow_infinity=False),
                min_size=count, max_size=count,
            )
        )
        arr = np.array(values, dtype=np.float32).reshape(shape)
    else:
        values = data.draw(
            st.lists(st.integers(min_value=0, max_value=255), min_size=count, max_size=count)
        )
        arr = np.array(values, dtype=np.uint8).reshape(shape)
    roundtrip(tmp_path, arr)
