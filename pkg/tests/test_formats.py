import io
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from goalienet.ppm import ImageFormatError, read_ppm, write_ppm
from goalienet.tensor.serialize import CorruptDataError, load_tensors, read_tensor, save_tensors, write_tensor

float32_arrays = arrays(np.float32, st.lists(st.integers(0, 4), min_size=0, max_size=4).map(tuple),
                        elements=st.floats(width=32, allow_nan=False))


class TestTensorRecords:
    def test_layout(self):
        buf = io.BytesIO()
        write_tensor(buf, "w", np.array([[1.0, 2.0, 3.0]], np.float32))
        expected = (struct.pack("<I", 1) + b"w" + struct.pack("<III", 2, 1, 3)
                    + struct.pack("<3f", 1.0, 2.0, 3.0))
        assert buf.getvalue() == expected

    @given(float32_arrays, st.text(max_size=12))
    def test_round_trip(self, arr, name):
        buf = io.BytesIO()
        write_tensor(buf, name, arr)
        buf.seek(0)
        got_name, got = read_tensor(buf)
        assert got_name == name and got.shape == arr.shape and got.dtype == np.float32
        assert got.tobytes() == arr.tobytes()

    def test_special_values_bit_exact(self):
        arr = np.array([np.nan, -0.0, np.inf, -np.inf, 1e-45], np.float32)
        buf = io.BytesIO()
        write_tensor(buf, "x", arr)
        buf.seek(0)
        assert read_tensor(buf)[1].tobytes() == arr.tobytes()

    def test_truncated(self):
        buf = io.BytesIO()
        write_tensor(buf, "abc", np.ones((2, 2), np.float32))
        data = buf.getvalue()
        for cut in range(len(data)):
            with pytest.raises(CorruptDataError):
                read_tensor(io.BytesIO(data[:cut]))

    def test_file_helpers(self, tmp_path):
        items = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "b": np.float32(2.5).reshape(())}
        save_tensors(tmp_path / "t.bin", items)
        back = load_tensors(tmp_path / "t.bin")
        assert list(back) == ["a", "b"] and np.array_equal(back["a"], items["a"]) and back["b"].shape == ()


class TestPPM:
    @given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(3))))
    def test_round_trip(self, tmp_path_factory, img):
        path = tmp_path_factory.mktemp("ppm") / "x.ppm"
        write_ppm(path, img)
        assert np.array_equal(read_ppm(path), img)

    def test_header_comments(self, tmp_path):
        path = tmp_path / "c.ppm"
        path.write_bytes(b"P6\n# made by hand\n2 1\n255\n" + bytes([1, 2, 3, 4, 5, 6]))
        assert read_ppm(path).tolist() == [[[1, 2, 3], [4, 5, 6]]]

    @pytest.mark.parametrize("data", [b"P3\n1 1\n255\n1 2 3", b"P6\n2 2\n255\n\x00\x00", b"P6\n1 1\n65535\n\x00" * 2,
                                      b"P6\n1 x\n255\n\x00\x00\x00", b"P6\n"])
    def test_bad_files(self, tmp_path, data):
        path = tmp_path / "bad.ppm"
        path.write_bytes(data)
        with pytest.raises(ImageFormatError):
            read_ppm(path)

    def test_bad_array(self, tmp_path):
        with pytest.raises(ImageFormatError):
            write_ppm(tmp_path / "x.ppm", np.zeros((2, 2), np.uint8))
