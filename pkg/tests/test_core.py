import json
import os

import numpy as np
import pytest

from gewdiff.core import (
    HsiCube,
    NumericError,
    RasterFormatError,
    Rng,
    load_cube,
    load_segmentation,
    read_container,
    save_cube,
    save_segmentation,
    standard_normal_field,
    write_container,
)


def _write_raw(path, header, payload):
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode() + b"\n" + payload)


def test_scale_factor_division(tmp_path):
    path = tmp_path / "dn.cube"
    values = np.full(2 * 2 * 3, 5000.0, dtype="<f4")
    _write_raw(path, {"height": 2, "width": 2, "bands": 3, "dtype": "f32le", "scale_factor": 10000, "layout": "bsq"}, values.tobytes())
    cube = load_cube(path)
    assert cube.shape == (3, 2, 2)
    assert np.all(cube.data == 0.5)


def test_payload_length_mismatch(tmp_path):
    path = tmp_path / "short.cube"
    values = np.zeros(4 * 4 * 241, dtype="<f4")
    _write_raw(path, {"height": 4, "width": 4, "bands": 242, "dtype": "f32le", "scale_factor": 1, "layout": "bsq"}, values.tobytes())
    with pytest.raises(RasterFormatError, match="payload length mismatch"):
        load_cube(path)


@pytest.mark.parametrize(
    "header_line",
    [b"not json\n", b'{"height": 2}\n', b'{"height": 2, "width": 2, "bands": 1, "dtype": "f16"}\n', b"[1, 2]\n"],
)
def test_malformed_header(tmp_path, header_line):
    path = tmp_path / "bad.cube"
    path.write_bytes(header_line + b"\0" * 16)
    with pytest.raises(RasterFormatError):
        load_cube(path)


def test_non_finite_payload(tmp_path):
    path = tmp_path / "nan.cube"
    values = np.array([0.0, np.nan, 1.0, 2.0], dtype="<f4")
    _write_raw(path, {"height": 2, "width": 2, "bands": 1, "dtype": "f32le", "scale_factor": 1, "layout": "bsq"}, values.tobytes())
    with pytest.raises(RasterFormatError, match="non-finite"):
        load_cube(path)


@pytest.mark.parametrize("shape", [(16, 8, 8), (3, 2, 2), (1, 5, 7)])
def test_save_load_bit_identical(tmp_path, shape):
    data = np.random.default_rng(7).random(shape).astype(np.float32).astype(np.float64)
    save_cube(HsiCube(data), tmp_path / "c.cube")
    back = load_cube(tmp_path / "c.cube")
    assert back.data.tobytes() == data.tobytes()


def test_payload_is_bsq_little_endian(tmp_path):
    data = np.arange(2 * 3 * 4, dtype=np.float64).reshape(2, 3, 4)
    save_cube(data, tmp_path / "c.cube")
    raw = (tmp_path / "c.cube").read_bytes()
    header, payload = raw.split(b"\n", 1)
    assert json.loads(header) == {"height": 3, "width": 4, "bands": 2, "dtype": "f32le", "scale_factor": 1.0, "layout": "bsq"}
    assert np.array_equal(np.frombuffer(payload, "<f4"), np.arange(24, dtype=np.float32))


def test_save_to_read_only_location(tmp_path):
    ro = tmp_path / "ro"
    ro.mkdir()
    os.chmod(ro, 0o500)
    try:
        if os.access(ro, os.W_OK):
            pytest.skip("running with privileges that ignore directory permissions")
        with pytest.raises(OSError):
            save_cube(np.zeros((1, 2, 2)), ro / "c.cube")
    finally:
        os.chmod(ro, 0o700)


def test_save_missing_directory_is_io_error(tmp_path):
    with pytest.raises(OSError):
        save_cube(np.zeros((1, 2, 2)), tmp_path / "missing" / "c.cube")


def test_zero_band_cube_rejected(tmp_path):
    with pytest.raises(ValueError):
        save_cube(np.zeros((0, 4, 4)), tmp_path / "c.cube")
    assert not (tmp_path / "c.cube").exists()


def test_cube_rejects_non_finite():
    with pytest.raises(NumericError):
        HsiCube(np.array([[[np.inf]]]))


def test_cube_is_read_only():
    cube = HsiCube(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        cube.data[0, 0, 0] = 1.0


def test_segmentation_roundtrip(tmp_path):
    labels = np.random.default_rng(1).integers(0, 1000, size=(9, 5))
    save_segmentation(labels, tmp_path / "s.seg")
    assert np.array_equal(load_segmentation(tmp_path / "s.seg"), labels)
    header = json.loads((tmp_path / "s.seg").read_bytes().split(b"\n", 1)[0])
    assert header["dtype"] == "u32le" and header["bands"] == 1


def test_container_roundtrip(tmp_path):
    arrays = {"a": np.random.default_rng(2).standard_normal((3, 4)), "b": np.arange(5.0)}
    write_container(tmp_path / "x.bin", {"levels": 2}, arrays)
    meta, back = read_container(tmp_path / "x.bin")
    assert meta == {"levels": 2}
    for key in arrays:
        assert back[key].tobytes() == arrays[key].tobytes()


def test_rng_determinism():
    a = standard_normal_field(Rng(42), (5, 7))
    b = standard_normal_field(Rng(42), (5, 7))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, standard_normal_field(Rng(43), (5, 7)))


def test_rng_moments():
    draws = standard_normal_field(Rng(2024), 10**6)
    assert abs(draws.mean()) < 0.01
    assert abs(draws.var() - 1.0) < 0.02


def test_rng_empty_shape():
    assert standard_normal_field(Rng(0), 0).shape == (0,)
    assert standard_normal_field(Rng(0), (3, 0)).size == 0


def test_rng_spawn_independent_and_reproducible():
    kids = Rng(5).spawn(2)
    again = Rng(5).spawn(2)
    assert np.array_equal(kids[0].normal(10), again[0].normal(10))
    assert not np.array_equal(Rng(5).spawn(2)[0].normal(10), Rng(5).spawn(2)[1].normal(10))


def test_rng_seed_range():
    with pytest.raises(ValueError):
        Rng(-1)
    with pytest.raises(ValueError):
        Rng(2**64)
    Rng(2**64 - 1)
