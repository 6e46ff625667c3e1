import numpy as np
import pytest

from panodepth import io
from panodepth.maps import DepthMap, DisparityMap
from panodepth.sphere import PointCloud


@pytest.mark.parametrize("byteorder", ["little", "big"])
def test_pfm_round_trip(tmp_path, byteorder):
    a = np.random.default_rng(0).normal(size=(5, 7)).astype(np.float32).astype(np.float64)
    path = tmp_path / "a.pfm"
    io.write_pfm(path, a, byteorder=byteorder)
    np.testing.assert_array_equal(io.read_pfm(path), a)


def test_pfm_color_round_trip(tmp_path):
    a = np.arange(24, dtype=np.float64).reshape(2, 4, 3)
    io.write_pfm(tmp_path / "c.pfm", a)
    np.testing.assert_array_equal(io.read_pfm(tmp_path / "c.pfm"), a)


def test_pfm_rows_stored_bottom_up(tmp_path):
    io.write_pfm(tmp_path / "r.pfm", np.array([[1.0, 2.0], [3.0, 4.0]]))
    raw = (tmp_path / "r.pfm").read_bytes()
    body = np.frombuffer(raw[-16:], "<f4")
    assert body.tolist() == [3.0, 4.0, 1.0, 2.0]


def test_pfm_rejects_garbage(tmp_path):
    path = tmp_path / "bad.pfm"
    path.write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
    with pytest.raises(ValueError):
        io.read_pfm(path)
    path.write_bytes(b"Pf\n2 2\n-1.0\n\x00\x00\x00\x00")
    with pytest.raises(ValueError, match="expected 4 floats"):
        io.read_pfm(path)


def test_depth_and_disparity_sentinels(tmp_path):
    mask = np.array([[True, False]])
    io.write_depth_pfm(tmp_path / "d.pfm", DepthMap(np.array([[2.0, 5.0]]), mask))
    d = io.read_depth_pfm(tmp_path / "d.pfm")
    assert d.mask.tolist() == [[True, False]] and d.values[0, 0] == 2.0
    io.write_disparity_pfm(tmp_path / "q.pfm", DisparityMap(np.array([[0.0, 5.0]]), mask))
    q = io.read_disparity_pfm(tmp_path / "q.pfm")
    # zero is a legal disparity; invalid pixels travel as NaN
    assert q.mask.tolist() == [[True, False]] and q.values[0, 0] == 0.0


def test_png16_round_trip(tmp_path):
    raw = np.array([[0, 1, 512], [65535, 40000, 7]], np.uint16)
    io.write_png16(tmp_path / "f.png", raw)
    out = io.read_png16(tmp_path / "f.png")
    assert out.dtype == np.uint16
    np.testing.assert_array_equal(out, raw)


def test_png16_rejects_other_dtypes(tmp_path):
    with pytest.raises(TypeError):
        io.write_png16(tmp_path / "f.png", np.zeros((2, 2), np.int32))


def test_png16_rejects_8bit(tmp_path):
    io.write_mask_png(tmp_path / "m.png", np.ones((2, 2), bool))
    with pytest.raises(ValueError, match="16-bit"):
        io.read_png16(tmp_path / "m.png")


@pytest.mark.parametrize("colored", [False, True])
def test_ply_round_trip(tmp_path, colored):
    rng = np.random.default_rng(1)
    points = rng.normal(size=(20, 3))
    colors = rng.integers(0, 256, (20, 3)).astype(np.uint8) if colored else None
    io.write_ply(tmp_path / "c.ply", PointCloud(points, colors))
    back = io.read_ply(tmp_path / "c.ply")
    np.testing.assert_allclose(back.points, points, rtol=1e-6, atol=1e-6)
    if colored:
        np.testing.assert_array_equal(back.colors, colors)
    else:
        assert back.colors is None


def test_ply_header(tmp_path):
    io.write_ply(tmp_path / "c.ply", PointCloud(np.zeros((3, 3))))
    lines = (tmp_path / "c.ply").read_text().splitlines()
    assert lines[:3] == ["ply", "format ascii 1.0", "element vertex 3"]
    assert lines[6] == "end_header" and len(lines) == 10


def test_stem_index(tmp_path):
    for name in ["b.pfm", "a.pfm", "c.txt"]:
        (tmp_path / name).write_text("")
    assert list(io.stem_index(tmp_path, ".pfm")) == ["a", "b"]
