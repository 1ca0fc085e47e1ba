import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from cascade_mvs import formats
from cascade_mvs.camera import Camera, Intrinsics, look_at
from cascade_mvs.fusion_eval import PointCloud
from cascade_mvs.formats import FormatError, PFMError, ViewPairs

f32 = st.floats(width=32, allow_nan=True, allow_infinity=True)


@given(hnp.arrays(np.float32, hnp.array_shapes(min_dims=2, max_dims=2, max_side=9), elements=f32))
def test_pfm_roundtrip_bit_exact(tmp_path_factory, a):
    p = tmp_path_factory.mktemp("pfm") / "a.pfm"
    formats.write_pfm(p, a)
    b = formats.read_pfm(p)
    assert b.dtype == np.float32 and b.shape == a.shape
    assert a.tobytes() == b.tobytes()


def test_pfm_colour_and_big_endian(tmp_path):
    a = np.random.default_rng(0).random((3, 4, 3)).astype(np.float32)
    formats.write_pfm(tmp_path / "c.pfm", a)
    assert formats.read_pfm(tmp_path / "c.pfm").tobytes() == a.tobytes()
    g = np.arange(6, dtype=np.float32).reshape(2, 3)
    raw = b"Pf\n3 2\n1.0\n" + g[::-1].astype(">f4").tobytes()
    (tmp_path / "be.pfm").write_bytes(raw)
    np.testing.assert_array_equal(formats.read_pfm(tmp_path / "be.pfm"), g)


def test_pfm_header_layout(tmp_path):
    formats.write_pfm(tmp_path / "h.pfm", np.zeros((3, 4), np.float32))
    data = (tmp_path / "h.pfm").read_bytes()
    assert data.startswith(b"Pf\n4 3\n-1.0\n") and len(data) == 12 + 48


@pytest.mark.parametrize("raw", [b"P6\n1 1\n-1\n", b"Pf\n2 2\n-1.0\n" + b"\0" * 8, b"Pf\nx 2\n-1.0\n", b""])
def test_pfm_errors(tmp_path, raw):
    (tmp_path / "bad.pfm").write_bytes(raw)
    with pytest.raises(PFMError) as exc:
        formats.read_pfm(tmp_path / "bad.pfm")
    assert "bad.pfm" in str(exc.value)
    with pytest.raises(PFMError):
        formats.write_pfm(tmp_path / "x.pfm", np.zeros((2, 2, 2)))


@given(st.integers(0, 2**32 - 1))
def test_cam_roundtrip(tmp_path_factory, seed):
    rng = np.random.default_rng(seed)
    intr = Intrinsics(*rng.uniform(100, 2000, 2), *rng.uniform(0, 500, 2))
    cam = Camera(intr, look_at(rng.normal(size=3) * 100, rng.normal(size=3) * 100 + [0, 0, 900]),
                 float(rng.uniform(1, 500)), float(rng.uniform(600, 1000)))
    p = tmp_path_factory.mktemp("cam") / "c.txt"
    formats.write_cam(p, cam)
    back = formats.read_cam(p)
    np.testing.assert_allclose(back.camera.extrinsics.matrix(), cam.extrinsics.matrix(), atol=1e-6)
    np.testing.assert_allclose(back.camera.intrinsics.K, cam.intrinsics.K, atol=1e-6)
    assert abs(back.camera.depth_min - cam.depth_min) < 1e-6
    assert abs(back.camera.depth_max - cam.depth_max) < 1e-6
    assert back.depth_count == 256


def test_cam_short_depth_line(tmp_path):
    txt = ("extrinsic\n1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n\n"
           "intrinsic\n100 0 50\n0 100 40\n0 0 1\n\n425 2.5\n")
    (tmp_path / "c.txt").write_text(txt)
    c = formats.read_cam(tmp_path / "c.txt")
    assert c.depth_count == 192 and c.camera.depth_max == pytest.approx(425 + 2.5 * 192)
    (tmp_path / "d.txt").write_text(txt.replace("425 2.5", "425 2.5 128"))
    assert formats.read_cam(tmp_path / "d.txt").camera.depth_max == pytest.approx(425 + 320)
    (tmp_path / "e.txt").write_text(txt.replace("425 2.5", "425"))
    with pytest.raises(FormatError):
        formats.read_cam(tmp_path / "e.txt")
    (tmp_path / "f.txt").write_text(txt.replace("intrinsic", "intrinsics"))
    with pytest.raises(FormatError):
        formats.read_cam(tmp_path / "f.txt")


def test_pair_roundtrip_exact(tmp_path):
    pairs = ViewPairs([(0, [(1, 0.1), (2, 1234.5678901234)]), (1, []), (2, [(0, 1e-300)])])
    formats.write_pair(tmp_path / "pair.txt", pairs)
    back = formats.read_pair(tmp_path / "pair.txt")
    assert back.entries == pairs.entries
    assert back.empty_views == [1] and back.sources(0) == [1, 2]
    with pytest.raises(KeyError):
        back.sources(7)


@pytest.mark.parametrize("text", ["2\n0\n1 1 0.5\n", "1\n0\n1 1 x\n", "1\n0\n0\n9\n", "-1\n"])
def test_pair_errors(tmp_path, text):
    (tmp_path / "p.txt").write_text(text)
    with pytest.raises(FormatError):
        formats.read_pair(tmp_path / "p.txt")


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_ply_binary_and_ascii_agree(tmp_path_factory, seed, colours):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 50))
    pts = (rng.normal(size=(n, 3)) * 100).astype(np.float32).astype(np.float64)
    cloud = PointCloud(pts, rng.integers(0, 256, (n, 3)) if colours else None)
    d = tmp_path_factory.mktemp("ply")
    formats.write_ply(d / "b.ply", cloud, binary=True)
    formats.write_ply(d / "a.ply", cloud, binary=False)
    b = formats.read_ply(d / "b.ply")
    a = formats.read_ply(d / "a.ply")
    np.testing.assert_array_equal(a.points, b.points)
    np.testing.assert_array_equal(b.points, pts)
    if colours:
        np.testing.assert_array_equal(a.colors, b.colors)
        np.testing.assert_array_equal(b.colors, cloud.colors)
    else:
        assert a.colors is None and b.colors is None


def test_ply_big_endian_and_errors(tmp_path):
    head = b"ply\nformat binary_big_endian 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n"
    (tmp_path / "be.ply").write_bytes(head + struct.pack(">3f", 1.0, 2.0, 3.0))
    np.testing.assert_array_equal(formats.read_ply(tmp_path / "be.ply").points, [[1.0, 2.0, 3.0]])
    (tmp_path / "short.ply").write_bytes(head + b"\0\0")
    with pytest.raises(FormatError):
        formats.read_ply(tmp_path / "short.ply")
    with pytest.raises(ValueError):
        formats.write_ply(tmp_path / "empty.ply", PointCloud(np.zeros((0, 3))))
    (tmp_path / "nope.ply").write_bytes(b"hello\n")
    with pytest.raises(FormatError):
        formats.read_ply(tmp_path / "nope.ply")


def test_image_roundtrip_and_dataset(tmp_path):
    img = np.random.default_rng(0).random((5, 6, 3)).astype(np.float32)
    formats.write_image(tmp_path / "i.png", img)
    back = formats.read_image(tmp_path / "i.png")
    assert back.shape == (5, 6, 3) and np.abs(back - img).max() <= 0.5 / 255 + 1e-7
    formats.write_image(tmp_path / "g.png", img[..., :1])
    assert formats.read_image(tmp_path / "g.png").shape == (5, 6, 1)
    ds = formats.Dataset(tmp_path)
    assert ds.cam_path(3).name == "00000003_cam.txt"
    assert ds.load_gt_depth(0) is None
