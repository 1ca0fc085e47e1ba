import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cascade_mvs import gde
from cascade_mvs.numerics import conv2d_fixed
from helpers import textured_image

seeds = st.integers(0, 2**32 - 1)


@given(seeds)
def test_refined_depth_stays_within_window(seed):
    rng = np.random.default_rng(seed)
    d = rng.uniform(400, 650, size=(7, 9))
    g = rng.random((7, 9, 3))
    out = gde.refine_depth(d, g, radius=1)
    pad = np.pad(d, 1, mode="edge")
    for y in range(7):
        for x in range(9):
            win = pad[y : y + 3, x : x + 3]
            assert win.min() - 1e-9 <= out[y, x] <= win.max() + 1e-9


def test_refine_keeps_constant_depth_and_respects_edges():
    g = np.zeros((6, 8))
    g[:, 4:] = 1.0
    d = np.where(np.arange(8) < 4, 500.0, 600.0)[None].repeat(6, 0)
    out = gde.refine_depth(d, g, sigma_range=0.05)
    np.testing.assert_allclose(out, d, atol=1e-6)
    np.testing.assert_allclose(gde.refine_depth(np.full((5, 5), 3.0), np.random.rand(5, 5)), 3.0)
    with pytest.raises(ValueError):
        gde.refine_depth(np.ones((3, 3)), np.ones((4, 4)))


def test_depth_features_of_constant_depth():
    f = gde.depth_to_feature(np.full((5, 6), 528.0), (400.0, 656.0))
    assert f.shape == (5, 6, 8)
    np.testing.assert_allclose(f[..., 0], 0.5, atol=1e-6)
    np.testing.assert_allclose(f[..., 1:], 0.0, atol=1e-6)
    with pytest.raises(ValueError):
        gde.depth_to_feature(np.ones((2, 2)), (0.0, 2.0), channels=4)


@given(seeds)
def test_fuse_is_linear(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(6, 7, 8)).astype(np.float32)
    b = rng.normal(size=(6, 7, 8)).astype(np.float32)
    z = np.zeros_like(a)
    np.testing.assert_allclose(gde.fuse(a, b), gde.fuse(a, z) + gde.fuse(z, b), atol=1e-5)


def test_plane_embedding_matches_per_plane_fuse():
    rng = np.random.default_rng(0)
    h = np.stack([np.full((4, 5), v) + rng.random((4, 5)) for v in (500.0, 510.0)])
    emb = gde.plane_embedding(h, (400.0, 656.0))
    for i in range(2):
        ref = gde.fuse(np.zeros((4, 5, 8)), gde.depth_to_feature(h[i], (400.0, 656.0)))
        np.testing.assert_allclose(emb[i], ref, atol=1e-6)


def test_sharpen_after_smooth_is_close_to_identity():
    img = textured_image(np.random.default_rng(1), 16, 16, 1)
    once = conv2d_fixed(conv2d_fixed(img, gde.FUSE_SMOOTH), gde.FUSE_SHARPEN)
    err_fused = np.abs(once - img)[2:-2, 2:-2].mean()
    err_smooth = np.abs(conv2d_fixed(img, gde.FUSE_SMOOTH) - img)[2:-2, 2:-2].mean()
    assert err_fused < err_smooth


def test_embed_modes():
    f = np.random.default_rng(2).normal(size=(4, 4, 8)).astype(np.float32)
    np.testing.assert_array_equal(gde.embed(f, enabled=False), f)
    np.testing.assert_allclose(gde.embed(f), gde.fuse(f, np.zeros_like(f)))
