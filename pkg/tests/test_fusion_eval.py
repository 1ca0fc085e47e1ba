import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from cascade_mvs import fusion_eval as fe
from cascade_mvs import scene
from cascade_mvs.fusion_eval import PointCloud

seeds = st.integers(0, 2**32 - 1)


@given(seeds, st.integers(1, 300), st.integers(1, 300), st.floats(0.05, 2.0))
def test_metrics_equal_brute_force(seed, n, m, tau):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(-3, 3, (n, 3))
    recon = gt[rng.integers(0, n, m)] + rng.normal(scale=0.3, size=(m, 3))
    rep = fe.evaluate(recon, gt, tau)
    acc, comp, overall, f = oracles.metrics(recon, gt, tau)
    assert (rep.accuracy, rep.completeness, rep.overall, rep.f_score) == (acc, comp, overall, f)
    assert fe.accuracy(recon, gt) == acc and fe.completeness(recon, gt) == comp
    assert fe.f_score(recon, gt, tau) == f


@given(seeds)
def test_uniform_shift(seed):
    rng = np.random.default_rng(seed)
    # lattice spacing 1, so the nearest point after a 0.3 shift is the original
    g = np.stack(np.meshgrid(*[np.arange(6.0)] * 3), -1).reshape(-1, 3)
    axis = np.eye(3)[rng.integers(3)] * rng.choice([-1, 1])
    rep = fe.evaluate(g + 0.3 * axis, g, tau=0.5)
    assert abs(rep.overall - 0.3) <= 1e-9 and rep.f_score == 100.0


def test_f_score_threshold_is_strict():
    gt = np.zeros((1, 3))
    assert fe.f_score(np.array([[1.0, 0.0, 0.0]]), gt, 1.0) == 0.0
    assert fe.f_score(np.array([[0.999, 0.0, 0.0]]), gt, 1.0) == 100.0


def test_dist_cap_and_foreground():
    gt = np.zeros((1, 3))
    recon = np.array([[0.1, 0.0, 0.0], [50.0, 0.0, 0.0]])
    assert fe.accuracy(recon, gt, dist_cap=1.0) == pytest.approx(0.1)
    rep = fe.evaluate(recon, gt, 1.0, foreground=lambda p: p[:, 0] < 10)
    assert rep.n_recon == 1 and rep.accuracy == pytest.approx(0.1)
    with pytest.raises(ValueError):
        fe.evaluate(np.zeros((0, 3)), gt, 1.0)
    with pytest.raises(ValueError):
        fe.evaluate(recon, gt, 0.0)


def test_median_estimate_handles_degenerate_clouds():
    assert fe.median_nn_estimate(np.zeros((500, 3))) == 0.0
    assert fe.median_nn_estimate(np.zeros((1, 3))) == 0.0
    d = fe.nn_distances(np.ones((3, 3)), np.zeros((400, 3)))
    np.testing.assert_allclose(d, np.sqrt(3.0))


def test_voxel_merge_centroids():
    pts = np.array([[0.1, 0.1, 0.1], [0.3, 0.3, 0.3], [1.2, 0.0, 0.0]])
    cols = np.array([[0, 0, 0], [100, 100, 100], [7, 8, 9]])
    out = fe.voxel_merge(PointCloud(pts, cols), 1.0)
    np.testing.assert_allclose(out.points, [[0.2, 0.2, 0.2], [1.2, 0.0, 0.0]])
    np.testing.assert_array_equal(out.colors, [[50, 50, 50], [7, 8, 9]])
    perm = fe.voxel_merge(PointCloud(pts[::-1], cols[::-1]), 1.0)
    np.testing.assert_allclose(perm.points, out.points, atol=1e-15)
    assert fe.voxel_merge(PointCloud(pts), 0.0).points is not None


def test_point_cloud_validation():
    with pytest.raises(ValueError):
        PointCloud(np.array([[np.nan, 0.0, 0.0]]))
    with pytest.raises(ValueError):
        PointCloud(np.zeros((2, 3)), np.zeros((1, 3)))


@pytest.fixture(scope="module")
def rendered():
    spec = scene.canonical_scene(64, 80)
    return spec, scene.render_scene(spec)


def test_filter_keeps_true_depths_and_drops_corrupted(rendered):
    _, views = rendered
    depths = [v.depth.depth.copy() for v in views]
    cams = [v.camera for v in views]
    good = fe.filter_depths(depths, cams)
    v0 = views[0]
    seen = v0.covisible.sum(axis=0) >= 3
    interior = seen.copy()
    for ax in (0, 1):
        interior &= np.roll(seen, 1, ax) & np.roll(seen, -1, ax)
    assert (good[0][interior] > 0).mean() > 0.97
    bad = [d.copy() for d in depths]
    bad[0][10:20, 10:20] += 15.0
    out = fe.filter_depths(bad, cams)
    assert not out[0][10:20, 10:20].any()
    conf = [np.zeros_like(d) for d in depths]
    assert not fe.filter_depths(depths, cams, conf)[0].any()


def test_fused_ground_truth_is_accurate(rendered):
    spec, views = rendered
    cloud = fe.fuse_points([v.depth.depth for v in views], [v.camera for v in views],
                           [v.image for v in views], voxel=0.0)
    assert cloud.colors is not None and len(cloud) == sum(v.valid.sum() for v in views)
    gt = scene.sample_surface(spec, spacing=2.0)
    rep = fe.evaluate(cloud, gt, tau=2.0)
    # samples are 2 apart, so no fused point is further than half a diagonal
    assert rep.accuracy < 1.5 and rep.precision > 0.99
