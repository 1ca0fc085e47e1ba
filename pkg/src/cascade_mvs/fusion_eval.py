"""Depth-map filtering and fusion, and point-cloud accuracy / completeness / F-score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import camera as cam_mod
from . import kernels
from .camera import Camera
from .numerics import as_image, sample_many

# dense cell table limit for the nearest-neighbour grid
MAX_CELLS = 1 << 22


@dataclass
class PointCloud:
    points: np.ndarray  # (N, 3) float64
    colors: np.ndarray | None = None  # (N, 3) uint8

    def __post_init__(self):
        self.points = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64).reshape(-1, 3))
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point coordinates must be finite")
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
            if len(self.colors) != len(self.points):
                raise ValueError("colors and points differ in length")

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, keep) -> "PointCloud":
        keep = np.asarray(keep)
        return PointCloud(self.points[keep], None if self.colors is None else self.colors[keep])


@dataclass
class EvalReport:
    accuracy: float
    completeness: float
    overall: float
    f_score: float
    tau: float
    precision: float
    recall: float
    n_recon: int
    n_gt: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)

    def to_text(self) -> str:
        return (
            f"accuracy     {self.accuracy:.6f}\n"
            f"completeness {self.completeness:.6f}\n"
            f"overall      {self.overall:.6f}\n"
            f"f_score      {self.f_score:.4f}  (tau={self.tau:g}, precision={self.precision:.4f}, "
            f"recall={self.recall:.4f})\n"
            f"points       recon={self.n_recon} gt={self.n_gt}\n"
        )


# ---------------------------------------------------------------- filtering


def _consistency(d_ref, cam_ref: Camera, d_src, cam_src: Camera, reproj_max, rel_depth_max):
    """Reference pixels whose depth agrees with ``d_src`` by forward-backward reprojection."""
    H, W = d_ref.shape
    xs, ys = cam_mod.pixel_grid(H, W)
    pos = d_ref > 0
    d = np.where(pos, d_ref, 1.0)
    u, v, z = cam_mod.reproject_raw(cam_ref, cam_src, xs, ys, d)
    ok = pos & (z > 0)
    u = np.where(ok, u, -1.0)
    src = np.where(d_src > 0, d_src, 0.0)
    ds, valid = sample_many(src, u, v)
    # a neighbour with no depth contaminates the bilinear value: require all
    # contributing samples to be valid
    cover, _ = sample_many((d_src > 0).astype(np.float32), u, v)
    ds = ds[..., 0]
    ok &= valid & (cover[..., 0] >= 1.0 - 1e-9) & (ds > 0)
    ds = np.where(ok, ds, 1.0)
    x2, y2, z2 = cam_mod.reproject_raw(cam_src, cam_ref, u, v, ds)
    ok &= z2 > 0
    err = np.hypot(x2 - xs, y2 - ys)
    rel = np.abs(z2 - d) / d
    return ok & (err <= reproj_max) & (rel <= rel_depth_max)


def filter_depths(
    depths,
    cameras,
    confidences=None,
    conf_min: float = 0.5,
    reproj_max: float = 1.0,
    rel_depth_max: float = 0.01,
    min_consistent: int = 2,
) -> list[np.ndarray]:
    """Geometric-consistency filter; returns depth maps with rejected pixels set to 0.

    A pixel survives when its confidence is at least ``conf_min`` and at least
    ``min_consistent`` other views agree with it. Missing confidences count as 1.
    """
    depths = [np.asarray(d, dtype=np.float64) for d in depths]
    if len(depths) < 2:
        raise ValueError("need at least 2 views to filter")
    if len(cameras) != len(depths):
        raise ValueError("one camera per depth map required")
    if confidences is None:
        confidences = [None] * len(depths)
    out = []
    for i, (d, cam) in enumerate(zip(depths, cameras)):
        conf = np.ones_like(d) if confidences[i] is None else np.asarray(confidences[i], float)
        votes = np.zeros(d.shape, dtype=np.int64)
        for j, (dj, cj) in enumerate(zip(depths, cameras)):
            if j != i:
                votes += _consistency(d, cam, dj, cj, reproj_max, rel_depth_max)
        keep = (d > 0) & (conf >= conf_min) & (votes >= min_consistent)
        out.append(np.where(keep, d, 0.0))
    return out


# ---------------------------------------------------------------- fusion


def depth_to_points(depth, cam: Camera, image=None) -> PointCloud:
    """Backproject every pixel with positive depth."""
    depth = np.asarray(depth, dtype=np.float64)
    ys, xs = np.nonzero(depth > 0)
    pts = cam_mod.backproject(cam, xs.astype(float), ys.astype(float), depth[ys, xs]) if len(xs) else np.zeros((0, 3))
    colors = None
    if image is not None:
        img = as_image(image)
        if img.shape[2] == 1:
            img = np.repeat(img, 3, axis=2)
        colors = np.clip(np.rint(img[ys, xs, :3] * 255.0), 0, 255).astype(np.uint8)
    return PointCloud(pts, colors)


def voxel_merge(cloud: PointCloud, voxel: float) -> PointCloud:
    """Replace the points falling in each voxel of edge ``voxel`` by their centroid.

    Output is ordered by voxel key, so it does not depend on input order
    beyond floating-point summation. ``voxel <= 0`` returns the cloud unchanged.
    """
    if voxel <= 0 or len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.points / voxel).astype(np.int64)
    _, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    pts = np.stack([np.bincount(inv, cloud.points[:, a]) for a in range(3)], axis=1) / counts[:, None]
    colors = None
    if cloud.colors is not None:
        c = np.stack([np.bincount(inv, cloud.colors[:, a].astype(np.float64)) for a in range(3)], axis=1)
        colors = np.clip(np.rint(c / counts[:, None]), 0, 255).astype(np.uint8)
    return PointCloud(pts, colors)


def fuse_points(depths, cameras, images=None, voxel: float = 0.5) -> PointCloud:
    """Backproject filtered depth maps of all views and merge duplicates per voxel."""
    if images is None:
        images = [None] * len(depths)
    parts = [depth_to_points(d, c, im) for d, c, im in zip(depths, cameras, images)]
    pts = np.concatenate([p.points for p in parts]) if parts else np.zeros((0, 3))
    colors = None
    if parts and all(p.colors is not None for p in parts):
        colors = np.concatenate([p.colors for p in parts])
    return voxel_merge(PointCloud(pts, colors), voxel)


# ---------------------------------------------------------------- nearest neighbours


def median_nn_estimate(points: np.ndarray, samples: int = 256, seed: int = 0) -> float:
    """Median distance from a fixed random subsample to the remaining points."""
    n = len(points)
    if n < 2:
        return 0.0
    if n <= samples + 1:
        d2 = ((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1)
        np.fill_diagonal(d2, np.inf)
        return float(np.sqrt(np.median(d2.min(axis=1))))
    idx = np.random.default_rng(seed).choice(n, size=samples, replace=False)
    rest = np.delete(points, idx, axis=0)
    extent = float((rest.max(axis=0) - rest.min(axis=0)).max())
    if extent == 0:
        return 0.0
    coarse = extent / max(1.0, len(rest) ** (1.0 / 3.0))
    d = NearestNeighborGrid(rest, cell=coarse).query(points[idx])
    return float(np.median(d))


class NearestNeighborGrid:
    """Exact nearest-neighbour distances through a uniform grid.

    Cell size is ``max(tau, median spacing)`` unless given, enlarged if the
    dense cell table would exceed ``MAX_CELLS``. Queries search expanding
    shells of cells until no unvisited cell can hold a closer point, so the
    result equals brute force bit for bit.
    """

    def __init__(self, points, cell: float | None = None, tau: float | None = None):
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        if len(pts) == 0:
            raise ValueError("cannot index an empty point set")
        if cell is None:
            cell = max(tau or 0.0, median_nn_estimate(pts))
        lo = pts.min(axis=0)
        extent = pts.max(axis=0) - lo
        if not cell > 0:
            cell = max(float(extent.max()), 1.0)
        while True:
            dims = np.floor(extent / cell).astype(np.int64) + 1
            if int(np.prod(dims)) <= MAX_CELLS:
                break
            cell *= 2.0
        self.h = float(cell)
        self.origin = np.ascontiguousarray(lo)
        self.dims = np.ascontiguousarray(dims, dtype=np.int64)
        ijk = np.floor((pts - lo) / self.h).astype(np.int64)
        ijk = np.minimum(ijk, dims - 1)
        lin = (ijk[:, 2] * dims[1] + ijk[:, 1]) * dims[0] + ijk[:, 0]
        order = np.argsort(lin, kind="stable")
        self.points = np.ascontiguousarray(pts[order])
        counts = np.bincount(lin, minlength=int(np.prod(dims)))
        self.cell_start = np.ascontiguousarray(np.concatenate([[0], np.cumsum(counts)]).astype(np.int64))

    def query(self, queries) -> np.ndarray:
        q = np.ascontiguousarray(np.asarray(queries, dtype=np.float64).reshape(-1, 3))
        if len(q) == 0:
            return np.zeros(0)
        return kernels.grid_nearest(self.points, self.cell_start, self.dims, self.origin, self.h, q)


def nn_distances(src, dst, tau: float | None = None) -> np.ndarray:
    """Distance from every point of ``src`` to its nearest point of ``dst``."""
    return NearestNeighborGrid(_points(dst), tau=tau).query(_points(src))


# ---------------------------------------------------------------- metrics


def _points(c) -> np.ndarray:
    return c.points if isinstance(c, PointCloud) else np.asarray(c, dtype=np.float64).reshape(-1, 3)


def _nonempty(*clouds):
    for c in clouds:
        if len(_points(c)) == 0:
            raise ValueError("point cloud is empty")


def _capped_mean(d: np.ndarray, dist_cap: float | None) -> float:
    if dist_cap is not None:
        d = d[d <= dist_cap]
        if len(d) == 0:
            raise ValueError("every distance exceeds dist_cap")
    return float(np.mean(d))


def accuracy(recon, gt, dist_cap: float | None = None) -> float:
    """Mean distance from reconstructed points to the ground truth."""
    _nonempty(recon, gt)
    return _capped_mean(nn_distances(recon, gt), dist_cap)


def completeness(recon, gt, dist_cap: float | None = None) -> float:
    """Mean distance from ground-truth points to the reconstruction."""
    return accuracy(gt, recon, dist_cap)


def _f(d_rg: np.ndarray, d_gr: np.ndarray, tau: float):
    p = float(np.mean(d_rg < tau))
    r = float(np.mean(d_gr < tau))
    f = 0.0 if p + r == 0 else 200.0 * p * r / (p + r)
    return f, p, r


def f_score(recon, gt, tau: float) -> float:
    """Harmonic mean of precision and recall at ``tau``, in percent."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    _nonempty(recon, gt)
    return _f(nn_distances(recon, gt, tau), nn_distances(gt, recon, tau), tau)[0]


def evaluate(recon, gt, tau: float, dist_cap: float | None = None, foreground=None) -> EvalReport:
    """All metrics from one pair of nearest-neighbour passes.

    ``foreground`` is an optional predicate on (N, 3) points; points of either
    cloud for which it is False are dropped before scoring.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    r, g = _points(recon), _points(gt)
    if foreground is not None:
        r = r[np.asarray(foreground(r), bool)]
        g = g[np.asarray(foreground(g), bool)]
    _nonempty(r, g)
    d_rg = nn_distances(r, g, tau)
    d_gr = nn_distances(g, r, tau)
    acc = _capped_mean(d_rg, dist_cap)
    comp = _capped_mean(d_gr, dist_cap)
    f, p, rc = _f(d_rg, d_gr, tau)
    return EvalReport(acc, comp, (acc + comp) / 2.0, f, float(tau), p, rc, len(r), len(g))
