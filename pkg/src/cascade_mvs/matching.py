"""Plane-sweep matching: features, warping, variance cost, smoothing, probabilities.

The learned feature pyramid and 3-D regulariser of a trained network are
replaced by fixed filters here; the array layouts are the same so a learned
module could be swapped in behind these functions.
"""

from __future__ import annotations

import numpy as np

from . import camera as cam_mod
from .camera import Camera
from .numerics import (
    as_image,
    conv2d_fixed,
    downsample,
    gaussian_kernel1d,
    sample_many,
    softmax_over_planes,
    to_gray,
)

STAGE_SCALES = {1: 0.25, 2: 0.5, 3: 1.0}
FEATURE_CHANNELS = (
    "intensity",
    "grad_x",
    "grad_y",
    "local_mean",
    "local_std",
    "edge_d45",
    "edge_d135",
    "edge_cross",
)

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]) / 8.0
_BOX3 = np.full((3, 3), 1.0 / 9.0)
_EDGE_D45 = np.array([[0.0, 1.0, 2.0], [-1.0, 0.0, 1.0], [-2.0, -1.0, 0.0]]) / 8.0
_EDGE_D135 = np.array([[-2.0, -1.0, 0.0], [-1.0, 0.0, 1.0], [0.0, 1.0, 2.0]]) / 8.0
_EDGE_CROSS = np.array([[1.0, 0.0, -1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 1.0]]) / 4.0


def _standardize(f: np.ndarray) -> np.ndarray:
    mean = f.mean(axis=(0, 1), keepdims=True)
    std = f.std(axis=(0, 1), keepdims=True)
    centred = f - mean
    safe = np.where(std > 1e-8, std, 1.0)
    return np.where(std > 1e-8, centred / safe, 0.0)


def filter_bank(gray: np.ndarray) -> np.ndarray:
    """Eight raw (unstandardised) feature channels of a grayscale image."""
    g = as_image(gray)
    mean = conv2d_fixed(g, _BOX3).astype(np.float64)
    sq = conv2d_fixed(g.astype(np.float64) ** 2, _BOX3).astype(np.float64)
    chans = [
        g.astype(np.float64),
        conv2d_fixed(g, _SOBEL_X),
        conv2d_fixed(g, _SOBEL_X.T),
        mean,
        np.sqrt(np.maximum(sq - mean**2, 0.0)),
        conv2d_fixed(g, _EDGE_D45),
        conv2d_fixed(g, _EDGE_D135),
        conv2d_fixed(g, _EDGE_CROSS),
    ]
    return np.concatenate([c.astype(np.float64) for c in chans], axis=2)


def extract_features(img, stage: int = 3) -> np.ndarray:
    """8-channel feature map of ``img`` at the stage resolution, float32.

    ``img`` is the full-resolution image; it is anti-alias decimated to the
    stage scale (1/4, 1/2, 1 for stages 1, 2, 3) before filtering. Each
    channel is standardised over the image.
    """
    img = as_image(img)
    small = downsample(img, STAGE_SCALES[stage])
    return features_at_resolution(small)


def features_at_resolution(img) -> np.ndarray:
    gray = to_gray(img)
    return _standardize(filter_bank(gray)).astype(np.float32)


def warp_features(src_feat, ref: Camera, src: Camera, h) -> tuple[np.ndarray, np.ndarray]:
    """Sample source features at every reference pixel for every hypothesis plane.

    Returns ``(volume (n, H, W, C) float32, mask (n, H, W) bool)``; samples that
    fall outside the source image or behind the source camera are zero and
    masked out.
    """
    src_feat = as_image(src_feat)
    h = np.asarray(h, dtype=np.float64)
    n, H, W = h.shape
    C = src_feat.shape[2]
    xs, ys = cam_mod.pixel_grid(H, W)
    A, b = cam_mod.relative_transform(ref, src)
    vol = np.zeros((n, H, W, C), dtype=np.float32)
    mask = np.zeros((n, H, W), dtype=bool)
    for i in range(n):
        u, v, z = cam_mod.reproject_raw(ref, src, xs, ys, h[i], A, b)
        front = z > 0
        u = np.where(front, u, -1.0)
        vals, valid = sample_many(src_feat, u, v)
        valid &= front
        vals[~valid] = 0.0
        vol[i] = vals
        mask[i] = valid
    return vol, mask


def variance_cost(ref_feat, warped, sentinel_scale: float = 10.0) -> np.ndarray:
    """Channel-averaged variance of features over the reference and valid source views.

    Pixels seen by fewer than two views (reference included) get a sentinel of
    ``sentinel_scale`` times the 99th percentile of valid costs.
    """
    if len(warped) == 0:
        raise ValueError("need at least one source view")
    ref = as_image(ref_feat).astype(np.float64)[None]  # (1, H, W, C)
    n = warped[0][0].shape[0]
    total = np.broadcast_to(ref, (n,) + ref.shape[1:]).copy()
    count = np.ones((n,) + ref.shape[1:3], dtype=np.float64)
    for vol, mask in warped:
        total += np.where(mask[..., None], vol.astype(np.float64), 0.0)
        count += mask
    mean = total / count[..., None]
    sq = (ref - mean) ** 2
    for vol, mask in warped:
        sq += np.where(mask[..., None], (vol.astype(np.float64) - mean) ** 2, 0.0)
    cost = (sq / count[..., None]).mean(axis=-1)
    ok = count >= 2
    if ok.any():
        sentinel = sentinel_scale * np.percentile(cost[ok], 99)
        if not sentinel > 0:
            sentinel = sentinel_scale
    else:
        sentinel = 1.0
    cost = np.where(ok, cost, sentinel)
    return cost.astype(np.float32)


_SPATIAL = np.outer(gaussian_kernel1d(1.0, 1), gaussian_kernel1d(1.0, 1))


def regularize(cost) -> np.ndarray:
    """3x3 Gaussian (sigma 1) per plane, then [1/4, 1/2, 1/4] along the plane axis."""
    c = np.asarray(cost, dtype=np.float32)
    n = c.shape[0]
    spatial = np.moveaxis(conv2d_fixed(np.moveaxis(c, 0, -1), _SPATIAL), -1, 0).astype(np.float64)
    p = np.concatenate([spatial[:1], spatial, spatial[-1:]], axis=0)
    out = 0.25 * p[:n] + 0.5 * p[1 : n + 1] + 0.25 * p[2 : n + 2]
    return out.astype(np.float32)


def cost_to_probability(cost, temperature: float) -> np.ndarray:
    """Softmax over planes of ``-cost / temperature``."""
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    return softmax_over_planes(-np.asarray(cost, dtype=np.float64) / temperature)


def photometric_confidence(p, depth, h) -> np.ndarray:
    """Probability mass on the four planes closest to the regressed depth."""
    p = np.asarray(p, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if p.shape != h.shape or p.shape[1:] != np.shape(depth):
        raise ValueError("shape mismatch")
    n = p.shape[0]
    if n <= 4:
        return np.clip(p.sum(axis=0), 0.0, 1.0)
    dist = np.abs(h - np.asarray(depth, dtype=np.float64)[None])
    idx = np.argsort(dist, axis=0, kind="stable")[:4]
    return np.clip(np.take_along_axis(p, idx, axis=0).sum(axis=0), 0.0, 1.0)
