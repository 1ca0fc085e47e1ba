"""Geometric depth embedding for the finer stages.

The coarse depth is refined with an edge-aware filter guided by the image,
turned into depth features with fixed 3x3 kernels, added to the image
features and passed through two fixed 3x3 convolutions. The trained
refinement network and learned convolutions are replaced by fixed filters.

Source views have no coarse depth of their own. A source sample warped onto
plane i sits at depth H_i, so it is embedded with the depth feature of the
plane itself (``plane_embedding``). At the true plane the reference and
source depth terms then agree, and the depth feature never biases the
variance cost towards one plane for reasons unrelated to geometry.
"""

from __future__ import annotations

import numpy as np

from .numerics import as_image, conv2d_fixed, to_gray

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]) / 8.0
_LINE_H = np.array([[-1.0, -1.0, -1.0], [2.0, 2.0, 2.0], [-1.0, -1.0, -1.0]]) / 6.0
_LINE_D45 = np.array([[-1.0, -1.0, 2.0], [-1.0, 2.0, -1.0], [2.0, -1.0, -1.0]]) / 6.0
_LAPLACE = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]]) / 4.0
_IDENTITY = np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]])

DEPTH_KERNELS = (
    _IDENTITY,
    _SOBEL_X,
    _SOBEL_X.T,
    _LINE_H,
    _LINE_H.T,
    _LINE_D45,
    _LINE_D45[:, ::-1],
    _LAPLACE,
)

_BINOMIAL = np.outer([1.0, 2.0, 1.0], [1.0, 2.0, 1.0]) / 16.0
FUSE_SMOOTH = _BINOMIAL
# (2I - B) * B = I - (I - B)^2: the sharpening undoes the smoothing to first order
FUSE_SHARPEN = 2.0 * _IDENTITY - _BINOMIAL


def refine_depth(
    depth,
    guide,
    sigma_space: float = 2.0,
    sigma_range: float = 0.1,
    radius: int = 2,
) -> np.ndarray:
    """Joint-bilateral filter of ``depth`` guided by image intensity.

    ``guide`` is an image in [0, 1] at the depth map's resolution. Each output
    pixel is a convex combination of the (2r+1)^2 window, so it stays within
    the window's min/max.
    """
    d = np.asarray(depth, dtype=np.float64)
    g = to_gray(guide)
    if g.shape != d.shape:
        raise ValueError(f"guide {g.shape} and depth {d.shape} differ in size")
    H, W = d.shape
    dp = np.pad(d, radius, mode="edge")
    gp = np.pad(g, radius, mode="edge")
    num = np.zeros_like(d)
    den = np.zeros_like(d)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            ws = np.exp(-(dx * dx + dy * dy) / (2.0 * sigma_space**2))
            win_g = gp[radius + dy : radius + dy + H, radius + dx : radius + dx + W]
            win_d = dp[radius + dy : radius + dy + H, radius + dx : radius + dx + W]
            w = ws * np.exp(-((win_g - g) ** 2) / (2.0 * sigma_range**2))
            num += w * win_d
            den += w
    return num / den


def depth_to_feature(depth, depth_range: tuple[float, float], channels: int = 8) -> np.ndarray:
    """Normalise depth by the global range and apply the fixed 3x3 kernel bank.

    Channels: identity, x/y gradient, four oriented line responses, Laplacian.
    """
    if channels != len(DEPTH_KERNELS):
        raise ValueError(f"depth features have {len(DEPTH_KERNELS)} channels, asked for {channels}")
    lo, hi = depth_range
    norm = as_image((np.asarray(depth, dtype=np.float64) - lo) / (hi - lo))
    return np.concatenate([conv2d_fixed(norm, k) for k in DEPTH_KERNELS], axis=2)


def fuse(img_feat, depth_feat) -> np.ndarray:
    """(image features + depth features), then a smoothing and a sharpening 3x3 conv."""
    a = as_image(img_feat)
    b = as_image(depth_feat)
    if a.shape != b.shape:
        raise ValueError(f"feature shapes differ: {a.shape} vs {b.shape}")
    x = a.astype(np.float64) + b
    return conv2d_fixed(conv2d_fixed(x, FUSE_SMOOTH), FUSE_SHARPEN)


def plane_embedding(h, depth_range: tuple[float, float], channels: int = 8) -> np.ndarray:
    """``fuse(0, depth_to_feature(H_i))`` for every plane map of ``h`` (n, H, W).

    Returns (n, H, W, C) float32. Because ``fuse`` is linear, adding this to a
    warped volume of ``fuse(src, 0)`` gives the source embedded at plane depth.
    """
    h = np.asarray(h, dtype=np.float64)
    out = np.empty(h.shape + (channels,), dtype=np.float32)
    zero = None
    for i, hi in enumerate(h):
        df = depth_to_feature(hi, depth_range, channels)
        if zero is None:
            zero = np.zeros_like(df)
        out[i] = fuse(zero, df)
    return out


def embed(img_feat, depth_feat=None, enabled: bool = True) -> np.ndarray:
    """Stage feature after depth embedding.

    Disabled: the image features unchanged. Enabled without a depth feature
    (source views): the same two-convolution transform with a zero depth term,
    which keeps reference and source features comparable.
    """
    if not enabled:
        return as_image(img_feat)
    if depth_feat is None:
        depth_feat = np.zeros_like(as_image(img_feat))
    return fuse(img_feat, depth_feat)
