"""Image and volume primitives shared by the rest of the package.

Conventions: images are ``(H, W, C)`` float32 arrays, volumes are
``(D, H, W)`` or ``(D, H, W, C)`` arrays with the plane axis first. Pixel
centres sit at integer coordinates. Storage is float32; sums and variances
are accumulated in float64.
"""

from __future__ import annotations

import numpy as np

from . import kernels


def as_image(a) -> np.ndarray:
    """Return ``a`` as a contiguous (H, W, C) float32 image."""
    a = np.asarray(a, dtype=np.float32)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise ValueError(f"expected an (H, W) or (H, W, C) array, got shape {a.shape}")
    return np.ascontiguousarray(a)


def bilinear_sample(img, x: float, y: float) -> tuple[np.ndarray, bool]:
    """Sample one location. Out-of-bounds gives a zero vector and ``False``."""
    img = as_image(img)
    vals, valid = kernels.gather_bilinear(img, np.array([x], float), np.array([y], float))
    return vals[0], bool(valid[0])


def sample_many(img, xs, ys) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``bilinear_sample``; ``xs``/``ys`` may have any common shape.

    Returns values of shape ``xs.shape + (C,)`` (float64) and a boolean mask.
    """
    img = as_image(img)
    xs = np.asarray(xs, dtype=np.float64)
    shape = xs.shape
    flat_x = np.ascontiguousarray(xs.ravel())
    flat_y = np.ascontiguousarray(np.asarray(ys, dtype=np.float64).ravel())
    vals, valid = kernels.gather_bilinear(img, flat_x, flat_y)
    return vals.reshape(shape + (img.shape[2],)), valid.reshape(shape)


def sample_many_grad(img, xs, ys) -> tuple[np.ndarray, np.ndarray]:
    """d(sample)/dx and d(sample)/dy at each location, same layout as ``sample_many``."""
    img = as_image(img)
    xs = np.asarray(xs, dtype=np.float64)
    shape = xs.shape
    gx, gy = kernels.gather_bilinear_grad(
        img,
        np.ascontiguousarray(xs.ravel()),
        np.ascontiguousarray(np.asarray(ys, dtype=np.float64).ravel()),
    )
    C = img.shape[2]
    return gx.reshape(shape + (C,)), gy.reshape(shape + (C,))


def _pad_edge(a: np.ndarray, r: int) -> np.ndarray:
    return np.pad(a, ((r, r), (r, r), (0, 0)), mode="edge")


def conv2d_fixed(img, kernel) -> np.ndarray:
    """Per-channel 2-D correlation with a fixed odd-sized kernel.

    Borders use replicate padding; output has the input's spatial size.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
        raise ValueError("kernel must be square")
    k = kernel.shape[0]
    if k % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {k}")
    img = as_image(img)
    r = k // 2
    H, W = img.shape[:2]
    padded = _pad_edge(img.astype(np.float64), r)
    out = np.zeros(img.shape, dtype=np.float64)
    for i in range(k):
        for j in range(k):
            w = kernel[i, j]
            if w != 0.0:
                out += w * padded[i : i + H, j : j + W]
    return out.astype(np.float32)


def softmax_over_planes(v) -> np.ndarray:
    """Exp-normalise along axis 0 (the plane axis), max-subtracted, in float64."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] < 1:
        raise ValueError("volume needs at least one plane")
    e = np.exp(v - v.max(axis=0, keepdims=True))
    return e / e.sum(axis=0, keepdims=True)


def resize_bilinear(img, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resize with corner-aligned coordinates.

    Output pixel (i, j) samples the input at
    ``(i * (H-1)/(new_h-1), j * (W-1)/(new_w-1))``.
    """
    if new_h < 1 or new_w < 1:
        raise ValueError("target size must be at least 1x1")
    img = as_image(img)
    H, W = img.shape[:2]
    ys = np.zeros(new_h) if new_h == 1 else np.arange(new_h) * ((H - 1) / (new_h - 1))
    xs = np.zeros(new_w) if new_w == 1 else np.arange(new_w) * ((W - 1) / (new_w - 1))
    gx, gy = np.meshgrid(np.minimum(xs, W - 1), np.minimum(ys, H - 1))
    vals, _ = sample_many(img, gx, gy)
    return vals.astype(np.float32)


def resample_scaled(img, new_h: int, new_w: int, factor: float) -> np.ndarray:
    """Bilinear resample where output pixel x reads input pixel ``x / factor``.

    This is the mapping implied by multiplying intrinsics by ``factor`` (see
    ``camera.scale_camera``). Reads past the last input pixel are clamped.
    """
    img = as_image(img)
    H, W = img.shape[:2]
    xs = np.minimum(np.arange(new_w) / factor, W - 1)
    ys = np.minimum(np.arange(new_h) / factor, H - 1)
    gx, gy = np.meshgrid(xs, ys)
    vals, _ = sample_many(img, gx, gy)
    return vals.astype(np.float32)


def gaussian_kernel1d(sigma: float, radius: int | None = None) -> np.ndarray:
    if radius is None:
        radius = max(1, int(np.ceil(3.0 * sigma)))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with replicate borders."""
    img = as_image(img)
    k = gaussian_kernel1d(sigma)
    r = len(k) // 2
    a = img.astype(np.float64)
    H, W = a.shape[:2]
    p = np.pad(a, ((0, 0), (r, r), (0, 0)), mode="edge")
    a = sum(k[i] * p[:, i : i + W] for i in range(len(k)))
    p = np.pad(a, ((r, r), (0, 0), (0, 0)), mode="edge")
    a = sum(k[i] * p[i : i + H] for i in range(len(k)))
    return a.astype(np.float32)


def downsample(img, factor: float) -> np.ndarray:
    """Anti-aliased decimation consistent with ``camera.scale_camera(cam, factor)``.

    For factor 1 the image is returned unchanged.
    """
    img = as_image(img)
    if factor == 1:
        return img
    H, W = img.shape[:2]
    new_h = int(round(H * factor))
    new_w = int(round(W * factor))
    blurred = gaussian_blur(img, 0.4 / factor)
    return resample_scaled(blurred, new_h, new_w, factor)


def decimate(a, factor: float) -> np.ndarray:
    """Point-sample a map at ``x / factor`` (nearest, no blending).

    Used for ground-truth depth, where interpolating across discontinuities
    would invent surfaces.
    """
    a = np.asarray(a)
    if factor == 1:
        return a.copy()
    H, W = a.shape[:2]
    new_h = int(round(H * factor))
    new_w = int(round(W * factor))
    ys = np.minimum(np.rint(np.arange(new_h) / factor).astype(int), H - 1)
    xs = np.minimum(np.rint(np.arange(new_w) / factor).astype(int), W - 1)
    return a[ys][:, xs]


def to_gray(img) -> np.ndarray:
    """(H, W) float64 luminance of a 1- or 3-channel image."""
    img = as_image(img).astype(np.float64)
    if img.shape[2] == 1:
        return img[:, :, 0]
    return 0.299 * img[:, :, 0] + 0.587 * img[:, :, 1] + 0.114 * img[:, :, 2]
