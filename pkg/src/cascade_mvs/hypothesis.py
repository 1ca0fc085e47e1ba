"""Depth hypothesis planes, depth regression and adaptive interval adjustment.

Hypothesis sets and probability volumes are ``(n, H, W)`` arrays with the
plane index first; depth, sigma and range maps are ``(H, W)``. All arithmetic
is float64: at depths of a few hundred units float32 cannot resolve 1e-6.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import softmax_over_planes

SIGMA_FLOOR = 1e-3
# offsets saturate to exactly 1 in floating point for very small sigma; keeping
# them just below 1 leaves adjacent planes a resolvable gap of interval * 1e-7
OFFSET_CAP = 1.0 - 1e-7
ADIA_MODES = ("literal", "concentrate", "off")


@dataclass
class DepthRangeMap:
    """Per-pixel search range ``[d_min, d_max]`` split into ``n`` equal steps."""

    d_min: np.ndarray
    d_max: np.ndarray
    n: int

    def __post_init__(self):
        self.d_min = np.asarray(self.d_min, dtype=np.float64)
        self.d_max = np.asarray(self.d_max, dtype=np.float64)
        if self.d_min.shape != self.d_max.shape:
            raise ValueError("d_min and d_max shapes differ")
        if np.any(~(self.d_min < self.d_max)):
            raise ValueError("every pixel needs d_min < d_max")

    @property
    def interval(self) -> np.ndarray:
        return pixel_interval(self)

    @classmethod
    def constant(cls, d_min: float, d_max: float, n: int, shape) -> "DepthRangeMap":
        return cls(np.full(shape, float(d_min)), np.full(shape, float(d_max)), n)


@dataclass
class DepthMap:
    depth: np.ndarray
    sigma: np.ndarray | None = None
    confidence: np.ndarray | None = None

    @property
    def shape(self):
        return self.depth.shape


def pixel_interval(r: DepthRangeMap) -> np.ndarray:
    """Equal step ``(d_max - d_min) / n`` per pixel."""
    return (r.d_max - r.d_min) / r.n


def uniform_hypotheses(r: DepthRangeMap, n: int | None = None) -> np.ndarray:
    """Planes at interval centres: ``d_min + (i + 0.5) * e`` for i = 0..n-1."""
    n = r.n if n is None else n
    if n < 2:
        raise ValueError(f"need at least 2 planes, got {n}")
    e = (r.d_max - r.d_min) / n
    i = np.arange(n, dtype=np.float64).reshape((n,) + (1,) * r.d_min.ndim)
    return r.d_min[None] + (i + 0.5) * e[None]


def _check_pair(h, p):
    h = np.asarray(h, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if h.shape != p.shape:
        raise ValueError(f"hypothesis shape {h.shape} != probability shape {p.shape}")
    return h, p


def regress_depth(h, p) -> np.ndarray:
    """Expected depth ``sum_i H_i * P_i``."""
    h, p = _check_pair(h, p)
    return (h * p).sum(axis=0)


def depth_variance(h, p, depth) -> np.ndarray:
    """Standard deviation ``sqrt(sum_i P_i (H_i - D)^2)`` about the regressed depth."""
    h, p = _check_pair(h, p)
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != h.shape[1:]:
        raise ValueError("depth map shape does not match the volume")
    return np.sqrt((p * (h - depth[None]) ** 2).sum(axis=0))


def refine_range(
    depth,
    sigma,
    lam: float,
    global_range: tuple[float, float],
    n_next: int,
    min_interval: float,
) -> DepthRangeMap:
    """Confidence range ``depth -/+ lam * sigma`` for the next stage.

    Where ``lam * sigma`` falls below half of ``min_interval`` the half-width
    is reset to ``n_next * min_interval / 2`` so planes never collapse onto one
    depth. The result is clamped to ``global_range``.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    depth = np.asarray(depth, dtype=np.float64)
    half = lam * np.asarray(sigma, dtype=np.float64)
    narrow = ~(half >= 0.5 * min_interval)
    half = np.where(narrow, 0.5 * n_next * min_interval, half)
    lo, hi = global_range
    d_min = np.maximum(depth - half, lo)
    d_max = np.minimum(depth + half, hi)
    return DepthRangeMap(d_min, d_max, n_next)


def fixed_range(
    depth, half_width: float, global_range: tuple[float, float], n_next: int
) -> DepthRangeMap:
    """Range of constant half-width around ``depth`` (cascade baseline), clamped."""
    depth = np.asarray(depth, dtype=np.float64)
    lo, hi = global_range
    return DepthRangeMap(
        np.maximum(depth - half_width, lo), np.minimum(depth + half_width, hi), n_next
    )


def adia_offsets(h_uniform, depth_prev, sigma_prev, mode: str = "literal") -> np.ndarray:
    """Per-pixel softmax over planes of the variance-normalised plane distance.

    ``literal`` scores ``(H_i - D) / sigma``; ``concentrate`` scores
    ``-|H_i - D| / sigma``. Sigma is clamped to ``SIGMA_FLOOR``.
    """
    h = np.asarray(h_uniform, dtype=np.float64)
    d = np.asarray(depth_prev, dtype=np.float64)[None]
    s = np.maximum(np.asarray(sigma_prev, dtype=np.float64), SIGMA_FLOOR)[None]
    if mode == "literal":
        scores = (h - d) / s
    elif mode == "concentrate":
        scores = -np.abs(h - d) / s
    else:
        raise ValueError(f"unknown offset mode {mode!r}")
    return np.minimum(softmax_over_planes(scores), OFFSET_CAP)


def adia_hypotheses(h_uniform, interval, offsets) -> np.ndarray:
    """Shift each uniform plane by ``interval * offset``.

    Consecutive planes differ by ``e * (1 + o_{i+1} - o_i) > 0`` because the
    offsets lie in (0, 1), so order is preserved whatever the offsets are.
    """
    h = np.asarray(h_uniform, dtype=np.float64)
    o = np.asarray(offsets, dtype=np.float64)
    if h.shape != o.shape:
        raise ValueError("offset volume shape mismatch")
    out = h + np.asarray(interval, dtype=np.float64)[None] * o
    if h.shape[0] > 1 and not np.all(np.diff(out, axis=0) > 0):
        raise AssertionError("adjusted hypotheses are not strictly increasing")
    return out


def nearest_plane_distance(h, target) -> np.ndarray:
    """Distance from ``target`` (H, W) to the closest plane of ``h`` per pixel."""
    return np.abs(np.asarray(h, float) - np.asarray(target, float)[None]).min(axis=0)
