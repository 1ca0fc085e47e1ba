"""Pinhole cameras, reprojection and fronto-parallel plane homographies.

Extrinsics map world to camera: ``X_cam = R @ X_world + T``. Pixel centres
are at integer coordinates. Point/pixel arguments broadcast, so a whole
image grid can be pushed through at once.

The elementwise formulas below avoid BLAS on purpose: results must not
depend on the thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


class BehindCameraError(ValueError):
    """A point has non-positive depth in the camera that should see it."""


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def K_inv(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    @classmethod
    def from_matrix(cls, K) -> "Intrinsics":
        K = np.asarray(K, dtype=float)
        return cls(float(K[0, 0]), float(K[1, 1]), float(K[0, 2]), float(K[1, 2]))


@dataclass(frozen=True)
class Extrinsics:
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    T: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.R, dtype=np.float64).reshape(3, 3)
        T = np.array(self.T, dtype=np.float64).reshape(3)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-6) or abs(np.linalg.det(R) - 1.0) > 1e-6:
            raise ValueError("R must be a proper rotation")
        R.setflags(write=False)
        T.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)

    @property
    def center(self) -> np.ndarray:
        """Camera centre in world coordinates."""
        return -self.R.T @ self.T

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.R
        M[:3, 3] = self.T
        return M

    def __eq__(self, other):
        return (
            isinstance(other, Extrinsics)
            and np.array_equal(self.R, other.R)
            and np.array_equal(self.T, other.T)
        )

    __hash__ = None


@dataclass(frozen=True)
class Camera:
    intrinsics: Intrinsics
    extrinsics: Extrinsics = field(default_factory=Extrinsics)
    depth_min: float = 1.0
    depth_max: float = 100.0

    def __post_init__(self):
        if not (0 < self.depth_min < self.depth_max):
            raise ValueError(
                f"need 0 < depth_min < depth_max, got {self.depth_min}, {self.depth_max}"
            )

    @property
    def R(self) -> np.ndarray:
        return self.extrinsics.R

    @property
    def T(self) -> np.ndarray:
        return self.extrinsics.T


def look_at(center, target, up=(0.0, -1.0, 0.0)) -> Extrinsics:
    """World-to-camera extrinsics for a camera at ``center`` looking at ``target``.

    Camera axes: +z forward, +x right, +y down (image rows).
    """
    center = np.asarray(center, float)
    z = np.asarray(target, float) - center
    z /= np.linalg.norm(z)
    x = np.cross(z, -np.asarray(up, float))
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    return Extrinsics(R, -R @ center)


def _apply(M, v0, v1, v2):
    """M @ (v0, v1, v2) written out elementwise."""
    return (
        M[0, 0] * v0 + M[0, 1] * v1 + M[0, 2] * v2,
        M[1, 0] * v0 + M[1, 1] * v1 + M[1, 2] * v2,
        M[2, 0] * v0 + M[2, 1] * v1 + M[2, 2] * v2,
    )


def project(cam: Camera, p, check: bool = True):
    """World point(s) ``p[..., 3]`` to ``(x, y, z)`` with z the camera depth."""
    p = np.asarray(p, dtype=np.float64)
    R, T = cam.R, cam.T
    X, Y, Z = _apply(R, p[..., 0], p[..., 1], p[..., 2])
    X, Y, Z = X + T[0], Y + T[1], Z + T[2]
    if check and np.any(~(Z > 0)):
        raise BehindCameraError("point is behind the camera")
    k = cam.intrinsics
    with np.errstate(divide="ignore", invalid="ignore"):
        return k.fx * X / Z + k.cx, k.fy * Y / Z + k.cy, Z


def backproject(cam: Camera, x, y, d) -> np.ndarray:
    """Pixel(s) at camera depth ``d`` to world points, shape ``broadcast + (3,)``."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(~(d > 0)):
        raise ValueError("depth must be positive")
    return _backproject(cam, x, y, d)


def _backproject(cam: Camera, x, y, d) -> np.ndarray:
    k = cam.intrinsics
    X = (np.asarray(x, float) - k.cx) / k.fx * d
    Y = (np.asarray(y, float) - k.cy) / k.fy * d
    Z = np.broadcast_to(d, np.broadcast(X, Y, d).shape)
    X, Y = X - cam.T[0], Y - cam.T[1]
    Z = Z - cam.T[2]
    Rt = cam.R.T
    return np.stack(_apply(Rt, X, Y, Z), axis=-1)


def relative_transform(ref: Camera, src: Camera) -> tuple[np.ndarray, np.ndarray]:
    """``(A, b)`` such that src homogeneous pixel = d * A @ (x, y, 1) + b."""
    R_rel = src.R @ ref.R.T
    t_rel = src.T - R_rel @ ref.T
    A = src.intrinsics.K @ R_rel @ ref.intrinsics.K_inv
    b = src.intrinsics.K @ t_rel
    return A, b


def reproject_raw(ref: Camera, src: Camera, x, y, d, A=None, b=None):
    """Unchecked reprojection returning ``(u, v, z_src)``; z may be <= 0."""
    if A is None:
        A, b = relative_transform(ref, src)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    d = np.asarray(d, float)
    a0, a1, a2 = _apply(A, x, y, 1.0)
    n0 = d * a0 + b[0]
    n1 = d * a1 + b[1]
    n2 = d * a2 + b[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        return n0 / n2, n1 / n2, n2


def reproject_ddepth(ref: Camera, src: Camera, x, y, d, A=None, b=None):
    """``(du/dd, dv/dd)`` of the reprojected source pixel."""
    if A is None:
        A, b = relative_transform(ref, src)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    d = np.asarray(d, float)
    a0, a1, a2 = _apply(A, x, y, 1.0)
    n0 = d * a0 + b[0]
    n1 = d * a1 + b[1]
    n2 = d * a2 + b[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv2 = 1.0 / (n2 * n2)
        return (a0 * n2 - n0 * a2) * inv2, (a1 * n2 - n1 * a2) * inv2


def reproject(ref: Camera, src: Camera, x, y, d):
    """Reference pixel at reference depth ``d`` to ``(u, v, z)`` in ``src``."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(~(d > 0)):
        raise ValueError("depth must be positive")
    u, v, z = reproject_raw(ref, src, x, y, d)
    if np.any(~(z > 0)):
        raise BehindCameraError("point is behind the source camera")
    return u, v, z


def plane_homography(ref: Camera, src: Camera, d: float) -> np.ndarray:
    """Homography of the fronto-parallel plane at reference depth ``d``.

    Unnormalised: ``H @ (x, y, 1)`` must be divided by its third component.
    """
    if not d > 0:
        raise ValueError("depth must be positive")
    A, b = relative_transform(ref, src)
    return A + np.outer(b, [0.0, 0.0, 1.0 / d])


def scale_camera(cam: Camera, factor: float) -> Camera:
    """Scale intrinsics for an image resampled so that pixel x maps to ``factor * x``."""
    if not factor > 0:
        raise ValueError("scale factor must be positive")
    k = cam.intrinsics
    return replace(
        cam,
        intrinsics=Intrinsics(k.fx * factor, k.fy * factor, k.cx * factor, k.cy * factor),
    )


def pixel_grid(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """``(x, y)`` float64 coordinate grids of shape (h, w)."""
    ys, xs = np.mgrid[0:h, 0:w]
    return xs.astype(np.float64), ys.astype(np.float64)
