"""Procedural test scenes rendered by ray casting, with exact ground truth.

Shading is Lambertian under a fixed directional light with two-sided
normals, so a surface point has the same colour from every camera. Depth is
the camera-frame z of the nearest hit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import Camera, Intrinsics, look_at, pixel_grid, project
from .hypothesis import DepthMap


@dataclass(frozen=True)
class Texture:
    """Albedo pattern evaluated at world positions.

    ``kind`` is ``"noise"`` (3-octave value noise with period ``scale``),
    ``"checker"`` (cubes of edge ``scale``) or ``"flat"``.
    """

    kind: str = "noise"
    scale: float = 16.0
    color: tuple[float, float, float] = (0.8, 0.7, 0.6)
    contrast: float = 0.8
    seed: int = 0


@dataclass(frozen=True)
class Plane:
    point: tuple[float, float, float]
    normal: tuple[float, float, float]
    texture: Texture = Texture()
    # optional finite extent: half sizes along two in-plane axes
    half_extent: tuple[float, float] | None = None
    u_axis: tuple[float, float, float] = (1.0, 0.0, 0.0)


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    texture: Texture = Texture()


@dataclass(frozen=True)
class Box:
    center: tuple[float, float, float]
    half_size: tuple[float, float, float]
    texture: Texture = Texture()


@dataclass
class SceneSpec:
    primitives: list
    cameras: list[Camera]
    height: int
    width: int
    seed: int = 0
    light_dir: tuple[float, float, float] = (-0.3, -0.4, -0.85)
    ambient: float = 0.35


@dataclass
class RenderedView:
    image: np.ndarray  # (H, W, 3) float32 in [0, 1]
    depth: DepthMap  # ground truth, 0 where no surface
    camera: Camera
    valid: np.ndarray  # (H, W) ray hit something
    covisible: np.ndarray = field(repr=False)  # (V, H, W): point seen by view v


# ---------------------------------------------------------------- textures

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _hash3(ix, iy, iz, seed: int) -> np.ndarray:
    """Deterministic hash of integer lattice points to [0, 1)."""
    with np.errstate(over="ignore"):
        h = (
            ix.astype(np.int64).astype(np.uint64) * np.uint64(0x9E3779B185EBCA87)
            ^ iy.astype(np.int64).astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
            ^ iz.astype(np.int64).astype(np.uint64) * np.uint64(0x165667B19E3779F9)
            ^ np.uint64(seed & 0xFFFFFFFF) * np.uint64(0x27D4EB2F165667C5)
        )
        h ^= h >> np.uint64(31)
        h *= np.uint64(0xBF58476D1CE4E5B9)
        h ^= h >> np.uint64(27)
        h *= np.uint64(0x94D049BB133111EB)
        h ^= h >> np.uint64(31)
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def value_noise(p: np.ndarray, period: float, seed: int) -> np.ndarray:
    """Smooth (C1) value noise in [0, 1] at points ``p[..., 3]``."""
    q = p / period
    i = np.floor(q)
    f = q - i
    s = f * f * (3.0 - 2.0 * f)
    i = i.astype(np.int64)
    out = np.zeros(p.shape[:-1])
    for dx in (0, 1):
        wx = s[..., 0] if dx else 1.0 - s[..., 0]
        for dy in (0, 1):
            wy = s[..., 1] if dy else 1.0 - s[..., 1]
            for dz in (0, 1):
                wz = s[..., 2] if dz else 1.0 - s[..., 2]
                out += wx * wy * wz * _hash3(i[..., 0] + dx, i[..., 1] + dy, i[..., 2] + dz, seed)
    return out


def _albedo(tex: Texture, p: np.ndarray, scene_seed: int) -> np.ndarray:
    base = np.asarray(tex.color, dtype=np.float64)
    if tex.kind == "flat":
        return np.broadcast_to(base, p.shape).copy()
    if tex.kind == "checker":
        k = np.floor(p / tex.scale).astype(np.int64).sum(axis=-1) % 2
        v = np.where(k == 1, 1.0, 0.0)[..., None]
        return base * (1.0 - tex.contrast + tex.contrast * v)
    if tex.kind != "noise":
        raise ValueError(f"unknown texture kind {tex.kind!r}")
    chans = []
    for c in range(3):
        seed = scene_seed * 7919 + tex.seed * 104729 + c * 15485863
        n = (
            0.55 * value_noise(p, tex.scale, seed)
            + 0.30 * value_noise(p, tex.scale / 2.0, seed + 1)
            + 0.15 * value_noise(p, tex.scale / 4.0, seed + 2)
        )
        chans.append(n)
    v = np.stack(chans, axis=-1)
    # keep a shared luminance component so grayscale matching sees the texture
    lum = v.mean(axis=-1, keepdims=True)
    v = 0.7 * lum + 0.3 * v
    return base * (1.0 - tex.contrast + tex.contrast * (2.0 * v - 0.25).clip(0.0, 1.0))


# ---------------------------------------------------------------- ray casting


def _intersect(prim, origin, dirs):
    """Return (t, normal) for rays ``origin + t * dirs``; t = inf on miss."""
    o = np.asarray(origin, float)
    if isinstance(prim, Plane):
        n = np.asarray(prim.normal, float)
        n = n / np.linalg.norm(n)
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (np.dot(np.asarray(prim.point, float) - o, n)) / denom
        t = np.where((np.abs(denom) > 1e-12) & (t > 1e-9), t, np.inf)
        if prim.half_extent is not None:
            u = np.asarray(prim.u_axis, float)
            u = u - np.dot(u, n) * n
            u /= np.linalg.norm(u)
            v = np.cross(n, u)
            with np.errstate(invalid="ignore"):
                rel = o + np.where(np.isfinite(t), t, 0.0)[:, None] * dirs - np.asarray(prim.point, float)
            inside = (np.abs(rel @ u) <= prim.half_extent[0]) & (np.abs(rel @ v) <= prim.half_extent[1])
            t = np.where(inside, t, np.inf)
        return t, np.broadcast_to(n, dirs.shape)
    if isinstance(prim, Sphere):
        c = np.asarray(prim.center, float)
        oc = o - c
        a = np.einsum("ij,ij->i", dirs, dirs)
        b = 2.0 * (dirs @ oc)
        cc = oc @ oc - prim.radius**2
        disc = b * b - 4.0 * a * cc
        with np.errstate(invalid="ignore"):
            t = (-b - np.sqrt(disc)) / (2.0 * a)
        t = np.where((disc >= 0) & (t > 1e-9), t, np.inf)
        hit = o + np.where(np.isfinite(t), t, 0.0)[:, None] * dirs
        normal = (hit - c) / prim.radius
        return t, normal
    if isinstance(prim, Box):
        c = np.asarray(prim.center, float)
        hs = np.asarray(prim.half_size, float)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
            t1 = (c - hs - o) * inv
            t2 = (c + hs - o) * inv
        tmin = np.minimum(t1, t2)
        tmax = np.maximum(t1, t2)
        tmin = np.where(np.isnan(tmin), -np.inf, tmin)
        tmax = np.where(np.isnan(tmax), np.inf, tmax)
        t_near = tmin.max(axis=1)
        t_far = tmax.min(axis=1)
        axis = tmin.argmax(axis=1)
        t = np.where((t_near <= t_far) & (t_near > 1e-9), t_near, np.inf)
        normal = np.zeros_like(dirs)
        normal[np.arange(len(dirs)), axis] = 1.0
        return t, normal
    raise TypeError(f"unknown primitive {type(prim).__name__}")


def cast(primitives, origin, dirs):
    """Nearest hit over all primitives: (t, primitive index or -1, normal)."""
    best_t = np.full(len(dirs), np.inf)
    best_i = np.full(len(dirs), -1, dtype=np.int64)
    best_n = np.zeros_like(dirs)
    for k, prim in enumerate(primitives):
        t, n = _intersect(prim, origin, dirs)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_i = np.where(closer, k, best_i)
        best_n = np.where(closer[:, None], n, best_n)
    return best_t, best_i, best_n


def _camera_rays(cam: Camera, h: int, w: int):
    xs, ys = pixel_grid(h, w)
    k = cam.intrinsics
    d_cam = np.stack([(xs - k.cx) / k.fx, (ys - k.cy) / k.fy, np.ones_like(xs)], axis=-1)
    # camera-frame z of each direction is 1, so the ray parameter is the depth
    return cam.extrinsics.center, d_cam.reshape(-1, 3) @ cam.R


def _inside(prim, p) -> bool:
    p = np.asarray(p, float)
    if isinstance(prim, Sphere):
        return np.linalg.norm(p - np.asarray(prim.center)) < prim.radius
    if isinstance(prim, Box):
        return bool(np.all(np.abs(p - np.asarray(prim.center)) < np.asarray(prim.half_size)))
    return False


def validate(spec: SceneSpec) -> None:
    if not spec.primitives:
        raise ValueError("scene needs at least one primitive")
    if len(spec.cameras) < 2:
        raise ValueError("scene needs a reference and at least one source camera")
    for cam in spec.cameras:
        c = cam.extrinsics.center
        for prim in spec.primitives:
            if _inside(prim, c):
                raise ValueError(f"camera at {c} is inside a {type(prim).__name__}")
            anchor = getattr(prim, "center", None) or getattr(prim, "point")
            if project(cam, anchor, check=False)[2] <= 0:
                raise ValueError(f"{type(prim).__name__} is behind a camera")


def shade(spec: SceneSpec, points: np.ndarray, prim_idx: np.ndarray, normals: np.ndarray) -> np.ndarray:
    light = np.asarray(spec.light_dir, float)
    light /= np.linalg.norm(light)
    out = np.zeros(points.shape)
    lam = spec.ambient + (1.0 - spec.ambient) * np.abs(normals @ light)
    for k, prim in enumerate(spec.primitives):
        sel = prim_idx == k
        if sel.any():
            out[sel] = _albedo(prim.texture, points[sel], spec.seed) * lam[sel, None]
    return out.clip(0.0, 1.0)


def render_scene(spec: SceneSpec) -> list[RenderedView]:
    """Render every camera of ``spec``; deterministic given the spec."""
    validate(spec)
    H, W = spec.height, spec.width
    hits = []
    for cam in spec.cameras:
        origin, dirs = _camera_rays(cam, H, W)
        t, idx, normal = cast(spec.primitives, origin, dirs)
        valid = np.isfinite(t)
        pts = origin + np.where(valid, t, 0.0)[:, None] * dirs
        img = shade(spec, pts, idx, normal)
        img[~valid] = 0.0
        hits.append((t, idx, valid, pts, img))

    views = []
    for j, cam in enumerate(spec.cameras):
        t, idx, valid, pts, img = hits[j]
        covis = np.zeros((len(spec.cameras), H * W), dtype=bool)
        for k, other in enumerate(spec.cameras):
            if k == j:
                covis[k] = valid
                continue
            covis[k] = valid & visible_from(spec, other, pts, valid)
        depth = np.where(valid, t, 0.0).reshape(H, W)
        views.append(
            RenderedView(
                image=img.reshape(H, W, 3).astype(np.float32),
                depth=DepthMap(depth),
                camera=cam,
                valid=valid.reshape(H, W),
                covisible=covis.reshape(len(spec.cameras), H, W),
            )
        )
    return views


def visible_from(spec: SceneSpec, cam: Camera, pts: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Whether world points (N, 3) are inside ``cam``'s image and unoccluded."""
    u, v, z = project(cam, pts, check=False)
    inside = valid & (z > 0) & (u >= 0) & (u <= spec.width - 1) & (v >= 0) & (v <= spec.height - 1)
    origin = cam.extrinsics.center
    dirs = (pts - origin) / np.where(inside, z, 1.0)[:, None]
    t, _, _ = cast(spec.primitives, origin, np.where(inside[:, None], dirs, np.array([0.0, 0.0, 1.0])))
    return inside & (t >= z * (1.0 - 1e-6))


def _plane_frame(prim: Plane):
    n = np.asarray(prim.normal, float)
    n = n / np.linalg.norm(n)
    u = np.asarray(prim.u_axis, float)
    u = u - np.dot(u, n) * n
    u /= np.linalg.norm(u)
    return n, u, np.cross(n, u)


def _grid2(lo_u, hi_u, lo_v, hi_v, spacing):
    us = np.arange(lo_u + spacing / 2, hi_u, spacing)
    vs = np.arange(lo_v + spacing / 2, hi_v, spacing)
    U, V = np.meshgrid(us, vs, indexing="ij")
    return U.ravel(), V.ravel()


def _surface_points(spec: SceneSpec, prim, spacing: float) -> np.ndarray:
    if isinstance(prim, Plane):
        n, u, v = _plane_frame(prim)
        p0 = np.asarray(prim.point, float)
        if prim.half_extent is not None:
            a, b = prim.half_extent
        else:
            # bound the infinite plane by where the image corners of every camera hit it
            corners = []
            for cam in spec.cameras:
                xs = np.array([0.0, spec.width - 1, 0.0, spec.width - 1])
                ys = np.array([0.0, 0.0, spec.height - 1, spec.height - 1])
                k = cam.intrinsics
                d = np.stack([(xs - k.cx) / k.fx, (ys - k.cy) / k.fy, np.ones(4)], axis=1) @ cam.R
                o = cam.extrinsics.center
                with np.errstate(divide="ignore", invalid="ignore"):
                    t = np.dot(p0 - o, n) / (d @ n)
                t = np.where(t > 0, t, np.nan)
                corners.append(o + t[:, None] * d - p0)
            c = np.concatenate(corners)
            c = c[np.all(np.isfinite(c), axis=1)]
            a = float(np.abs(c @ u).max()) + spacing if len(c) else 0.0
            b = float(np.abs(c @ v).max()) + spacing if len(c) else 0.0
        U, V = _grid2(-a, a, -b, b, spacing)
        return p0 + U[:, None] * u + V[:, None] * v
    if isinstance(prim, Sphere):
        m = max(8, int(np.ceil(4.0 * np.pi * prim.radius**2 / spacing**2)))
        k = np.arange(m) + 0.5
        z = 1.0 - 2.0 * k / m
        phi = np.pi * (1.0 + 5.0**0.5) * k
        r = np.sqrt(1.0 - z * z)
        dirs = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
        return np.asarray(prim.center, float) + prim.radius * dirs
    if isinstance(prim, Box):
        c = np.asarray(prim.center, float)
        hs = np.asarray(prim.half_size, float)
        out = []
        for ax in range(3):
            o1, o2 = [a for a in range(3) if a != ax]
            U, V = _grid2(-hs[o1], hs[o1], -hs[o2], hs[o2], spacing)
            for sgn in (-1.0, 1.0):
                p = np.zeros((len(U), 3))
                p[:, ax] = sgn * hs[ax]
                p[:, o1] = U
                p[:, o2] = V
                out.append(c + p)
        return np.concatenate(out)
    raise TypeError(f"unknown primitive {type(prim).__name__}")


def sample_surface(spec: SceneSpec, spacing: float = 0.5) -> np.ndarray:
    """Points on the analytic surfaces, about ``spacing`` apart, seen by at least one camera."""
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    pts = np.concatenate([_surface_points(spec, p, spacing) for p in spec.primitives])
    seen = np.zeros(len(pts), dtype=bool)
    ok = np.ones(len(pts), dtype=bool)
    for cam in spec.cameras:
        seen |= visible_from(spec, cam, pts, ok & ~seen)
    return pts[seen]


# ---------------------------------------------------------------- presets

CANONICAL_RANGE = (400.0, 656.0)


def rig(
    n_views: int = 4,
    height: int = 256,
    width: int = 320,
    focal: float = 1200.0,
    baseline: float = 100.0,
    target=(0.0, 0.0, 590.0),
    ref_range=CANONICAL_RANGE,
) -> list[Camera]:
    """Reference camera at the origin looking down +z, sources on a ring around it.

    Focal length is given for a 320-pixel-wide image and scaled with ``width``.
    Source depth ranges are 256 units long, starting 64 below the closest
    expected surface, rounded to a multiple of 4.
    """
    f = focal * width / 320.0
    intr = Intrinsics(f, f, (width - 1) / 2.0, (height - 1) / 2.0)
    cams = [Camera(intr, look_at((0.0, 0.0, 0.0), target), *ref_range)]
    target = np.asarray(target, float)
    span = ref_range[1] - ref_range[0]
    for k in range(n_views - 1):
        ang = 2.0 * np.pi * k / max(1, n_views - 1) + np.pi / 6.0
        c = np.array([baseline * np.cos(ang), baseline * np.sin(ang), 0.0])
        dist = np.linalg.norm(target - c)
        lo = 4.0 * np.floor((dist - 124.0) / 4.0)
        cams.append(Camera(intr, look_at(c, target), lo, lo + span))
    return cams


def canonical_scene(height: int = 256, width: int = 320, n_views: int = 4, seed: int = 0, **rig_kw) -> SceneSpec:
    """Textured fronto-parallel backdrop at depth 630 with a sphere in front."""
    prims = [
        Plane((0.0, 0.0, 630.0), (0.0, 0.0, 1.0), Texture("noise", 14.0, (0.85, 0.75, 0.6), 0.85, 1)),
        Sphere((0.0, 0.0, 560.0), 30.0, Texture("noise", 9.0, (0.6, 0.75, 0.9), 0.85, 2)),
    ]
    return SceneSpec(prims, rig(n_views, height, width, **rig_kw), height, width, seed)


def plane_scene(height: int = 256, width: int = 320, n_views: int = 4, seed: int = 0, depth: float = 630.0, **rig_kw) -> SceneSpec:
    """A single textured fronto-parallel plane."""
    prims = [Plane((0.0, 0.0, depth), (0.0, 0.0, 1.0), Texture("noise", 14.0, (0.85, 0.75, 0.6), 0.85, 1))]
    return SceneSpec(prims, rig(n_views, height, width, **rig_kw), height, width, seed)


def step_scene(height: int = 256, width: int = 320, n_views: int = 4, seed: int = 0, **rig_kw) -> SceneSpec:
    """Backdrop at 630 with a fronto-parallel slab at 570 covering the left half."""
    prims = [
        Plane((0.0, 0.0, 630.0), (0.0, 0.0, 1.0), Texture("noise", 14.0, (0.85, 0.75, 0.6), 0.85, 1)),
        Plane((-200.0, 0.0, 570.0), (0.0, 0.0, 1.0), Texture("noise", 10.0, (0.55, 0.7, 0.85), 0.85, 3),
              half_extent=(200.0, 300.0)),
    ]
    return SceneSpec(prims, rig(n_views, height, width, **rig_kw), height, width, seed)


def low_texture_scene(height: int = 256, width: int = 320, n_views: int = 4, seed: int = 0, **rig_kw) -> SceneSpec:
    """Canonical geometry with flat albedo; matching is expected to struggle."""
    prims = [
        Plane((0.0, 0.0, 630.0), (0.0, 0.0, 1.0), Texture("flat", color=(0.7, 0.7, 0.7))),
        Sphere((0.0, 0.0, 560.0), 30.0, Texture("flat", color=(0.6, 0.6, 0.8))),
    ]
    return SceneSpec(prims, rig(n_views, height, width, **rig_kw), height, width, seed)


PRESETS = {
    "canonical": canonical_scene,
    "plane": plane_scene,
    "step": step_scene,
    "lowtex": low_texture_scene,
}
