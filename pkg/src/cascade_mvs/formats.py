"""On-disk formats: PFM depth maps, cam.txt cameras, pair.txt view lists, PLY clouds, PNG images.

A dataset directory follows the usual MVS layout::

    images/00000000.png   cams/00000000_cam.txt   pair.txt
    gt_depths/00000000.pfm (synthetic data only)   gt.ply
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import Camera, Extrinsics, Intrinsics
from .fusion_eval import PointCloud


class FormatError(ValueError):
    """A file does not follow its format; ``path`` and ``reason`` say where and why."""

    def __init__(self, path, reason: str):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"{self.path}: {reason}")


class PFMError(FormatError):
    pass


# ---------------------------------------------------------------- PFM


def pfm_header(width: int, height: int, channels: int) -> bytes:
    tag = b"Pf" if channels == 1 else b"PF"
    return tag + b"\n" + f"{width} {height}\n".encode() + b"-1.0\n"


def write_pfm(path, data) -> None:
    """Write a (H, W) or (H, W, 1|3) array as little-endian float32, rows bottom-up."""
    a = np.asarray(data)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[..., 0]
    if a.ndim == 2:
        channels = 1
    elif a.ndim == 3 and a.shape[2] == 3:
        channels = 3
    else:
        raise PFMError(path, f"cannot store array of shape {a.shape}")
    H, W = a.shape[:2]
    body = np.ascontiguousarray(a[::-1].astype("<f4"))
    with open(path, "wb") as f:
        f.write(pfm_header(W, H, channels))
        f.write(body.tobytes())


def _read_line(f, path) -> bytes:
    line = f.readline()
    if not line.endswith(b"\n"):
        raise PFMError(path, "truncated header")
    return line.strip()


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into a top-down float32 array, (H, W) or (H, W, 3)."""
    with open(path, "rb") as f:
        tag = _read_line(f, path)
        if tag == b"Pf":
            channels = 1
        elif tag == b"PF":
            channels = 3
        else:
            raise PFMError(path, f"bad magic {tag[:8]!r}")
        m = re.fullmatch(rb"(\d+)\s+(\d+)", _read_line(f, path))
        if not m:
            raise PFMError(path, "malformed dimension line")
        W, H = int(m.group(1)), int(m.group(2))
        try:
            scale = float(_read_line(f, path))
        except ValueError:
            raise PFMError(path, "malformed scale line") from None
        if scale == 0:
            raise PFMError(path, "scale must be non-zero")
        dtype = "<f4" if scale < 0 else ">f4"
        count = W * H * channels
        raw = f.read(count * 4)
    if len(raw) != count * 4:
        raise PFMError(path, f"expected {count * 4} data bytes, found {len(raw)}")
    a = np.frombuffer(raw, dtype=dtype).astype(np.float32)
    shape = (H, W) if channels == 1 else (H, W, 3)
    return np.ascontiguousarray(a.reshape(shape)[::-1])


# ---------------------------------------------------------------- cam.txt


@dataclass
class CamFile:
    camera: Camera
    depth_interval: float
    depth_count: int


def write_cam(path, cam: Camera, depth_count: int = 256) -> None:
    M = cam.extrinsics.matrix()
    K = cam.intrinsics.K
    lines = ["extrinsic"]
    lines += [" ".join(repr(float(v)) for v in row) for row in M]
    lines += ["", "intrinsic"]
    lines += [" ".join(repr(float(v)) for v in row) for row in K]
    interval = (cam.depth_max - cam.depth_min) / depth_count
    lines += ["", f"{float(cam.depth_min)!r} {float(interval)!r} {depth_count} {float(cam.depth_max)!r}", ""]
    Path(path).write_text("\n".join(lines))


def read_cam(path, default_count: int = 192) -> CamFile:
    """Parse cam.txt. A two-value depth line ``min interval`` implies ``default_count``
    planes and ``max = min + interval * count``."""
    words = Path(path).read_text().split()
    try:
        e = words.index("extrinsic")
        i = words.index("intrinsic")
    except ValueError:
        raise FormatError(path, "missing extrinsic or intrinsic block") from None
    try:
        M = np.array([float(v) for v in words[e + 1 : e + 17]]).reshape(4, 4)
        K = np.array([float(v) for v in words[i + 1 : i + 10]]).reshape(3, 3)
        tail = [float(v) for v in words[i + 10 :]]
    except ValueError as exc:
        raise FormatError(path, f"non-numeric value ({exc})") from None
    if len(tail) not in (2, 3, 4):
        raise FormatError(path, f"depth line needs 2 to 4 values, found {len(tail)}")
    d_min, interval = tail[0], tail[1]
    count = int(tail[2]) if len(tail) >= 3 else default_count
    d_max = tail[3] if len(tail) == 4 else d_min + interval * count
    try:
        cam = Camera(Intrinsics.from_matrix(K), Extrinsics(M[:3, :3], M[:3, 3]), d_min, d_max)
    except ValueError as exc:
        raise FormatError(path, str(exc)) from None
    return CamFile(cam, interval, count)


# ---------------------------------------------------------------- pair.txt


@dataclass
class ViewPairs:
    """Per reference view, its source views with scores, in file order."""

    entries: list[tuple[int, list[tuple[int, float]]]] = field(default_factory=list)

    @property
    def empty_views(self) -> list[int]:
        return [ref for ref, srcs in self.entries if not srcs]

    def sources(self, ref: int) -> list[int]:
        for r, srcs in self.entries:
            if r == ref:
                return [s for s, _ in srcs]
        raise KeyError(ref)


def write_pair(path, pairs: ViewPairs) -> None:
    lines = [str(len(pairs.entries))]
    for ref, srcs in pairs.entries:
        lines.append(str(ref))
        lines.append(" ".join([str(len(srcs))] + [f"{s} {float(sc)!r}" for s, sc in srcs]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_pair(path) -> ViewPairs:
    tok = Path(path).read_text().split()
    pos = 0

    def take(kind):
        nonlocal pos
        if pos >= len(tok):
            raise FormatError(path, "unexpected end of file")
        try:
            v = kind(tok[pos])
        except ValueError:
            raise FormatError(path, f"bad token {tok[pos]!r}") from None
        pos += 1
        return v

    n = take(int)
    if n < 0:
        raise FormatError(path, "negative view count")
    out = ViewPairs()
    for _ in range(n):
        ref = take(int)
        k = take(int)
        if k < 0:
            raise FormatError(path, f"negative source count for view {ref}")
        out.entries.append((ref, [(take(int), take(float)) for _ in range(k)]))
    if pos != len(tok):
        raise FormatError(path, f"{len(tok) - pos} trailing tokens")
    return out


# ---------------------------------------------------------------- PLY


def write_ply(path, cloud: PointCloud, binary: bool = True) -> None:
    n = len(cloud)
    if n == 0:
        raise ValueError("refusing to write an empty point cloud")
    has_rgb = cloud.colors is not None
    fmt = "binary_little_endian" if binary else "ascii"
    head = ["ply", f"format {fmt} 1.0", f"element vertex {n}"]
    head += [f"property float {a}" for a in "xyz"]
    if has_rgb:
        head += [f"property uchar {a}" for a in ("red", "green", "blue")]
    head.append("end_header")
    header = ("\n".join(head) + "\n").encode("ascii")
    xyz = cloud.points.astype(np.float32)
    with open(path, "wb") as f:
        f.write(header)
        if binary:
            fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
            if has_rgb:
                fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
            rec = np.empty(n, dtype=fields)
            rec["x"], rec["y"], rec["z"] = xyz[:, 0], xyz[:, 1], xyz[:, 2]
            if has_rgb:
                rec["red"], rec["green"], rec["blue"] = cloud.colors.T
            f.write(rec.tobytes())
        else:
            for k in range(n):
                row = " ".join(repr(float(v)) for v in xyz[k])
                if has_rgb:
                    row += " " + " ".join(str(int(c)) for c in cloud.colors[k])
                f.write((row + "\n").encode("ascii"))


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def read_ply(path) -> PointCloud:
    """Read the vertex element of an ASCII or binary PLY (x, y, z and optional RGB)."""
    with open(path, "rb") as f:
        if f.readline().strip() != b"ply":
            raise FormatError(path, "missing 'ply' magic")
        fmt = None
        n = None
        props: list[tuple[str, str]] = []
        in_vertex = False
        while True:
            line = f.readline()
            if not line:
                raise FormatError(path, "header has no end_header")
            parts = line.decode("ascii", "replace").split()
            if not parts or parts[0] in ("comment", "obj_info"):
                continue
            if parts[0] == "end_header":
                break
            if parts[0] == "format":
                fmt = parts[1]
            elif parts[0] == "element":
                in_vertex = parts[1] == "vertex"
                if in_vertex:
                    n = int(parts[2])
            elif parts[0] == "property" and in_vertex:
                if parts[1] == "list":
                    raise FormatError(path, "list properties on vertices are not supported")
                if parts[1] not in _PLY_TYPES:
                    raise FormatError(path, f"unknown property type {parts[1]!r}")
                props.append((parts[2], _PLY_TYPES[parts[1]]))
        if n is None:
            raise FormatError(path, "no vertex element")
        names = [p for p, _ in props]
        if not all(a in names for a in "xyz"):
            raise FormatError(path, "vertex element lacks x, y or z")
        if fmt == "ascii":
            rows = []
            for _ in range(n):
                line = f.readline()
                if not line:
                    raise FormatError(path, "fewer vertices than declared")
                rows.append([float(v) for v in line.split()[: len(props)]])
            table = {nm: np.array([r[k] for r in rows]) for k, nm in enumerate(names)}
        elif fmt in ("binary_little_endian", "binary_big_endian"):
            order = "<" if fmt == "binary_little_endian" else ">"
            dt = np.dtype([(nm, order + t) for nm, t in props])
            raw = f.read(dt.itemsize * n)
            if len(raw) != dt.itemsize * n:
                raise FormatError(path, "fewer vertices than declared")
            rec = np.frombuffer(raw, dtype=dt)
            table = {nm: rec[nm] for nm in names}
        else:
            raise FormatError(path, f"unsupported format {fmt!r}")
    pts = np.stack([table[a].astype(np.float32).astype(np.float64) for a in "xyz"], axis=1)
    colors = None
    if all(c in table for c in ("red", "green", "blue")):
        colors = np.stack([table[c] for c in ("red", "green", "blue")], axis=1).astype(np.uint8)
    return PointCloud(pts, colors)


# ---------------------------------------------------------------- images


def write_image(path, img) -> None:
    from PIL import Image

    a = np.asarray(img, dtype=np.float64)
    a = np.clip(np.rint(a * 255.0), 0, 255).astype(np.uint8)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[..., 0]
    Image.fromarray(a).save(path)


def read_image(path) -> np.ndarray:
    """Image as float32 in [0, 1], (H, W, 3) for colour files and (H, W, 1) for gray."""
    from PIL import Image

    with Image.open(path) as im:
        a = np.asarray(im.convert("RGB") if im.mode not in ("L", "RGB") else im)
    a = a.astype(np.float32) / 255.0
    return a[..., None] if a.ndim == 2 else a


# ---------------------------------------------------------------- dataset layout


def view_name(i: int) -> str:
    return f"{i:08d}"


@dataclass
class Dataset:
    root: Path

    def __post_init__(self):
        self.root = Path(self.root)

    def image_path(self, i: int) -> Path:
        return self.root / "images" / f"{view_name(i)}.png"

    def cam_path(self, i: int) -> Path:
        return self.root / "cams" / f"{view_name(i)}_cam.txt"

    def gt_depth_path(self, i: int) -> Path:
        return self.root / "gt_depths" / f"{view_name(i)}.pfm"

    @property
    def pair_path(self) -> Path:
        return self.root / "pair.txt"

    @property
    def gt_cloud_path(self) -> Path:
        return self.root / "gt.ply"

    def view_ids(self) -> list[int]:
        if self.pair_path.exists():
            return [ref for ref, _ in read_pair(self.pair_path).entries]
        return sorted(int(p.stem) for p in (self.root / "images").glob("*.png"))

    def load_view(self, i: int) -> tuple[np.ndarray, Camera]:
        return read_image(self.image_path(i)), read_cam(self.cam_path(i)).camera

    def load_gt_depth(self, i: int) -> np.ndarray | None:
        p = self.gt_depth_path(i)
        return read_pfm(p).astype(np.float64) if p.exists() else None
