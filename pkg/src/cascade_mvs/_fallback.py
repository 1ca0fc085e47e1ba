"""Pure numpy implementations of the compiled kernels.

Same signatures and the same floating-point operation order as
``_kernels.pyx``; used when the extension is not built or when
``CASCADE_MVS_PURE=1`` is set.
"""

from __future__ import annotations

import numpy as np

# shells visited vectorised before switching to brute force
_SHELLS = 3
_BRUTE_CHUNK = 1 << 22


def _cell_coords(x: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if n == 1:
        zero = np.zeros(x.shape, dtype=np.intp)
        return zero, zero, np.zeros(x.shape)
    fl = np.minimum(np.floor(x), n - 2)
    i0 = fl.astype(np.intp)
    return i0, i0 + 1, x - fl


def _locate(img, xs, ys):
    H, W = img.shape[:2]
    with np.errstate(invalid="ignore"):
        valid = (xs >= 0.0) & (xs <= W - 1) & (ys >= 0.0) & (ys <= H - 1)
    x = np.where(valid, xs, 0.0)
    y = np.where(valid, ys, 0.0)
    x0, x1, fx = _cell_coords(x, W)
    y0, y1, fy = _cell_coords(y, H)
    return valid, x0, x1, fx, y0, y1, fy


def gather_bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray):
    valid, x0, x1, fx, y0, y1, fy = _locate(img, xs, ys)
    fx = fx[:, None]
    fy = fy[:, None]
    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy
    im = img.astype(np.float64, copy=False)
    out = ((w00 * im[y0, x0] + w01 * im[y0, x1]) + w10 * im[y1, x0]) + w11 * im[y1, x1]
    out[~valid] = 0.0
    return out, valid


def gather_bilinear_grad(img: np.ndarray, xs: np.ndarray, ys: np.ndarray):
    valid, x0, x1, fx, y0, y1, fy = _locate(img, xs, ys)
    fx = fx[:, None]
    fy = fy[:, None]
    im = img.astype(np.float64, copy=False)
    a, b, c, d = im[y0, x0], im[y0, x1], im[y1, x0], im[y1, x1]
    gx = (1.0 - fy) * (b - a) + fy * (d - c)
    gy = (1.0 - fx) * (c - a) + fx * (d - b)
    gx[~valid] = 0.0
    gy[~valid] = 0.0
    return gx, gy


def _sqdist(q: np.ndarray, p: np.ndarray) -> np.ndarray:
    dx = q[..., 0] - p[..., 0]
    dy = q[..., 1] - p[..., 1]
    dz = q[..., 2] - p[..., 2]
    return dx * dx + dy * dy + dz * dz


def brute_nearest_sq(pts: np.ndarray, queries: np.ndarray) -> np.ndarray:
    best = np.full(len(queries), np.inf)
    rows = max(1, _BRUTE_CHUNK // max(1, len(pts)))
    for s in range(0, len(queries), rows):
        q = queries[s : s + rows]
        best[s : s + rows] = _sqdist(q[:, None, :], pts[None, :, :]).min(axis=1)
    return best


def grid_nearest(pts, cell_start, dims, origin, h, queries):
    out = np.empty(len(queries))
    for s in range(0, len(queries), 4096):
        out[s : s + 4096] = _grid_nearest_chunk(
            pts, cell_start, dims, origin, h, queries[s : s + 4096]
        )
    return out


def _grid_nearest_chunk(pts, cell_start, dims, origin, h, queries):
    nx, ny, nz = (int(v) for v in dims)
    M = len(queries)
    cells = np.clip(np.floor((queries - origin) / h), -1e15, 1e15).astype(np.int64)
    best = np.full(M, np.inf)

    r = _SHELLS
    offs = np.arange(-r, r + 1)
    ox, oy, oz = (a.ravel() for a in np.meshgrid(offs, offs, offs, indexing="ij"))
    qi = np.repeat(np.arange(M), len(ox))
    ix = cells[qi, 0] + np.tile(ox, M)
    iy = cells[qi, 1] + np.tile(oy, M)
    iz = cells[qi, 2] + np.tile(oz, M)
    inside = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny) & (iz >= 0) & (iz < nz)
    qi, lin = qi[inside], ((iz * ny + iy) * nx + ix)[inside]
    starts = cell_start[lin]
    counts = cell_start[lin + 1] - starts
    keep = counts > 0
    qi, starts, counts = qi[keep], starts[keep], counts[keep]
    if len(counts):
        pq = np.repeat(qi, counts)
        first = np.repeat(np.cumsum(counts) - counts, counts)
        pk = np.repeat(starts, counts) + (np.arange(counts.sum()) - first)
        np.minimum.at(best, pq, _sqdist(queries[pq], pts[pk]))

    # shells 0..r are done; with the one-shell rounding margin of the compiled
    # kernel, anything unseen is at least (r - 1) * h away
    bound = (r - 1) * h * (r - 1) * h
    todo = ~(best <= bound)
    if todo.any():
        best[todo] = np.minimum(best[todo], brute_nearest_sq(pts, queries[todo]))
    return np.sqrt(best)
