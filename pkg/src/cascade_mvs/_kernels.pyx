# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: bilinear gathering and exact grid nearest-neighbour.

Every routine here has a numpy twin in ``_fallback.py`` that performs the
same floating-point operations in the same order, so the two backends agree
bit for bit.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt, INFINITY

cnp.import_array()


cdef inline void _cell_coords(double x, Py_ssize_t n, Py_ssize_t *i0, Py_ssize_t *i1,
                              double *f) noexcept nogil:
    cdef double fl
    if n == 1:
        i0[0] = 0
        i1[0] = 0
        f[0] = 0.0
        return
    fl = floor(x)
    if fl > n - 2:
        fl = n - 2
    i0[0] = <Py_ssize_t>fl
    i1[0] = i0[0] + 1
    f[0] = x - fl


def gather_bilinear(const float[:, :, ::1] img, const double[::1] xs, const double[::1] ys):
    """Sample ``img`` (H, W, C) at N sub-pixel locations.

    Returns (values (N, C) float64, valid (N,) bool). Locations outside
    [0, W-1] x [0, H-1] (or non-finite) yield zeros and valid=False.
    """
    cdef Py_ssize_t H = img.shape[0], W = img.shape[1], C = img.shape[2]
    cdef Py_ssize_t N = xs.shape[0]
    out_arr = np.zeros((N, C), dtype=np.float64)
    valid_arr = np.zeros(N, dtype=np.uint8)
    cdef double[:, ::1] out = out_arr
    cdef unsigned char[::1] valid = valid_arr
    cdef Py_ssize_t n, c, x0, x1, y0, y1
    cdef double x, y, fx, fy, w00, w01, w10, w11
    with nogil:
        for n in range(N):
            x = xs[n]
            y = ys[n]
            if not (x >= 0.0 and x <= W - 1 and y >= 0.0 and y <= H - 1):
                continue
            _cell_coords(x, W, &x0, &x1, &fx)
            _cell_coords(y, H, &y0, &y1, &fy)
            w00 = (1.0 - fx) * (1.0 - fy)
            w01 = fx * (1.0 - fy)
            w10 = (1.0 - fx) * fy
            w11 = fx * fy
            valid[n] = 1
            for c in range(C):
                out[n, c] = (((w00 * img[y0, x0, c] + w01 * img[y0, x1, c])
                              + w10 * img[y1, x0, c]) + w11 * img[y1, x1, c])
    return out_arr, valid_arr.view(np.bool_)


def gather_bilinear_grad(const float[:, :, ::1] img, const double[::1] xs, const double[::1] ys):
    """Partial derivatives of the bilinear sample w.r.t. x and y.

    Uses the right-hand derivative on lattice lines. Invalid locations get 0.
    """
    cdef Py_ssize_t H = img.shape[0], W = img.shape[1], C = img.shape[2]
    cdef Py_ssize_t N = xs.shape[0]
    gx_arr = np.zeros((N, C), dtype=np.float64)
    gy_arr = np.zeros((N, C), dtype=np.float64)
    cdef double[:, ::1] gx = gx_arr
    cdef double[:, ::1] gy = gy_arr
    cdef Py_ssize_t n, c, x0, x1, y0, y1
    cdef double x, y, fx, fy, a, b, cc, d
    with nogil:
        for n in range(N):
            x = xs[n]
            y = ys[n]
            if not (x >= 0.0 and x <= W - 1 and y >= 0.0 and y <= H - 1):
                continue
            _cell_coords(x, W, &x0, &x1, &fx)
            _cell_coords(y, H, &y0, &y1, &fy)
            for c in range(C):
                a = img[y0, x0, c]
                b = img[y0, x1, c]
                cc = img[y1, x0, c]
                d = img[y1, x1, c]
                gx[n, c] = (1.0 - fy) * (b - a) + fy * (d - cc)
                gy[n, c] = (1.0 - fx) * (cc - a) + fx * (d - b)
    return gx_arr, gy_arr


def grid_nearest(const double[:, ::1] pts, const long long[::1] cell_start,
                 const long long[::1] dims, const double[::1] origin, double h,
                 const double[:, ::1] queries):
    """Exact nearest-neighbour distances by expanding Chebyshev shells.

    ``pts`` are sorted by linear cell index (x fastest); ``cell_start`` is the
    CSR offset table of length nx*ny*nz + 1.
    """
    cdef Py_ssize_t M = queries.shape[0]
    cdef long long nx = dims[0], ny = dims[1], nz = dims[2]
    out_arr = np.empty(M, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t m, k
    cdef long long cx, cy, cz, r, r0, rmax, ix, iy, iz, zlo, zhi, ylo, yhi, xlo, xhi, cell, step
    cdef double best, dx, dy, dz, d2, t
    with nogil:
        for m in range(M):
            t = floor((queries[m, 0] - origin[0]) / h)
            t = -1e15 if t < -1e15 else (1e15 if t > 1e15 else t)
            cx = <long long>t
            t = floor((queries[m, 1] - origin[1]) / h)
            t = -1e15 if t < -1e15 else (1e15 if t > 1e15 else t)
            cy = <long long>t
            t = floor((queries[m, 2] - origin[2]) / h)
            t = -1e15 if t < -1e15 else (1e15 if t > 1e15 else t)
            cz = <long long>t
            r0 = 0
            rmax = 0
            r0 = _max3(_outside(cx, nx), _outside(cy, ny), _outside(cz, nz))
            rmax = _max3(_far(cx, nx), _far(cy, ny), _far(cz, nz))
            best = INFINITY
            r = r0
            while r <= rmax:
                # one extra shell of margin covers rounding in the cell assignment
                if r >= 2 and best <= (r - 2) * h * (r - 2) * h:
                    break
                xlo = cx - r if cx - r > 0 else 0
                xhi = cx + r if cx + r < nx - 1 else nx - 1
                ylo = cy - r if cy - r > 0 else 0
                yhi = cy + r if cy + r < ny - 1 else ny - 1
                for ix in range(xlo, xhi + 1):
                    for iy in range(ylo, yhi + 1):
                        if ix == cx - r or ix == cx + r or iy == cy - r or iy == cy + r:
                            zlo = cz - r if cz - r > 0 else 0
                            zhi = cz + r if cz + r < nz - 1 else nz - 1
                            step = 1
                        else:
                            zlo = cz - r
                            zhi = cz + r
                            step = 2 * r if r > 0 else 1
                        iz = zlo
                        while iz <= zhi:
                            if iz >= 0 and iz < nz:
                                cell = (iz * ny + iy) * nx + ix
                                for k in range(cell_start[cell], cell_start[cell + 1]):
                                    dx = queries[m, 0] - pts[k, 0]
                                    dy = queries[m, 1] - pts[k, 1]
                                    dz = queries[m, 2] - pts[k, 2]
                                    d2 = dx * dx + dy * dy + dz * dz
                                    if d2 < best:
                                        best = d2
                            iz += step
                r += 1
            out[m] = sqrt(best)
    return out_arr


cdef inline long long _max3(long long a, long long b, long long c) noexcept nogil:
    if b > a:
        a = b
    if c > a:
        a = c
    return a


cdef inline long long _outside(long long c, long long n) noexcept nogil:
    if c < 0:
        return -c
    if c > n - 1:
        return c - (n - 1)
    return 0


cdef inline long long _far(long long c, long long n) noexcept nogil:
    cdef long long a = c if c > 0 else -c
    cdef long long b = (n - 1) - c
    if b < 0:
        b = -b
    return a if a > b else b
