"""Random cameras and small synthetic problems shared by the tests."""

import numpy as np

from cascade_mvs.camera import Camera, Intrinsics, look_at


def random_camera_pair(rng, h=48, w=64, depth=(5.0, 50.0)):
    """Two cameras that both see the region around a random target."""
    f = rng.uniform(40.0, 120.0)
    intr = Intrinsics(f, f * rng.uniform(0.9, 1.1), (w - 1) / 2 + rng.uniform(-3, 3), (h - 1) / 2 + rng.uniform(-3, 3))
    c0 = rng.normal(size=3) * 3.0
    target = c0 + rng.normal(size=3) * 2.0 + np.array([0.0, 0.0, 25.0])
    c1 = c0 + rng.normal(size=3) * 2.0
    ref = Camera(intr, look_at(c0, target), *depth)
    src = Camera(intr, look_at(c1, target), *depth)
    return ref, src


def random_probability(rng, n, h, w):
    p = rng.random((n, h, w)) ** 3 + 1e-6
    return p / p.sum(axis=0, keepdims=True)


def random_planes(rng, n, h, w, lo=400.0, hi=650.0):
    d_min = rng.uniform(lo, hi - 20.0, size=(h, w))
    d_max = d_min + rng.uniform(1.0, 20.0, size=(h, w))
    return d_min, d_max


def textured_image(rng, h, w, c=3, smooth=2):
    img = rng.random((h + 2 * smooth, w + 2 * smooth, c))
    k = 2 * smooth + 1
    out = np.zeros((h, w, c))
    for dy in range(k):
        for dx in range(k):
            out += img[dy : dy + h, dx : dx + w]
    return (out / k**2).astype(np.float32)
