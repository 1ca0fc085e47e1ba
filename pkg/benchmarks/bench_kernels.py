"""Time the compiled kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 5] [--cascade]

Each kernel runs on the same inputs with both backends; outputs are checked
for bit-identity before timings are reported. ``--cascade`` also times one
full cascade per backend in a fresh process (the backend is fixed at import).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from cascade_mvs import kernels
from cascade_mvs.fusion_eval import NearestNeighborGrid


def _inputs(seed=0):
    rng = np.random.default_rng(seed)
    img = rng.random((256, 320, 8)).astype(np.float32)
    n = 256 * 320
    xs = rng.uniform(-5, 325, n)
    ys = rng.uniform(-5, 261, n)
    surf = rng.normal(size=(200_000, 3))
    surf /= np.linalg.norm(surf, axis=1, keepdims=True) / 30.0
    queries = surf[rng.integers(0, len(surf), 200_000)] + rng.normal(scale=0.3, size=(200_000, 3))
    return img, xs, ys, NearestNeighborGrid(surf, tau=1.0), queries


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b, equal_nan=True)


def bench(repeat: int):
    img, xs, ys, grid, q = _inputs()
    cases = {
        "gather_bilinear (81920 px x 8 ch)": lambda m: m.gather_bilinear(img, xs, ys),
        "gather_bilinear_grad": lambda m: m.gather_bilinear_grad(img, xs, ys),
        "grid_nearest (200k queries, 200k pts)": lambda m: m.grid_nearest(
            grid.points, grid.cell_start, grid.dims, grid.origin, grid.h, q),
    }
    impls = kernels.backends()
    if "cython" not in impls:
        print("compiled extension not built; only the numpy backend is timed")
    print(f"{'kernel':<40}" + "".join(f"{name:>12}" for name in impls) + f"{'speedup':>10}")
    for label, fn in cases.items():
        outs = {name: fn(mod) for name, mod in impls.items()}
        if len(outs) == 2 and not _same(outs["numpy"], outs["cython"]):
            raise SystemExit(f"{label}: backends disagree")
        times = {name: min(timeit.repeat(lambda: fn(mod), number=1, repeat=repeat)) for name, mod in impls.items()}
        speed = times["numpy"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:<40}" + "".join(f"{times[n] * 1e3:>10.1f}ms" for n in impls) + f"{speed:>9.1f}x")


_CASCADE = """
import time
from cascade_mvs import kernels, pipeline, scene
views = scene.render_scene(scene.canonical_scene())
vs = pipeline.ViewSet(views[0].image, views[0].camera, [(v.image, v.camera) for v in views[1:]])
t = time.perf_counter(); pipeline.run_cascade(vs); print(kernels.BACKEND, time.perf_counter() - t)
"""


def bench_cascade():
    for pure in ("0", "1"):
        env = dict(os.environ, CASCADE_MVS_PURE=pure)
        out = subprocess.run([sys.executable, "-c", _CASCADE], env=env, capture_output=True, text=True, check=True)
        name, secs = out.stdout.split()
        print(f"full cascade, {name:<7} backend: {float(secs):.2f}s")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--cascade", action="store_true", help="also time a full cascade per backend")
    args = ap.parse_args(argv)
    bench(args.repeat)
    if args.cascade:
        bench_cascade()


if __name__ == "__main__":
    main()
