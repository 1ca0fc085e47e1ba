"""Command-line interface: synth, depth, fuse, eval, gradcheck, ablate."""

from __future__ import annotations

import argparse
import itertools
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import fusion_eval as fe
from . import formats, pipeline, scene
from .config import PipelineConfig, load_config
from .formats import Dataset, ViewPairs

logger = logging.getLogger("cascade_mvs")


class CliError(Exception):
    """Reported as ``error: <message>`` with exit status 2."""


# ---------------------------------------------------------------- helpers


def _parse_sets(items) -> dict[str, str]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise CliError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _config(args) -> PipelineConfig:
    overrides = _parse_sets(getattr(args, "set", None))
    for flag in ("temperature", "adia_mode", "jobs", "n_views", "voxel", "conf_min"):
        v = getattr(args, flag, None)
        if v is not None:
            overrides[flag] = str(v)
    for flag in ("gde", "is_loss"):
        v = getattr(args, flag, None)
        if v is not None:
            overrides[flag] = "true" if v else "false"
    try:
        return load_config(args.config, overrides)
    except (KeyError, ValueError) as exc:
        raise CliError(f"configuration: {exc}") from None


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file ([cascade] section optional)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one configuration key")
    p.add_argument("--temperature", type=float)
    p.add_argument("--adia-mode", choices=("literal", "concentrate", "off"))
    p.add_argument("--gde", dest="gde", action="store_true", default=None)
    p.add_argument("--no-gde", dest="gde", action="store_false")
    p.add_argument("--is-loss", dest="is_loss", action="store_true", default=None)
    p.add_argument("--no-is-loss", dest="is_loss", action="store_false")
    p.add_argument("--n-views", type=int, help="views per estimate, reference included")


def _synthetic_pairs(cams) -> ViewPairs:
    """Every view lists all others, closest camera centre first."""
    centers = np.array([c.extrinsics.center for c in cams])
    entries = []
    for i in range(len(cams)):
        others = [j for j in range(len(cams)) if j != i]
        dist = {j: float(np.linalg.norm(centers[i] - centers[j])) for j in others}
        others.sort(key=lambda j: (dist[j], j))
        entries.append((i, [(j, round(1000.0 / (1.0 + dist[j]), 6)) for j in others]))
    return ViewPairs(entries)


def _view_set(ds: Dataset, ref: int, pairs: ViewPairs | None, n_views: int) -> pipeline.ViewSet:
    if pairs is not None:
        src_ids = pairs.sources(ref)
    else:
        src_ids = [i for i in ds.view_ids() if i != ref]
    src_ids = src_ids[: max(1, n_views - 1)]
    if not src_ids:
        raise CliError(f"view {ref} has no source views")
    img, cam = ds.load_view(ref)
    return pipeline.ViewSet(img, cam, [ds.load_view(j) for j in src_ids])


# ---------------------------------------------------------------- synth


def cmd_synth(args) -> int:
    make = scene.PRESETS[args.preset]
    spec = make(height=args.height, width=args.width, n_views=args.views, seed=args.seed)
    views = scene.render_scene(spec)
    ds = Dataset(Path(args.out))
    for sub in ("images", "cams", "gt_depths"):
        (ds.root / sub).mkdir(parents=True, exist_ok=True)
    for i, v in enumerate(views):
        formats.write_image(ds.image_path(i), v.image)
        formats.write_cam(ds.cam_path(i), v.camera)
        formats.write_pfm(ds.gt_depth_path(i), v.depth.depth.astype(np.float32))
    formats.write_pair(ds.pair_path, _synthetic_pairs([v.camera for v in views]))
    surface = scene.sample_surface(spec, args.gt_spacing)
    formats.write_ply(ds.gt_cloud_path, fe.PointCloud(surface))
    print(f"wrote {len(views)} views of '{args.preset}' ({spec.height}x{spec.width}) to {ds.root}")
    print(f"gt surface: {len(surface)} points")
    return 0


# ---------------------------------------------------------------- depth


def _depth_job(root: str, ref: int, cfg: PipelineConfig, out: str) -> tuple[int, float]:
    ds = Dataset(Path(root))
    pairs = formats.read_pair(ds.pair_path) if ds.pair_path.exists() else None
    views = _view_set(ds, ref, pairs, cfg.n_views)
    t0 = time.perf_counter()
    res = pipeline.run_cascade(views, cfg)
    name = formats.view_name(ref)
    formats.write_pfm(Path(out) / "depth" / f"{name}.pfm", res.depth.depth.astype(np.float32))
    formats.write_pfm(Path(out) / "confidence" / f"{name}.pfm", res.depth.confidence.astype(np.float32))
    return ref, time.perf_counter() - t0


def cmd_depth(args) -> int:
    cfg = _config(args)
    jobs = args.jobs if args.jobs is not None else cfg.jobs
    ds = Dataset(Path(args.data))
    ids = args.views if args.views else ds.view_ids()
    if not ids:
        raise CliError(f"no views found under {ds.root}")
    out = Path(args.out)
    (out / "depth").mkdir(parents=True, exist_ok=True)
    (out / "confidence").mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    if jobs <= 1:
        done = [_depth_job(str(ds.root), i, cfg, str(out)) for i in ids]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = [pool.submit(_depth_job, str(ds.root), i, cfg, str(out)) for i in ids]
            done = [f.result() for f in futs]
    for ref, secs in done:
        print(f"view {ref}: {secs:.1f}s")
    print(f"depth maps written to {out / 'depth'}")
    return 0


# ---------------------------------------------------------------- fuse


def cmd_fuse(args) -> int:
    cfg = _config(args)
    ds = Dataset(Path(args.data))
    depth_dir = Path(args.depth)
    ids = ds.view_ids()
    depths, confs, cams, imgs = [], [], [], []
    for i in ids:
        p = depth_dir / "depth" / f"{formats.view_name(i)}.pfm"
        if not p.exists():
            continue
        depths.append(formats.read_pfm(p).astype(np.float64))
        cp = depth_dir / "confidence" / f"{formats.view_name(i)}.pfm"
        confs.append(formats.read_pfm(cp).astype(np.float64) if cp.exists() else None)
        img, cam = ds.load_view(i)
        cams.append(cam)
        imgs.append(img)
    if len(depths) < 2:
        raise CliError(f"need depth maps for at least 2 views in {depth_dir / 'depth'}")
    filt = fe.filter_depths(
        depths, cams, confs, cfg.conf_min, cfg.reproj_max, cfg.rel_depth_max, cfg.min_consistent
    )
    cloud = fe.fuse_points(filt, cams, imgs, cfg.voxel)
    if len(cloud) == 0:
        raise CliError("no pixel survived filtering")
    formats.write_ply(args.out, cloud, binary=not args.ascii)
    kept = sum(int((f > 0).sum()) for f in filt)
    total = sum(int((d > 0).sum()) for d in depths)
    print(f"kept {kept}/{total} pixels, {len(cloud)} points -> {args.out}")
    return 0


# ---------------------------------------------------------------- eval


def cmd_eval(args) -> int:
    recon = formats.read_ply(args.recon)
    gt = formats.read_ply(args.gt)
    rep = fe.evaluate(recon, gt, args.tau, args.dist_cap)
    sys.stdout.write(rep.to_text())
    if args.out:
        lines = [f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in rep.as_dict().items()]
        Path(args.out).write_text("\n".join(lines) + "\n")
    return 0


# ---------------------------------------------------------------- gradcheck


def gradcheck_suite(probes: int = 100, step: float = 1e-2, seed: int = 0, scale: float = 0.5):
    """Compare the analytic image-synthesis gradient with central differences.

    Returns ``(max relative error, number of probes, excluded candidates)``.
    The predicted depth is ground truth perturbed by smooth noise, probes are
    drawn from pixels where the probe interval crosses no kink.
    """
    from . import loss as loss_mod
    from .camera import scale_camera
    from .numerics import decimate, downsample

    spec = scene.canonical_scene()
    views = scene.render_scene(spec)
    gt = decimate(views[0].depth.depth, scale)
    ref = scale_camera(views[0].camera, scale)
    srcs = [(downsample(v.image, scale), scale_camera(v.camera, scale)) for v in views[1:]]
    rng = np.random.default_rng(seed)
    H, W = gt.shape
    yy, xx = np.mgrid[0:H, 0:W]
    pred = gt + 1.5 * np.sin(xx / 7.0 + rng.uniform(0, 6)) * np.cos(yy / 5.0 + rng.uniform(0, 6))
    pred += rng.normal(0.0, 0.3, size=gt.shape)
    ok = loss_mod.kink_free_pixels(pred, gt, ref, srcs, step)
    cand = np.argwhere(ok)
    if len(cand) < probes:
        raise RuntimeError(f"only {len(cand)} kink-free pixels available")
    pick = cand[rng.choice(len(cand), size=probes, replace=False)]

    def fn(d):
        return loss_mod.is_loss(d, gt, ref, srcs)

    err = loss_mod.finite_diff_check(fn, pred, [tuple(p) for p in pick], step)
    return err, probes, int((~ok).sum())


def cmd_gradcheck(args) -> int:
    t0 = time.perf_counter()
    err, n, excluded = gradcheck_suite(args.probes, args.step, args.seed)
    ok = err < args.tol
    print(f"probes={n} step={args.step:g} excluded_pixels={excluded}")
    print(f"max relative error {err:.3e} ({'PASS' if ok else 'FAIL'} at tol {args.tol:g}), {time.perf_counter() - t0:.1f}s")
    return 0 if ok else 1


# ---------------------------------------------------------------- ablate


def ablation_table(preset: str = "canonical", tau: float = 1.0, base: PipelineConfig | None = None,
                   spacing: float = 0.5, seed: int = 0, height: int = 256, width: int = 320):
    """Rows of (adia, is_loss, gde, loss, accuracy, completeness, overall) over the 2^3 toggles.

    The image-synthesis loss only enters the reported loss: with fixed
    filters nothing is trained, so it cannot change the depth maps.
    """
    base = base or PipelineConfig()
    on_mode = base.adia_mode if base.adia_mode != "off" else "literal"
    spec = scene.PRESETS[preset](height=height, width=width, seed=seed)
    views = scene.render_scene(spec)
    gt_surface = scene.sample_surface(spec, spacing)
    cams = [v.camera for v in views]
    cache = {}
    rows = []
    for adia, is_on, gde_on in itertools.product((False, True), repeat=3):
        cfg = base.replace(adia_mode=on_mode if adia else "off", is_loss=is_on, gde=gde_on)
        if (adia, gde_on) not in cache:
            depths, confs, ref_stages, ref_views = [], [], None, None
            for i, v in enumerate(views):
                others = [(w.image, w.camera) for j, w in enumerate(views) if j != i][: cfg.n_views - 1]
                vs = pipeline.ViewSet(v.image, v.camera, others)
                res = pipeline.run_cascade(vs, cfg)
                depths.append(res.depth.depth)
                confs.append(res.depth.confidence)
                if i == 0:
                    ref_stages, ref_views = [s.depth.depth for s in res.stages], vs
            filt = fe.filter_depths(depths, cams, confs, cfg.conf_min, cfg.reproj_max,
                                    cfg.rel_depth_max, cfg.min_consistent)
            rep = fe.evaluate(fe.fuse_points(filt, cams, voxel=cfg.voxel), gt_surface, tau)
            cache[(adia, gde_on)] = (ref_stages, ref_views, rep)
        ref_stages, ref_views, rep = cache[(adia, gde_on)]
        # training loss of the reference view's three stage outputs
        loss = pipeline.stage_losses(ref_stages, ref_views, views[0].depth.depth, cfg).total
        rows.append((adia, is_on, gde_on, loss, rep.accuracy, rep.completeness, rep.overall))
    return rows


def format_table(rows) -> str:
    head = f"{'ADIA':>5} {'IS':>4} {'GDE':>4} {'loss':>10} {'Acc':>9} {'Comp':>9} {'Overall':>9}"
    out = [head, "-" * len(head)]
    yn = {True: "on", False: "off"}
    for adia, is_on, gde_on, loss, acc, comp, overall in rows:
        out.append(f"{yn[adia]:>5} {yn[is_on]:>4} {yn[gde_on]:>4} {loss:>10.4f} {acc:>9.4f} {comp:>9.4f} {overall:>9.4f}")
    return "\n".join(out)


def cmd_ablate(args) -> int:
    cfg = _config(args)
    t0 = time.perf_counter()
    rows = ablation_table(args.preset, args.tau, cfg, seed=args.seed, height=args.height, width=args.width)
    print(format_table(rows))
    print(f"({time.perf_counter() - t0:.0f}s; the IS loss changes the loss column only, nothing is trained)")
    return 0


# ---------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cascade-mvs", description="Cascaded plane-sweep multi-view stereo.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="render a synthetic dataset with ground truth")
    s.add_argument("--preset", choices=sorted(scene.PRESETS), default="canonical")
    s.add_argument("--out", required=True)
    s.add_argument("--height", type=int, default=256)
    s.add_argument("--width", type=int, default=320)
    s.add_argument("--views", type=int, default=4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--gt-spacing", type=float, default=0.5, help="spacing of the sampled ground-truth surface")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("depth", help="estimate a depth map per view")
    s.add_argument("data")
    s.add_argument("--out", required=True)
    s.add_argument("--views", type=int, nargs="*", help="reference view ids (default: all)")
    s.add_argument("--jobs", type=int, help="worker processes, one view each")
    _add_config_flags(s)
    s.set_defaults(func=cmd_depth)

    s = sub.add_parser("fuse", help="filter depth maps and fuse them into a PLY cloud")
    s.add_argument("data")
    s.add_argument("--depth", required=True, help="output directory of the depth command")
    s.add_argument("--out", required=True)
    s.add_argument("--ascii", action="store_true")
    s.add_argument("--voxel", type=float)
    s.add_argument("--conf-min", type=float)
    _add_config_flags(s)
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("eval", help="score a PLY reconstruction against a ground-truth PLY")
    s.add_argument("recon")
    s.add_argument("gt")
    s.add_argument("--tau", type=float, default=1.0)
    s.add_argument("--dist-cap", type=float)
    s.add_argument("--out", help="also write key=value results here")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="finite-difference check of the image-synthesis loss gradient")
    s.add_argument("--probes", type=int, default=100)
    s.add_argument("--step", type=float, default=1e-2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tol", type=float, default=1e-3)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("ablate", help="ADIA x IS x GDE toggle grid on a synthetic scene")
    s.add_argument("--preset", choices=sorted(scene.PRESETS), default="canonical")
    s.add_argument("--tau", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--height", type=int, default=256)
    s.add_argument("--width", type=int, default=320)
    _add_config_flags(s)
    s.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (formats.FormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort report
        if args.verbose:
            raise
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
