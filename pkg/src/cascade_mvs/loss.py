"""Depth L1 loss, image-synthesis loss and their combination, with analytic gradients.

Views are synthesised on the reference grid by inverse warping: each
reference pixel is reprojected into the source with a depth map and the
source image is sampled there. The image-synthesis loss compares the view
synthesised from the predicted depth with the one synthesised from ground
truth, over pixels valid in both.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import camera as cam_mod
from .camera import Camera
from .numerics import as_image, sample_many, sample_many_grad


@dataclass
class LossBreakdown:
    l1: list[float]
    image_synthesis: list[float]
    lambda_l1: float
    lambda_is: float
    total: float
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        out = {"total": self.total, "lambda_l1": self.lambda_l1, "lambda_is": self.lambda_is}
        for a, (l1, is_) in enumerate(zip(self.l1, self.image_synthesis), start=1):
            out[f"stage{a}_l1"] = l1
            out[f"stage{a}_is"] = is_
        return out


def _warp_coords(ref: Camera, src: Camera, depth: np.ndarray):
    H, W = depth.shape
    xs, ys = cam_mod.pixel_grid(H, W)
    positive = depth > 0
    d = np.where(positive, depth, 1.0)
    A, b = cam_mod.relative_transform(ref, src)
    u, v, z = cam_mod.reproject_raw(ref, src, xs, ys, d, A, b)
    front = positive & (z > 0)
    return xs, ys, d, u, v, front, A, b


def synthesize_view(src_img, ref: Camera, src: Camera, depth) -> tuple[np.ndarray, np.ndarray]:
    """Source image resampled onto the reference grid through ``depth``.

    Returns ``(image (H, W, C) float64, mask (H, W) bool)``; masked pixels are 0.
    """
    src_img = as_image(src_img)
    depth = np.asarray(depth, dtype=np.float64)
    _, _, _, u, v, front, _, _ = _warp_coords(ref, src, depth)
    vals, valid = sample_many(src_img, np.where(front, u, -1.0), v)
    valid &= front
    vals[~valid] = 0.0
    return vals, valid


def synthesize_view_grad(src_img, ref: Camera, src: Camera, depth) -> np.ndarray:
    """d(synthesised image)/d(depth) per pixel and channel, (H, W, C)."""
    src_img = as_image(src_img)
    depth = np.asarray(depth, dtype=np.float64)
    xs, ys, d, u, v, front, A, b = _warp_coords(ref, src, depth)
    gx, gy = sample_many_grad(src_img, np.where(front, u, -1.0), v)
    du, dv = cam_mod.reproject_ddepth(ref, src, xs, ys, d, A, b)
    g = gx * du[..., None] + gy * dv[..., None]
    g[~front] = 0.0
    return g


def compute_mask(pred_mask, gt_mask, gt_valid) -> np.ndarray:
    """Pixels valid in both syntheses and with valid ground-truth depth."""
    return np.asarray(pred_mask, bool) & np.asarray(gt_mask, bool) & np.asarray(gt_valid, bool)


def is_loss(pred_depth, gt_depth, ref: Camera, sources, gt_valid=None) -> tuple[float, np.ndarray]:
    """Image-synthesis loss and its gradient w.r.t. ``pred_depth``.

    ``sources`` is a list of ``(image, camera)`` at the depth map's resolution.
    Each view contributes its masked mean absolute difference (summed over
    channels); views with an empty mask contribute 0. Ground-truth synthesis
    and the mask are constants for the gradient.
    """
    if len(sources) == 0:
        raise ValueError("need at least one source view")
    pred = np.asarray(pred_depth, dtype=np.float64)
    gt = np.asarray(gt_depth, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError("prediction and ground truth shapes differ")
    if gt_valid is None:
        gt_valid = gt > 0
    value = 0.0
    grad = np.zeros_like(pred)
    for img, cam in sources:
        synth, m_pred = synthesize_view(img, ref, cam, pred)
        truth, m_gt = synthesize_view(img, ref, cam, gt)
        mask = compute_mask(m_pred, m_gt, gt_valid)
        m = int(mask.sum())
        if m == 0:
            continue
        diff = synth - truth
        value += float(np.abs(diff[mask]).sum()) / m
        dsyn = synthesize_view_grad(img, ref, cam, pred)
        grad += np.where(mask, (np.sign(diff) * dsyn).sum(axis=-1), 0.0) / m
    return value, grad


def l1_loss(pred, gt, valid=None) -> tuple[float, np.ndarray]:
    """Mean absolute depth error over ``valid`` (default: gt > 0) and its subgradient.

    No valid pixels gives 0 by convention.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError("prediction and ground truth shapes differ")
    valid = gt > 0 if valid is None else np.asarray(valid, bool)
    m = int(valid.sum())
    if m == 0:
        return 0.0, np.zeros_like(pred)
    diff = pred - gt
    return float(np.abs(diff[valid]).sum()) / m, np.where(valid, np.sign(diff), 0.0) / m


def total_loss(stages, lambda_l1: float = 1.0, lambda_is: float = 0.1) -> LossBreakdown:
    """Weighted sum over the three stages of ``lambda_l1 * L1 + lambda_is * L_IS``."""
    stages = list(stages)
    if len(stages) != 3:
        raise ValueError(f"expected 3 stages, got {len(stages)}")
    l1 = [float(s[0]) for s in stages]
    is_ = [float(s[1]) for s in stages]
    total = 0.0
    for a in range(3):
        total += lambda_l1 * l1[a] + lambda_is * is_[a]
    return LossBreakdown(l1, is_, lambda_l1, lambda_is, total)


def finite_diff_check(loss_fn, depth, probes, step: float = 1e-2) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``loss_fn(depth) -> (value, grad)``; ``probes`` are (row, col) pixels. The
    denominator is ``max(|analytic|, 1e-8)``.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    depth = np.array(depth, dtype=np.float64)
    _, grad = loss_fn(depth)
    worst = 0.0
    for r, c in probes:
        plus = depth.copy()
        plus[r, c] += step
        minus = depth.copy()
        minus[r, c] -= step
        fd = (loss_fn(plus)[0] - loss_fn(minus)[0]) / (2.0 * step)
        an = grad[r, c]
        worst = max(worst, abs(fd - an) / max(abs(an), 1e-8))
    return worst


def kink_free_pixels(pred_depth, gt_depth, ref: Camera, sources, step: float, margin: float = 1e-3) -> np.ndarray:
    """Pixels where a +/- ``step`` depth probe crosses no non-differentiable point.

    Excludes pixels whose warped coordinate is within ``max(margin, travel)``
    of a bilinear lattice line (travel = coordinate change over the probe),
    pixels whose per-channel difference could change sign over the probe, and
    pixels whose validity could change.
    """
    pred = np.asarray(pred_depth, dtype=np.float64)
    gt = np.asarray(gt_depth, dtype=np.float64)
    ok = gt > 0
    for img, cam in sources:
        img = as_image(img)
        H, W = img.shape[:2]
        xs, ys, d, u, v, front, A, b = _warp_coords(ref, cam, pred)
        du, dv = cam_mod.reproject_ddepth(ref, cam, xs, ys, d, A, b)
        tu = np.maximum(margin, 2.0 * np.abs(du) * step)
        tv = np.maximum(margin, 2.0 * np.abs(dv) * step)
        fu = np.abs(u - np.rint(u))
        fv = np.abs(v - np.rint(v))
        inside = (u > 1 + tu) & (u < W - 2 - tu) & (v > 1 + tv) & (v < H - 2 - tv)
        ok &= front & inside & (fu > tu) & (fv > tv)
        synth, m_pred = synthesize_view(img, ref, cam, pred)
        truth, m_gt = synthesize_view(img, ref, cam, gt)
        ok &= m_pred & m_gt
        dsyn = synthesize_view_grad(img, ref, cam, pred)
        ok &= np.all(np.abs(synth - truth) > 2.0 * np.abs(dsyn) * step + 1e-9, axis=-1)
    return ok
