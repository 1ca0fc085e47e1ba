"""Three-stage coarse-to-fine depth estimation for one reference view."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import gde
from . import hypothesis as hyp
from . import loss as loss_mod
from . import matching
from .camera import Camera, scale_camera
from .config import PipelineConfig
from .hypothesis import DepthMap
from .numerics import as_image, decimate, downsample, resample_scaled

logger = logging.getLogger(__name__)


@dataclass
class StageOutput:
    stage: int
    scale: float
    depth: DepthMap
    hypotheses: np.ndarray
    uniform: np.ndarray | None = None
    probability: np.ndarray | None = None
    seconds: float = 0.0


@dataclass
class CascadeResult:
    depth: DepthMap
    stages: list[StageOutput]
    losses: loss_mod.LossBreakdown | None = None


@dataclass
class ViewSet:
    """A reference view and its sources, all at full resolution."""

    ref_image: np.ndarray
    ref_camera: Camera
    sources: list[tuple[np.ndarray, Camera]]
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.ref_image = as_image(self.ref_image)
        self.sources = [(as_image(img), cam) for img, cam in self.sources]
        if not self.sources:
            raise ValueError("need at least one source view")

    @property
    def shape(self) -> tuple[int, int]:
        return self.ref_image.shape[:2]

    def image_at(self, view: int, scale: float) -> np.ndarray:
        """View ``view`` (0 = reference) decimated to ``scale``."""
        key = ("img", view, scale)
        if key not in self._cache:
            img = self.ref_image if view == 0 else self.sources[view - 1][0]
            self._cache[key] = downsample(img, scale)
        return self._cache[key]

    def features_at(self, view: int, scale: float) -> np.ndarray:
        key = ("feat", view, scale)
        if key not in self._cache:
            self._cache[key] = matching.features_at_resolution(self.image_at(view, scale))
        return self._cache[key]

    def camera_at(self, view: int, scale: float) -> Camera:
        cam = self.ref_camera if view == 0 else self.sources[view - 1][1]
        return scale_camera(cam, scale)


def base_interval(cam: Camera, cfg: PipelineConfig) -> float:
    """Depth unit the stage intervals are multiples of."""
    if cfg.base_interval:
        return cfg.base_interval
    return (cam.depth_max - cam.depth_min) / (cfg.planes[0] * cfg.intervals[0])


@dataclass
class HypothesisPlan:
    planes: np.ndarray  # planes actually swept (n, H, W)
    uniform: np.ndarray  # the uniform grid they were derived from
    prior: tuple[np.ndarray, np.ndarray] | None = None  # upsampled (depth, sigma)


def stage_hypotheses(k: int, views: ViewSet, cfg: PipelineConfig, prev: StageOutput | None, shape) -> HypothesisPlan:
    """Hypothesis planes for stage ``k`` and the upsampled previous depth (None at stage 1)."""
    ref = views.ref_camera
    glob = (ref.depth_min, ref.depth_max)
    n = cfg.planes[k - 1]
    if k == 1:
        h = hyp.uniform_hypotheses(hyp.DepthRangeMap.constant(*glob, n, shape))
        return HypothesisPlan(h, h)
    if prev is None:
        raise ValueError(f"stage {k} needs the previous stage's output")
    factor = cfg.scales[k - 1] / cfg.scales[k - 2]
    d_prev = resample_scaled(prev.depth.depth, *shape, factor)[..., 0].astype(np.float64)
    s_prev = resample_scaled(prev.depth.sigma, *shape, factor)[..., 0].astype(np.float64)
    step = cfg.intervals[k - 1] * base_interval(ref, cfg)
    if cfg.adia_mode == "off":
        h = hyp.uniform_hypotheses(hyp.fixed_range(d_prev, 0.5 * n * step, glob, n))
        return HypothesisPlan(h, h, (d_prev, s_prev))
    rng = hyp.refine_range(d_prev, s_prev, cfg.lam, glob, n, step)
    h_uniform = hyp.uniform_hypotheses(rng)
    s_prev = np.maximum(s_prev, cfg.sigma_floor)
    offsets = hyp.adia_offsets(h_uniform, d_prev, s_prev, cfg.adia_mode)
    return HypothesisPlan(hyp.adia_hypotheses(h_uniform, rng.interval, offsets), h_uniform, (d_prev, s_prev))


def stage_features(k: int, views: ViewSet, cfg: PipelineConfig, prior) -> tuple[np.ndarray, list]:
    scale = cfg.scales[k - 1]
    ref_feat = views.features_at(0, scale)
    src_feats = [views.features_at(j + 1, scale) for j in range(len(views.sources))]
    if not cfg.gde or k == 1:
        return ref_feat, src_feats
    d_prev = prior[0]
    refined = gde.refine_depth(d_prev, views.image_at(0, scale))
    cam = views.ref_camera
    depth_feat = gde.depth_to_feature(refined, (cam.depth_min, cam.depth_max), ref_feat.shape[2])
    return gde.embed(ref_feat, depth_feat), [gde.embed(f) for f in src_feats]


def run_stage(k: int, views: ViewSet, cfg: PipelineConfig, prev: StageOutput | None = None) -> StageOutput:
    """Hypotheses -> warp -> variance cost -> smoothing -> probability -> depth, sigma, confidence."""
    if k not in (1, 2, 3):
        raise ValueError(f"stage must be 1, 2 or 3, got {k}")
    t0 = time.perf_counter()
    scale = cfg.scales[k - 1]
    shape = views.image_at(0, scale).shape[:2]
    plan = stage_hypotheses(k, views, cfg, prev, shape)
    h = plan.planes
    ref_feat, src_feats = stage_features(k, views, cfg, plan.prior)
    ref_cam = views.camera_at(0, scale)
    warped = [
        matching.warp_features(f, ref_cam, views.camera_at(j + 1, scale), h)
        for j, f in enumerate(src_feats)
    ]
    if cfg.gde and k > 1:
        cam = views.ref_camera
        plane_feat = gde.plane_embedding(h, (cam.depth_min, cam.depth_max), ref_feat.shape[2])
        warped = [(vol + plane_feat, mask) for vol, mask in warped]
    cost = matching.regularize(matching.variance_cost(ref_feat, warped))
    del warped
    prob = matching.cost_to_probability(cost, cfg.temperature)
    depth = hyp.regress_depth(h, prob)
    sigma = hyp.depth_variance(h, prob, depth)
    conf = matching.photometric_confidence(prob, depth, h)
    out = StageOutput(
        stage=k,
        scale=scale,
        depth=DepthMap(depth, sigma, conf),
        hypotheses=h,
        uniform=plan.uniform if cfg.retain_volumes else None,
        probability=prob if cfg.retain_volumes else None,
        seconds=time.perf_counter() - t0,
    )
    logger.debug("stage %d: %dx%d, %d planes, %.2fs", k, shape[0], shape[1], h.shape[0], out.seconds)
    return out


def stage_losses(stage_depths, views: ViewSet, gt_depth, cfg: PipelineConfig) -> loss_mod.LossBreakdown:
    """Per-stage L1 and image-synthesis losses against full-resolution ground truth."""
    gt_depth = np.asarray(gt_depth, dtype=np.float64)
    pairs = []
    notes = []
    for k, pred in enumerate(stage_depths, start=1):
        scale = cfg.scales[k - 1]
        gt = decimate(gt_depth, scale)
        pred = np.asarray(pred, dtype=np.float64)
        valid = gt > 0
        if not valid.any():
            notes.append(f"stage {k}: no valid ground-truth pixels")
        l1, _ = loss_mod.l1_loss(pred, gt, valid)
        if cfg.is_loss:
            ref_cam = views.camera_at(0, scale)
            srcs = [
                (views.image_at(j + 1, scale), views.camera_at(j + 1, scale))
                for j in range(len(views.sources))
            ]
            is_val, _ = loss_mod.is_loss(pred, gt, ref_cam, srcs, valid)
        else:
            is_val = 0.0
        pairs.append((l1, is_val))
    out = loss_mod.total_loss(pairs, cfg.lambda_l1, cfg.lambda_is if cfg.is_loss else 0.0)
    out.notes.extend(notes)
    return out


def run_cascade(views: ViewSet, cfg: PipelineConfig | None = None, gt_depth=None) -> CascadeResult:
    """Run stages 1 -> 3; losses are reported when ground truth is given."""
    cfg = cfg or PipelineConfig()
    stages = []
    prev = None
    for k in (1, 2, 3):
        prev = run_stage(k, views, cfg, prev)
        stages.append(prev)
    losses = None
    if gt_depth is not None:
        losses = stage_losses([s.depth.depth for s in stages], views, gt_depth, cfg)
    return CascadeResult(stages[-1].depth, stages, losses)
