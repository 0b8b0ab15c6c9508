"""
End-to-end desk-scale run: render a scene, align oracle features, predict
holistic and regional depth from histograms, fuse, and score.

``mode="oracle"`` uses one-hot probabilities taken from the ground truth, so
the only error left is bin quantization. ``mode="random"`` drives the full
range-attention path with seeded random query/head tensors instead; its
depth is valid but carries no information about the scene.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cddc import (
    DEFAULT_BINS,
    DEFAULT_EPSILON,
    DepthHistogram,
    DepthRange,
    bin_centers,
    depth_from_distribution,
    holistic_depth,
    random_head,
    random_query,
    regional_center_map,
    regional_depth,
    uniform_histogram,
)
from .distfit import FitConfig, fit_bins
from .fusion_losses import FusionWeights, LossConfig, adaptive_fuse, chamfer_samples, total_loss
from .metrics import MetricReport, evaluate
from .resample import upsample_bilinear
from .sfa import IndexMap, build_index_map
from .sphere_geom import ErpGeometry, PatchLayout, direction_vectors, pixel_angles
from .synth import (
    PRNG_NAME,
    SceneSpec,
    VoronoiCells,
    oracle_direction_features,
    oracle_onehot_probability,
    oracle_patch_vectors,
    render_depth,
    voronoi_margin,
)

__all__ = [
    "PipelineConfig",
    "PipelineResult",
    "logits_for_widths",
    "anchored_histogram",
    "interior_mask",
    "run_pipeline",
]


@dataclass(frozen=True)
class PipelineConfig:
    bins: int = DEFAULT_BINS
    epsilon: float = DEFAULT_EPSILON
    mode: str = "oracle"
    holistic_bins: str = "uniform"  # or "fit"
    c1: int = 64
    c2: int = 32
    fusion: FusionWeights = field(default_factory=FusionWeights)
    loss: LossConfig = field(default_factory=LossConfig)
    fit: FitConfig | None = None


@dataclass
class PipelineResult:
    gt: np.ndarray
    holistic: np.ndarray
    regional: np.ndarray
    fused: np.ndarray
    index_map: IndexMap
    holistic_hist: DepthHistogram
    patch_hists: list[DepthHistogram]
    reports: dict[str, MetricReport]
    loss: float
    seed: int
    prng: str = PRNG_NAME
    interior: np.ndarray | None = None


def logits_for_widths(widths, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Nonnegative logits whose normalized (logit + eps) reproduce ``widths``."""
    widths = np.asarray(widths, dtype=np.float64)
    scale = epsilon / widths.min()
    return np.maximum(widths * scale - epsilon, 0.0)


def anchored_histogram(
    anchor: float, bins: int, depth_range: DepthRange, epsilon: float = DEFAULT_EPSILON
) -> DepthHistogram:
    """Near-uniform histogram with one bin centered exactly on ``anchor``.

    The anchor bin has half-width min(span / 2B, distance to the range ends);
    the rest of the range is split evenly on either side.
    """
    lo, hi = depth_range.d_min, depth_range.d_max
    if not lo < anchor < hi:
        raise ValueError(f"anchor {anchor} must lie strictly inside ({lo}, {hi})")
    step = depth_range.span / bins
    half = min(step / 2, anchor - lo, hi - anchor)
    left_len = anchor - half - lo
    right_len = hi - (anchor + half)
    n_left = int(round(left_len / step)) if left_len > 0 else 0
    n_left = min(max(n_left, 1 if left_len > 0 else 0), bins - 1 - (1 if right_len > 0 else 0))
    n_right = bins - 1 - n_left
    if right_len > 0 and n_right == 0 or right_len <= 0 and n_right > 0:
        raise ValueError(f"cannot anchor a {bins}-bin histogram at {anchor}")
    widths = np.concatenate(
        [
            np.full(n_left, left_len / n_left) if n_left else [],
            [2 * half],
            np.full(n_right, right_len / n_right) if n_right else [],
        ]
    )
    return bin_centers(logits_for_widths(widths, epsilon), depth_range, epsilon)


def interior_mask(layout: PatchLayout, geom: ErpGeometry, feature_geom: ErpGeometry) -> np.ndarray:
    """Pixels whose Voronoi cell is unambiguous at feature resolution.

    The angular gap to the second-nearest center must exceed four feature
    pixels, which absorbs both the resolution change and the bilinear stencil.
    """
    dirs = direction_vectors(*pixel_angles(geom))
    return voronoi_margin(dirs, layout) > 4.0 * math.pi / feature_geom.height


def _patch_anchors(gt: np.ndarray, index_map: IndexMap, spec: SceneSpec) -> np.ndarray:
    if isinstance(spec.scene, VoronoiCells) and spec.scene.layout.n == index_map.n_patches:
        return np.asarray(spec.scene.depths, dtype=np.float64)
    # nearest-neighbour lift of the assignment to full resolution
    factor = gt.shape[0] // index_map.shape[0]
    labels = np.repeat(np.repeat(index_map.assignment, factor, axis=0), factor, axis=1)
    anchors = np.empty(index_map.n_patches)
    for n in range(index_map.n_patches):
        vals = gt[(labels == n) & (gt > 0)]
        anchors[n] = np.median(vals) if vals.size else np.median(gt[gt > 0])
    return anchors


def run_pipeline(
    spec: SceneSpec,
    geom: ErpGeometry,
    layout: PatchLayout,
    cfg: PipelineConfig = PipelineConfig(),
) -> PipelineResult:
    rng = np.random.default_rng(spec.seed)
    depth_range = spec.depth_range
    gt = render_depth(spec, geom)
    feature_geom = geom.halved()

    features = oracle_direction_features(feature_geom)
    vectors = oracle_patch_vectors(layout)
    index_map = build_index_map(features, vectors)

    if cfg.holistic_bins == "fit":
        fit_cfg = cfg.fit or FitConfig(bins=cfg.bins, epsilon=cfg.epsilon)
        holistic_hist = fit_bins(chamfer_samples(gt, cfg.loss.chamfer_stride), depth_range, fit_cfg, spec.seed).histogram
    elif cfg.holistic_bins == "uniform":
        holistic_hist = uniform_histogram(cfg.bins, depth_range)
    else:
        raise ValueError(f"unknown holistic bin mode {cfg.holistic_bins!r}")

    anchors = _patch_anchors(gt, index_map, spec)
    patch_hists = [anchored_histogram(a, cfg.bins, depth_range, cfg.epsilon) for a in anchors]

    if cfg.mode == "oracle":
        d_holistic = depth_from_distribution(oracle_onehot_probability(gt, holistic_hist.centers), holistic_hist.centers)
        centers = upsample_bilinear(regional_center_map(index_map, patch_hists), 2)
        d_regional = depth_from_distribution(oracle_onehot_probability(gt, centers), centers)
    elif cfg.mode == "random":
        embed = rng.normal(size=(3, cfg.c1))
        query = random_query(cfg.c2, cfg.c1, rng)
        head = random_head(cfg.bins, cfg.c2, rng)
        d_holistic = holistic_depth(features @ embed, query, head, holistic_hist, geom)
        d_regional = regional_depth(index_map, patch_hists, vectors @ embed, query, head, geom)
    else:
        raise ValueError(f"unknown pipeline mode {cfg.mode!r}")

    fused = adaptive_fuse(d_holistic, d_regional, cfg.fusion)
    reports = {
        "holistic": evaluate(d_holistic, gt),
        "regional": evaluate(d_regional, gt),
        "fused": evaluate(fused, gt),
    }
    interior = None
    if isinstance(spec.scene, VoronoiCells):
        interior = interior_mask(spec.scene.layout, geom, feature_geom)
    return PipelineResult(
        gt=gt,
        holistic=d_holistic,
        regional=d_regional,
        fused=fused,
        index_map=index_map,
        holistic_hist=holistic_hist,
        patch_hists=patch_hists,
        reports=reports,
        loss=total_loss(fused, gt, holistic_hist, cfg.loss),
        seed=spec.seed,
        interior=interior,
    )
