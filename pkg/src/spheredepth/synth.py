"""
Procedural scenes with closed-form depth, plus oracle features and
probabilities that stand in for trained networks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .cddc import DepthRange
from .sphere_geom import ErpGeometry, PatchLayout, direction_vectors, layout_from_table, make_layout, pixel_angles

__all__ = [
    "PRNG_NAME",
    "ConstantSphere",
    "AxisBox",
    "VoronoiCells",
    "SceneSpec",
    "ray_depth",
    "render_depth",
    "voronoi_labels",
    "voronoi_margin",
    "oracle_direction_features",
    "oracle_patch_vectors",
    "oracle_onehot_probability",
    "scene_from_config",
]

PRNG_NAME = "numpy.random.PCG64"


@dataclass(frozen=True)
class ConstantSphere:
    depth: float


@dataclass(frozen=True)
class AxisBox:
    """Axis-aligned box centered on the camera."""

    half_extents: tuple[float, float, float]


@dataclass(frozen=True)
class VoronoiCells:
    """Piecewise-constant depth: each direction takes the depth of its nearest layout center."""

    layout: PatchLayout
    depths: tuple[float, ...]

    def __post_init__(self):
        if len(self.depths) != self.layout.n:
            raise ValueError(f"{len(self.depths)} cell depths for {self.layout.n} cells")


Scene = Union[ConstantSphere, AxisBox, VoronoiCells]


@dataclass(frozen=True)
class SceneSpec:
    scene: Scene
    depth_range: DepthRange = field(default_factory=lambda: DepthRange(0.0, 10.0))
    seed: int = 0

    def __post_init__(self):
        lo, hi = _depth_bounds(self.scene)
        r = self.depth_range
        if not (r.d_min <= lo and hi <= r.d_max):
            raise ValueError(f"scene depths [{lo}, {hi}] fall outside [{r.d_min}, {r.d_max}]")


def _depth_bounds(scene: Scene) -> tuple[float, float]:
    if isinstance(scene, ConstantSphere):
        return scene.depth, scene.depth
    if isinstance(scene, AxisBox):
        h = np.asarray(scene.half_extents, dtype=np.float64)
        return float(h.min()), float(np.linalg.norm(h))
    return float(min(scene.depths)), float(max(scene.depths))


def voronoi_labels(dirs: np.ndarray, layout: PatchLayout) -> np.ndarray:
    """Nearest layout center (largest dot product) for each unit direction."""
    return np.argmax(dirs @ layout.center_vectors().T, axis=-1)


def voronoi_margin(dirs: np.ndarray, layout: PatchLayout) -> np.ndarray:
    """Angular gap between the second-nearest and nearest center, radians."""
    ang = np.arccos(np.clip(dirs @ layout.center_vectors().T, -1.0, 1.0))
    part = np.sort(ang, axis=-1)
    return part[..., 1] - part[..., 0]


def ray_depth(scene: Scene, dirs: np.ndarray) -> np.ndarray:
    """Distance from the sphere center to the scene along unit directions (..., 3)."""
    dirs = np.asarray(dirs, dtype=np.float64)
    if isinstance(scene, ConstantSphere):
        return np.full(dirs.shape[:-1], float(scene.depth))
    if isinstance(scene, AxisBox):
        h = np.asarray(scene.half_extents, dtype=np.float64)
        with np.errstate(divide="ignore"):
            t = h / np.abs(dirs)
        return np.min(t, axis=-1)
    if isinstance(scene, VoronoiCells):
        return np.asarray(scene.depths, dtype=np.float64)[voronoi_labels(dirs, scene.layout)]
    raise TypeError(f"unknown scene type {type(scene).__name__}")


def render_depth(spec: SceneSpec | Scene, geom: ErpGeometry) -> np.ndarray:
    """Depth along each ERP pixel-center ray."""
    scene = spec.scene if isinstance(spec, SceneSpec) else spec
    return ray_depth(scene, direction_vectors(*pixel_angles(geom)))


def oracle_direction_features(geom: ErpGeometry) -> np.ndarray:
    """(h, w, 3) unit view directions; cosine similarity becomes cos(angular distance)."""
    return direction_vectors(*pixel_angles(geom))


def oracle_patch_vectors(layout: PatchLayout) -> np.ndarray:
    return layout.center_vectors()


def oracle_onehot_probability(gt: np.ndarray, centers) -> np.ndarray:
    """One-hot at the bin center nearest to the ground truth (lowest bin on ties).

    ``centers`` is a global (B,) vector or a per-pixel (h, w, B) map.
    """
    gt = np.asarray(gt, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    nearest = np.argmin(np.abs(gt[..., None] - centers), axis=-1)
    bins = centers.shape[-1]
    out = np.zeros(gt.shape + (bins,), dtype=np.float32)
    np.put_along_axis(out, nearest[..., None], 1.0, axis=-1)
    return out


def _layout_from_config(cfg: dict) -> PatchLayout:
    fov = math.radians(float(cfg.get("fov_deg", 80.0)))
    size = int(cfg.get("patch_size", 128))
    if "latitudes_deg" in cfg:
        return layout_from_table(cfg["latitudes_deg"], cfg["counts"], fov, size)
    return make_layout(int(cfg.get("n", 18)), fov, size)


def scene_from_config(cfg: dict, layout_cfg: dict | None = None) -> SceneSpec:
    """Build a SceneSpec from the ``[scene]`` table of a config file.

    ``kind`` is one of ``constant`` (``depth``), ``box`` (``half_extents``) or
    ``voronoi`` (optional ``depths``; drawn uniformly inside the range from
    ``seed`` when absent; cells follow ``layout_cfg``).
    """
    kind = cfg.get("kind", "constant")
    seed = int(cfg.get("seed", 0))
    d_min, d_max = cfg.get("range", (0.0, 10.0))
    depth_range = DepthRange(float(d_min), float(d_max))
    if kind == "constant":
        scene: Scene = ConstantSphere(float(cfg.get("depth", 3.0)))
    elif kind == "box":
        scene = AxisBox(tuple(float(h) for h in cfg.get("half_extents", (2.0, 2.0, 2.0))))
    elif kind == "voronoi":
        layout = _layout_from_config(layout_cfg or {})
        depths = cfg.get("depths")
        if depths is None:
            rng = np.random.default_rng(seed)
            margin = 0.05 * depth_range.span
            depths = rng.uniform(depth_range.d_min + margin, depth_range.d_max - margin, size=layout.n)
        scene = VoronoiCells(layout, tuple(float(d) for d in depths))
    else:
        raise ValueError(f"unknown scene kind {kind!r}")
    return SceneSpec(scene, depth_range, seed)
