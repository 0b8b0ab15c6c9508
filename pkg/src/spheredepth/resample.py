"""
Moving values between ERP grids and tangent patches.

Grids are plain numpy arrays shaped (H, W) or (H, W, C), row 0 = north.
Continuous pixel coordinates put the center of texel (i, j) at (j + 0.5, i + 0.5).
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .sphere_geom import (
    HEMISPHERE_EPS,
    ErpGeometry,
    PatchLayout,
    gnomonic_inverse,
    gnomonic_project,
    pixel_angles,
    sphere_to_erp,
)

__all__ = [
    "FusionWeighting",
    "TangentPatchSet",
    "bilinear_sample",
    "patch_tangent_grid",
    "extract_patches",
    "patch_footprints",
    "geometric_fuse",
    "coverage_count",
    "upsample_bilinear",
    "renormalize",
]


class FusionWeighting(enum.Enum):
    UNIFORM = "uniform"
    COSINE = "cosine"


@dataclass(frozen=True)
class TangentPatchSet:
    layout: PatchLayout
    patches: np.ndarray  # (N, P, P) or (N, P, P, C)

    def __post_init__(self):
        p = self.layout.patch_size
        if self.patches.ndim not in (3, 4) or self.patches.shape[:3] != (self.layout.n, p, p):
            raise ValueError(
                f"patches shape {self.patches.shape} does not match layout "
                f"(N={self.layout.n}, patch_size={p})"
            )

    def __len__(self):
        return self.layout.n

    @property
    def channels(self) -> int:
        return 1 if self.patches.ndim == 3 else self.patches.shape[3]


def bilinear_sample(grid: np.ndarray, x, y, wrap_x: bool = False) -> np.ndarray:
    """Bilinear interpolation of ``grid`` at continuous pixel coords (x, y).

    Rows are always clamped. Columns wrap around when ``wrap_x`` is set (ERP
    seam), otherwise they are clamped as well. Extra trailing channels are
    carried along.
    """
    grid = np.asarray(grid)
    h, w = grid.shape[:2]
    if h < 1 or w < 1:
        raise ValueError("cannot sample an empty grid")
    fx = np.asarray(x, dtype=np.float64) - 0.5
    fy = np.asarray(y, dtype=np.float64) - 0.5
    x0 = np.floor(fx)
    y0 = np.floor(fy)
    tx = fx - x0
    ty = fy - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    x1 = x0 + 1
    y1 = y0 + 1
    if wrap_x:
        x0 %= w
        x1 %= w
    else:
        x0 = np.clip(x0, 0, w - 1)
        x1 = np.clip(x1, 0, w - 1)
    y0 = np.clip(y0, 0, h - 1)
    y1 = np.clip(y1, 0, h - 1)
    if grid.ndim == 3:
        tx = tx[..., None]
        ty = ty[..., None]
    g = grid.astype(np.float64, copy=False)
    # a + t(b - a) returns a bit-exactly when a == b, so constants survive
    a, b = g[y0, x0], g[y0, x1]
    top = a + tx * (b - a)
    a, b = g[y1, x0], g[y1, x1]
    bottom = a + tx * (b - a)
    return top + ty * (bottom - top)


def patch_tangent_grid(layout: PatchLayout):
    """Tangent-plane (u, v) at every patch pixel center, each (P, P); v points up."""
    p = layout.patch_size
    t = layout.half_extent
    k = (2.0 * (np.arange(p, dtype=np.float64) + 0.5) / p - 1.0) * t
    u = np.broadcast_to(k, (p, p))
    v = np.broadcast_to(-k[:, None], (p, p))
    return u, v


def _map(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def extract_patches(src: np.ndarray, layout: PatchLayout, workers: int | None = None) -> TangentPatchSet:
    """Sample every tangent patch of ``layout`` from the ERP grid ``src``."""
    src = np.asarray(src, dtype=np.float64)
    geom = ErpGeometry.from_shape(src.shape)
    u, v = patch_tangent_grid(layout)

    def one(center):
        theta, phi = gnomonic_inverse(u, v, center)
        x, y = sphere_to_erp(theta, phi, geom)
        return bilinear_sample(src, x, y, wrap_x=True)

    patches = np.stack(_map(one, layout.centers, workers))
    return TangentPatchSet(layout, patches)


def patch_footprints(layout: PatchLayout, geom: ErpGeometry):
    """Yield per patch: (mask, x, y, cos_c) over ERP pixel centers.

    ``mask`` marks pixels whose direction falls inside the patch square; x, y are
    the continuous patch-pixel coordinates for the masked pixels.
    """
    theta, phi = pixel_angles(geom)
    t = layout.half_extent
    p = layout.patch_size
    for center in layout.centers:
        u, v, cos_c = gnomonic_project(theta, phi, center)
        with np.errstate(invalid="ignore"):
            mask = (cos_c > HEMISPHERE_EPS) & (np.abs(u) <= t) & (np.abs(v) <= t)
        x = (u[mask] / t + 1.0) * (p / 2.0)
        y = (1.0 - v[mask] / t) * (p / 2.0)
        yield mask, x, y, cos_c[mask]


def geometric_fuse(
    patches: TangentPatchSet,
    geom: ErpGeometry,
    weighting: FusionWeighting = FusionWeighting.COSINE,
    workers: int | None = None,
) -> np.ndarray:
    """Re-project overlapping patches to ERP by weighted averaging.

    Cosine weighting uses cos(c)^2 where c is the angle from the patch center;
    uniform weighting gives every covering patch weight 1. Pixels covered by no
    patch get the invalid sentinel 0.0.
    """
    weighting = FusionWeighting(weighting)
    layout = patches.layout
    extra = patches.patches.shape[3:]
    footprints = list(patch_footprints(layout, geom))

    def one(n):
        mask, x, y, cos_c = footprints[n]
        vals = bilinear_sample(patches.patches[n], x, y)
        wts = cos_c**2 if weighting is FusionWeighting.COSINE else np.ones_like(cos_c)
        return vals, wts

    results = _map(one, range(layout.n), workers)
    # average deviations from the first covering sample, so single-cover pixels
    # and constant inputs come out bit-exact
    ref = np.zeros(geom.shape + extra, dtype=np.float64)
    seen = np.zeros(geom.shape, dtype=bool)
    for (mask, *_), (vals, _) in zip(footprints, results):
        first = ~seen[mask]
        idx = tuple(a[first] for a in np.nonzero(mask))
        ref[idx] = vals[first]
        seen |= mask
    num = np.zeros_like(ref)
    den = np.zeros(geom.shape, dtype=np.float64)
    for (mask, *_), (vals, wts) in zip(footprints, results):
        num[mask] += (vals - ref[mask]) * (wts[:, None] if extra else wts)
        den[mask] += wts
    out = np.zeros_like(num)
    covered = den > 0
    out[covered] = ref[covered] + num[covered] / (den[covered][:, None] if extra else den[covered])
    return out


def coverage_count(layout: PatchLayout, geom: ErpGeometry) -> np.ndarray:
    """Number of patches covering each ERP pixel."""
    count = np.zeros(geom.shape, dtype=np.int32)
    for mask, *_ in patch_footprints(layout, geom):
        count += mask
    return count


def upsample_bilinear(src: np.ndarray, factor: int = 2) -> np.ndarray:
    """Integer-factor bilinear upsampling of an ERP grid (longitude wraps)."""
    src = np.asarray(src, dtype=np.float64)
    if factor < 1 or int(factor) != factor:
        raise ValueError(f"factor must be a positive integer, got {factor}")
    h, w = src.shape[:2]
    xs = (np.arange(w * factor, dtype=np.float64) + 0.5) / factor
    ys = (np.arange(h * factor, dtype=np.float64) + 0.5) / factor
    x, y = np.meshgrid(xs, ys)
    return bilinear_sample(src, x, y, wrap_x=True)


def renormalize(prob: np.ndarray) -> np.ndarray:
    """Rescale the last axis to sum to one (probability maps after resampling)."""
    prob = np.clip(prob, 0.0, None)
    return prob / np.sum(prob, axis=-1, keepdims=True)
