"""
Depth as a distribution over adaptive histogram bins.

Bin widths come from nonnegative logits normalized over the depth range; a
per-pixel probability map blends the bin centers into a depth value. The
holistic path uses one histogram for the whole panorama, the regional path
lifts one histogram per tangent patch to ERP through the index map.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, GeometryMismatch
from .resample import upsample_bilinear
from .sfa import IndexMap, aggregate_by_index
from .sphere_geom import ErpGeometry

__all__ = [
    "DEFAULT_EPSILON",
    "DEFAULT_BINS",
    "DepthRange",
    "DepthHistogram",
    "ProjectionHead",
    "bin_centers",
    "uniform_histogram",
    "range_attention",
    "softmax",
    "probability_map",
    "depth_from_distribution",
    "regional_center_map",
    "reduce_regional_tokens",
    "regional_keymap",
    "holistic_depth",
    "regional_depth",
    "random_query",
    "random_head",
]

DEFAULT_EPSILON = 1e-3
DEFAULT_BINS = 100


@dataclass(frozen=True)
class DepthRange:
    d_min: float
    d_max: float

    def __post_init__(self):
        if not (0.0 <= self.d_min < self.d_max) or not np.isfinite(self.d_max):
            raise ValueError(f"depth range needs 0 <= d_min < d_max, got ({self.d_min}, {self.d_max})")

    @property
    def span(self) -> float:
        return self.d_max - self.d_min


@dataclass(frozen=True)
class DepthHistogram:
    widths: np.ndarray
    centers: np.ndarray
    depth_range: DepthRange

    def __post_init__(self):
        w = np.asarray(self.widths, dtype=np.float64)
        c = np.asarray(self.centers, dtype=np.float64)
        object.__setattr__(self, "widths", w)
        object.__setattr__(self, "centers", c)
        r = self.depth_range
        if w.ndim != 1 or w.shape != c.shape or w.size < 1:
            raise ValueError("widths and centers must be equal-length 1-D arrays")
        if np.any(w <= 0):
            raise ValueError("bin widths must be positive")
        if abs(w.sum() - r.span) > 1e-5 * r.span:
            raise ValueError(f"bin widths sum to {w.sum()}, expected {r.span}")
        if np.any(np.diff(c) <= 0):
            raise ValueError("bin centers must be strictly increasing")
        if c[0] <= r.d_min or c[-1] >= r.d_max:
            raise ValueError("bin centers must lie strictly inside the depth range")

    @property
    def bins(self) -> int:
        return self.widths.size


@dataclass(frozen=True)
class ProjectionHead:
    """1x1 convolution from range-attention channels to bin logits."""

    matrix: np.ndarray  # (B, C2)
    bias: np.ndarray  # (B,)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if m.ndim != 2 or b.shape != (m.shape[0],):
            raise DimensionMismatch(f"head matrix {m.shape} and bias {b.shape} disagree")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(b))):
            raise ValueError("projection head must be finite")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "bias", b)

    @property
    def bins(self) -> int:
        return self.matrix.shape[0]


def bin_centers(logits, depth_range: DepthRange, epsilon: float = DEFAULT_EPSILON) -> DepthHistogram:
    """Adaptive bins: widths proportional to (logit + eps), centers at bin midpoints."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.size < 2:
        raise ValueError("need a 1-D vector of at least two bin logits")
    if np.any(logits < 0) or not np.all(np.isfinite(logits)):
        raise ValueError("bin logits must be finite and nonnegative")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    shifted = logits + epsilon
    widths = depth_range.span * (shifted / shifted.sum())
    left_edges = np.concatenate(([0.0], np.cumsum(widths)[:-1]))
    centers = depth_range.d_min + (left_edges + widths / 2.0)
    return DepthHistogram(widths, centers, depth_range)


def uniform_histogram(bins: int, depth_range: DepthRange) -> DepthHistogram:
    return bin_centers(np.zeros(bins), depth_range)


def range_attention(keymap: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Dot product of every pixel feature (C1) with each query row -> (h, w, C2)."""
    keymap = np.asarray(keymap, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    if query.ndim != 2 or keymap.ndim != 3 or keymap.shape[2] != query.shape[1]:
        raise DimensionMismatch(f"keymap {keymap.shape} incompatible with query {query.shape}")
    return np.einsum("hwc,dc->hwd", keymap, query)


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def probability_map(attention: np.ndarray, head: ProjectionHead) -> np.ndarray:
    attention = np.asarray(attention, dtype=np.float64)
    if attention.ndim != 3 or attention.shape[2] != head.matrix.shape[1]:
        raise DimensionMismatch(
            f"attention map {attention.shape} incompatible with head {head.matrix.shape}"
        )
    return softmax(np.einsum("hwc,bc->hwb", attention, head.matrix) + head.bias)


def depth_from_distribution(prob: np.ndarray, centers) -> np.ndarray:
    """Probability-weighted sum of bin centers; centers are (B,) or per-pixel (h, w, B)."""
    prob = np.asarray(prob, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    if centers.ndim == 1:
        if prob.shape[-1] != centers.size:
            raise DimensionMismatch(f"{prob.shape[-1]} probabilities vs {centers.size} centers")
    elif centers.shape != prob.shape:
        raise DimensionMismatch(f"center map {centers.shape} vs probability map {prob.shape}")
    # same reduction path for global and per-pixel centers
    return np.sum(prob * centers, axis=-1)


def _check_histograms(hists: Sequence[DepthHistogram], n: int) -> None:
    if len(hists) != n:
        raise DimensionMismatch(f"{len(hists)} histograms for {n} patches")
    bins = {h.bins for h in hists}
    ranges = {h.depth_range for h in hists}
    if len(bins) != 1 or len(ranges) != 1:
        raise DimensionMismatch("per-patch histograms must share bin count and depth range")


def regional_center_map(index_map: IndexMap, hists: Sequence[DepthHistogram]) -> np.ndarray:
    """(h, w, B) map of the bin centers of each pixel's assigned patch."""
    _check_histograms(hists, index_map.n_patches)
    return aggregate_by_index(index_map, np.stack([h.centers for h in hists]))


def reduce_regional_tokens(tokens) -> np.ndarray:
    """Average each patch's selected tokens: (N, C2, C1) -> (N, C1)."""
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim != 3:
        raise DimensionMismatch(f"regional tokens must be (N, C2, C1), got {tokens.shape}")
    return tokens.mean(axis=1)


def regional_keymap(index_map: IndexMap, token_means) -> np.ndarray:
    return aggregate_by_index(index_map, token_means)


def _upsample_factor(shape, out_geom: ErpGeometry) -> int:
    h, w = shape[:2]
    factor = out_geom.height // h if h else 0
    if factor < 1 or (h * factor, w * factor) != out_geom.shape:
        raise GeometryMismatch(f"cannot upsample {h}x{w} to {out_geom.height}x{out_geom.width}")
    return factor


def holistic_depth(
    features: np.ndarray,
    query: np.ndarray,
    head: ProjectionHead,
    hist: DepthHistogram,
    out_geom: ErpGeometry,
) -> np.ndarray:
    """Holistic depth at full ERP resolution.

    The range-attention map is upsampled before the 1x1 head and softmax, so
    the probability map is produced directly at the output resolution.
    """
    attention = range_attention(features, query)
    attention = upsample_bilinear(attention, _upsample_factor(attention.shape, out_geom))
    return depth_from_distribution(probability_map(attention, head), hist.centers)


def regional_depth(
    index_map: IndexMap,
    hists: Sequence[DepthHistogram],
    token_means,
    query: np.ndarray,
    head: ProjectionHead,
    out_geom: ErpGeometry,
) -> np.ndarray:
    """Regional depth: per-patch histograms and tokens lifted through the index map."""
    factor = _upsample_factor(index_map.shape, out_geom)
    centers = upsample_bilinear(regional_center_map(index_map, hists), factor)
    attention = range_attention(regional_keymap(index_map, token_means), query)
    prob = probability_map(upsample_bilinear(attention, factor), head)
    return depth_from_distribution(prob, centers)


def random_query(c2: int, c1: int, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(scale=1.0 / np.sqrt(c1), size=(c2, c1))


def random_head(bins: int, c2: int, rng: np.random.Generator) -> ProjectionHead:
    return ProjectionHead(rng.normal(scale=1.0 / np.sqrt(c2), size=(bins, c2)), np.zeros(bins))
