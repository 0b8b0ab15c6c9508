"""Adaptive fusion of the two depth predictions, and the training losses with gradients."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .cddc import DepthHistogram
from .errors import EmptySet, GeometryMismatch, NoValidPixels

__all__ = [
    "FusionWeights",
    "BerhuMode",
    "LossConfig",
    "adaptive_fuse",
    "valid_mask",
    "berhu",
    "chamfer_1d",
    "chamfer_samples",
    "total_loss",
]


@dataclass(frozen=True)
class FusionWeights:
    """Two raw scalars mapped through a softmax, so the weights always sum to one."""

    raw0: float = 0.0
    raw1: float = 0.0

    def effective(self) -> tuple[float, float]:
        m = max(self.raw0, self.raw1)
        e0, e1 = math.exp(self.raw0 - m), math.exp(self.raw1 - m)
        s = e0 + e1
        return e0 / s, e1 / s


class BerhuMode(enum.Enum):
    FIXED = "fixed"  # threshold is the constant c
    MAX_FRACTION = "max_fraction"  # threshold is c * max |error| over valid pixels


@dataclass(frozen=True)
class LossConfig:
    lam: float = 0.1
    berhu_mode: BerhuMode = BerhuMode.FIXED
    berhu_c: float = 0.2
    chamfer_stride: int = 8
    reduction: str = "sum"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.berhu_c <= 0:
            raise ValueError("BerHu threshold parameter must be positive")
        if self.chamfer_stride < 1:
            raise ValueError("chamfer stride must be >= 1")
        if self.reduction not in ("sum", "mean"):
            raise ValueError(f"unknown reduction {self.reduction!r}")
        object.__setattr__(self, "berhu_mode", BerhuMode(self.berhu_mode))


def adaptive_fuse(dh: np.ndarray, dr: np.ndarray, weights: FusionWeights = FusionWeights()) -> np.ndarray:
    """Pixel-wise w0 * dh + w1 * dr.

    The result is clipped to [min(dh, dr), max(dh, dr)]: the convex combination
    can only leave that interval through rounding, and the clip makes dh == dr
    return dh bit-for-bit.
    """
    dh = np.asarray(dh, dtype=np.float64)
    dr = np.asarray(dr, dtype=np.float64)
    if dh.shape != dr.shape:
        raise GeometryMismatch(f"holistic {dh.shape} and regional {dr.shape} depth differ in shape")
    w0, w1 = weights.effective()
    return np.clip(w0 * dh + w1 * dr, np.minimum(dh, dr), np.maximum(dh, dr))


def valid_mask(gt: np.ndarray) -> np.ndarray:
    gt = np.asarray(gt, dtype=np.float64)
    return np.isfinite(gt) & (gt > 0)


def berhu(pred: np.ndarray, gt: np.ndarray, cfg: LossConfig = LossConfig()):
    """Reverse Huber loss over valid ground-truth pixels.

    Returns ``(loss, grad)`` where ``grad`` has the shape of ``pred`` and is zero
    on invalid pixels. In MAX_FRACTION mode the threshold is treated as a
    constant when differentiating.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise GeometryMismatch(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    mask = valid_mask(gt)
    count = int(mask.sum())
    if count == 0:
        raise NoValidPixels("ground truth has no valid pixels")
    x = pred[mask] - gt[mask]
    ax = np.abs(x)
    if cfg.berhu_mode is BerhuMode.FIXED:
        c = cfg.berhu_c
    else:
        c = cfg.berhu_c * float(ax.max())
    grad = np.zeros_like(pred)
    if c == 0.0:
        # every error is exactly zero
        return 0.0, grad
    inner = ax <= c
    per_pixel = np.where(inner, ax, (x * x + c * c) / (2.0 * c))
    g = np.where(inner, np.sign(x), x / c)
    scale = 1.0 / count if cfg.reduction == "mean" else 1.0
    grad[mask] = g * scale
    return float(per_pixel.sum() * scale), grad


def _nearest(sorted_ref: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Index into ``sorted_ref`` of the nearest element to each query (ties -> lower)."""
    pos = np.searchsorted(sorted_ref, query)
    lo = np.clip(pos - 1, 0, sorted_ref.size - 1)
    hi = np.clip(pos, 0, sorted_ref.size - 1)
    pick_hi = np.abs(sorted_ref[hi] - query) < np.abs(query - sorted_ref[lo])
    return np.where(pick_hi, hi, lo)


def chamfer_1d(x, centers, with_grad: bool = True):
    """Bidirectional squared Chamfer distance between two 1-D point sets.

    Returns ``(loss, grad)`` with ``grad`` taken with respect to ``centers``
    (``None`` when ``with_grad`` is false).
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    centers = np.asarray(centers, dtype=np.float64).ravel()
    if x.size == 0 or centers.size == 0:
        raise EmptySet("chamfer distance needs two non-empty sets")
    c_order = np.argsort(centers, kind="stable")
    c_sorted = centers[c_order]
    x_sorted = np.sort(x)

    nn_c = c_order[_nearest(c_sorted, x)]  # nearest center to each sample
    d_fwd = x - centers[nn_c]
    nn_x = x_sorted[_nearest(x_sorted, centers)]  # nearest sample to each center
    d_bwd = centers - nn_x
    loss = float(np.sum(d_fwd * d_fwd) + np.sum(d_bwd * d_bwd))
    if not with_grad:
        return loss, None
    grad = 2.0 * d_bwd
    np.add.at(grad, nn_c, -2.0 * d_fwd)
    return loss, grad


def chamfer_samples(gt: np.ndarray, stride: int = 8) -> np.ndarray:
    """Every ``stride``-th valid ground-truth depth, in row-major order."""
    gt = np.asarray(gt, dtype=np.float64)
    return gt[valid_mask(gt)][::stride]


def total_loss(pred: np.ndarray, gt: np.ndarray, hist: DepthHistogram, cfg: LossConfig = LossConfig()) -> float:
    """BerHu depth loss plus lambda times the Chamfer loss on the holistic bin centers."""
    depth_loss, _ = berhu(pred, gt, cfg)
    if cfg.lam == 0:
        return depth_loss
    bin_loss, _ = chamfer_1d(chamfer_samples(gt, cfg.chamfer_stride), hist.centers, with_grad=False)
    return depth_loss + cfg.lam * bin_loss
