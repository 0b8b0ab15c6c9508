"""Standard monocular depth metrics over valid ground-truth pixels."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .cddc import DepthRange
from .errors import GeometryMismatch, NoValidPixels

__all__ = ["MetricReport", "evaluate", "evaluate_masked", "row_mask", "format_table"]


@dataclass(frozen=True)
class MetricReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    valid_count: int

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def evaluate(pred: np.ndarray, gt: np.ndarray, clamp: DepthRange | None = None, mask: np.ndarray | None = None) -> MetricReport:
    """Abs Rel, Sq Rel, RMSE, RMSE(log) and delta accuracies.

    Pixels are valid where ``gt`` is finite and positive (and ``mask`` is set,
    if given). Predictions are clamped to ``clamp`` when provided, never masked.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise GeometryMismatch(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    valid = np.isfinite(gt) & (gt > 0)
    if mask is not None:
        valid &= mask
    n = int(valid.sum())
    if n == 0:
        raise NoValidPixels("no valid ground-truth pixels to evaluate")
    p = pred[valid]
    g = gt[valid]
    if clamp is not None:
        p = np.clip(p, clamp.d_min, clamp.d_max)
    diff = p - g
    with np.errstate(divide="ignore", invalid="ignore"):
        log_diff = np.log(p) - np.log(g)
        ratio = np.maximum(p / g, g / p)
    return MetricReport(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff * diff / g)),
        rmse=float(np.sqrt(np.mean(diff * diff))),
        rmse_log=float(np.sqrt(np.mean(log_diff * log_diff))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
        valid_count=n,
    )


def row_mask(height: int, width: int, top_frac: float, bottom_frac: float) -> np.ndarray:
    """Boolean mask dropping int(H * top_frac) rows at the top and int(H * bottom_frac) at the bottom."""
    for frac in (top_frac, bottom_frac):
        # 0.5 is allowed so the fully masked degenerate case reaches NoValidPixels
        if not 0.0 <= frac <= 0.5:
            raise ValueError(f"mask fraction must lie in [0, 0.5], got {frac}")
    mask = np.ones((height, width), dtype=bool)
    mask[: int(height * top_frac)] = False
    mask[height - int(height * bottom_frac) :] = False
    return mask


def evaluate_masked(
    pred: np.ndarray,
    gt: np.ndarray,
    mask_top_frac: float = 0.15,
    mask_bottom_frac: float = 0.15,
    clamp: DepthRange | None = None,
) -> MetricReport:
    gt = np.asarray(gt)
    mask = row_mask(gt.shape[0], gt.shape[1], mask_top_frac, mask_bottom_frac)
    return evaluate(pred, gt, clamp, mask=mask)


def format_table(report: MetricReport) -> str:
    names = ["abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3"]
    header = " ".join(f"{n:>10}" for n in names)
    row = " ".join(f"{getattr(report, n):>10.4f}" for n in names)
    return f"{header}\n{row}\n(valid pixels: {report.valid_count})"
