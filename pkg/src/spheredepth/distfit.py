"""
Fit adaptive histogram bins to a depth sample by gradient descent on the
bidirectional Chamfer loss, differentiating through the width normalization.

Parameters are unconstrained reals mapped to nonnegative logits by softplus.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cddc import DEFAULT_EPSILON, DepthHistogram, DepthRange, bin_centers
from .errors import EmptySet
from .fusion_losses import chamfer_1d

__all__ = [
    "FitConfig",
    "FitTrace",
    "softplus",
    "centers_from_params",
    "loss_and_grad",
    "fit_bins",
]


@dataclass(frozen=True)
class FitConfig:
    bins: int = 100
    steps: int = 500
    lr: float = 0.01
    tol: float = 1e-9
    epsilon: float = DEFAULT_EPSILON
    max_halvings: int = 40
    growth: float = 1.2

    def __post_init__(self):
        if self.bins < 2:
            raise ValueError("need at least two bins")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.growth < 1:
            raise ValueError("step growth factor must be >= 1")


@dataclass
class FitTrace:
    losses: list[float] = field(default_factory=list)
    step_sizes: list[float] = field(default_factory=list)
    params: np.ndarray | None = None
    logits: np.ndarray | None = None
    histogram: DepthHistogram | None = None
    seed: int = 0

    @property
    def initial_loss(self) -> float:
        return self.losses[0]

    @property
    def final_loss(self) -> float:
        return self.losses[-1]


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def centers_from_params(params, depth_range: DepthRange, epsilon: float = DEFAULT_EPSILON) -> DepthHistogram:
    return bin_centers(softplus(params), depth_range, epsilon)


def loss_and_grad(params, x, depth_range: DepthRange, epsilon: float = DEFAULT_EPSILON):
    """Chamfer loss of the bins implied by ``params`` and its gradient w.r.t. ``params``."""
    params = np.asarray(params, dtype=np.float64)
    logits = softplus(params)
    hist = bin_centers(logits, depth_range, epsilon)
    loss, g_c = chamfer_1d(x, hist.centers)
    # c_i = d_min + sum_{j<i} w_j + w_i / 2
    g_w = np.cumsum(g_c[::-1])[::-1] - 0.5 * g_c
    # w = span * s / sum(s), s = logits + eps
    s = logits + epsilon
    total = s.sum()
    g_s = (depth_range.span / total) * (g_w - np.dot(g_w, s) / total)
    return loss, g_s * _sigmoid(params)


def fit_bins(x, depth_range: DepthRange, cfg: FitConfig = FitConfig(), seed: int = 0) -> FitTrace:
    """Gradient descent with step halving on loss increase.

    Only non-increasing steps are accepted; after each accepted step the step
    size grows by ``cfg.growth`` so earlier halvings are not permanent.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptySet("no depth samples to fit")
    rng = np.random.default_rng(seed)
    params = rng.normal(scale=0.01, size=cfg.bins)
    trace = FitTrace(seed=seed)
    loss, grad = loss_and_grad(params, x, depth_range, cfg.epsilon)
    lr = cfg.lr
    trace.losses.append(loss)
    trace.step_sizes.append(0.0)
    for _ in range(cfg.steps):
        accepted = False
        for _ in range(cfg.max_halvings):
            trial = params - lr * grad
            trial_loss, trial_grad = loss_and_grad(trial, x, depth_range, cfg.epsilon)
            if trial_loss <= loss:
                accepted = True
                break
            lr *= 0.5
        if not accepted:
            break
        improvement = (loss - trial_loss) / loss if loss > 0 else 0.0
        params, loss, grad = trial, trial_loss, trial_grad
        trace.losses.append(loss)
        trace.step_sizes.append(lr)
        if improvement < cfg.tol:
            break
        lr *= cfg.growth
    trace.params = params
    trace.logits = softplus(params)
    trace.histogram = bin_centers(trace.logits, depth_range, cfg.epsilon)
    return trace
