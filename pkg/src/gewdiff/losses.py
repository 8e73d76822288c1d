"""Multi-level training objective, evaluated (no autodiff).

All norms are per-element means so values do not scale with image size.
Cubes are ``(channels, height, width)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import spectral_angles

__all__ = [
    "LossWeights",
    "PoolPyramidExtractor",
    "spectral_angles",
    "pixel_loss",
    "perceptual_loss",
    "gradient_loss",
    "noise_weight",
    "loss_breakdown",
    "total_loss",
]

FeatureExtractor = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.8
    lambda2: float = 0.1
    lambda3: float = 0.1
    sigma_data: float = 0.5

    def __post_init__(self) -> None:
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("loss weights must be non-negative")
        if not self.sigma_data > 0:
            raise ValueError("sigma_data must be positive")


def _check_pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if pred.ndim != 3:
        raise ValueError(f"expected (channels, height, width) arrays, got {pred.shape}")
    return pred, target


def pixel_loss(pred, target) -> float:
    """Average of MSE and mean spectral angle (radians)."""
    pred, target = _check_pair(pred, target)
    mse = np.mean((pred - target) ** 2)
    sam = np.mean(spectral_angles(pred, target))
    return float((mse + sam) / 2.0)


class PoolPyramidExtractor:
    """Toy feature extractor: the input plus ``levels - 1`` successive 2x2 average pools, flattened."""

    def __init__(self, levels: int = 3) -> None:
        self.levels = levels

    def __call__(self, x: np.ndarray) -> np.ndarray:
        feats = [x.ravel()]
        for _ in range(self.levels - 1):
            c, h, w = x.shape
            h2, w2 = h // 2, w // 2
            if h2 == 0 or w2 == 0:
                break
            x = x[:, : 2 * h2, : 2 * w2].reshape(c, h2, 2, w2, 2).mean(axis=(2, 4))
            feats.append(x.ravel())
        return np.concatenate(feats)


def perceptual_loss(pred, target, extractor: FeatureExtractor | None = None) -> float:
    pred, target = _check_pair(pred, target)
    extractor = extractor or PoolPyramidExtractor()
    fp = np.asarray(extractor(pred), dtype=np.float64)
    ft = np.asarray(extractor(target), dtype=np.float64)
    if fp.shape != ft.shape:
        raise ValueError(f"extractor output shapes differ: {fp.shape} vs {ft.shape}")
    return float(np.mean((fp - ft) ** 2))


def gradient_loss(pred, target) -> float:
    """Half the sum of mean absolute forward-difference errors along x and y."""
    pred, target = _check_pair(pred, target)
    if pred.shape[1] < 2 or pred.shape[2] < 2:
        raise ValueError("gradient loss needs height and width >= 2")
    diff = pred - target
    gx = np.mean(np.abs(np.diff(diff, axis=2)))
    gy = np.mean(np.abs(np.diff(diff, axis=1)))
    return float(0.5 * (gx + gy))


def noise_weight(sigma, sigma_data: float = 0.5):
    """``(sigma**2 + sigma_data**2) / (sigma * sigma_data)**2``."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    w = (sigma**2 + sigma_data**2) / (sigma * sigma_data) ** 2
    return float(w) if w.ndim == 0 else w


def loss_breakdown(
    pred,
    target,
    sigma_t: float,
    weights: LossWeights = LossWeights(),
    extractor: FeatureExtractor | None = None,
) -> dict[str, float]:
    pixel = pixel_loss(pred, target)
    perc = perceptual_loss(pred, target, extractor)
    grad = gradient_loss(pred, target)
    lam = noise_weight(sigma_t, weights.sigma_data)
    total = lam * (weights.lambda1 * pixel + weights.lambda2 * perc + weights.lambda3 * grad)
    return {"pixel": pixel, "perceptual": perc, "gradient": grad, "lambda": lam, "total": total}


def total_loss(
    pred,
    target,
    extractor: FeatureExtractor | None = None,
    weights: LossWeights = LossWeights(),
    sigma_t: float = 0.5,
) -> float:
    return loss_breakdown(pred, target, sigma_t, weights, extractor)["total"]
