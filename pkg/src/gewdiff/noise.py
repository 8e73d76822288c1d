"""Continuous noise levels: training draws, time mapping, sampling grid,
and the edge-attenuated forward perturbation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import HsiCube, Rng, as_cube_array, standard_normal_field

__all__ = [
    "TrainNoiseConfig",
    "NoiseSchedule",
    "sample_sigma",
    "t_of_sigma",
    "build_schedule",
    "edge_noise_multiplier",
    "edge_aware_perturb",
    "extract_edges",
]


@dataclass(frozen=True)
class TrainNoiseConfig:
    p_mean: float = -1.2
    p_std: float = 1.2
    eta: float = 0.5
    sigma_data: float = 0.5

    def __post_init__(self) -> None:
        if not self.p_std > 0:
            raise ValueError("p_std must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if not self.sigma_data > 0:
            raise ValueError("sigma_data must be positive")


@dataclass(frozen=True)
class NoiseSchedule:
    """Strictly decreasing noise levels from ``sigma_max`` to ``sigma_min``."""

    sigmas: np.ndarray
    rho: float
    sigma_max: float
    sigma_min: float

    @property
    def steps(self) -> int:
        return len(self.sigmas)

    @property
    def ts(self) -> np.ndarray:
        return -np.log(self.sigmas)


def sample_sigma(rng: Rng, cfg: TrainNoiseConfig = TrainNoiseConfig(), size=None):
    """Log-normal noise level ``exp(p_mean + p_std * n)``.

    Returns a float when ``size`` is None, else an array of that shape.
    """
    n = standard_normal_field(rng, 1 if size is None else size)
    sigma = np.exp(cfg.p_mean + cfg.p_std * n)
    return float(sigma[0]) if size is None else sigma


def t_of_sigma(sigma):
    """Map noise level to time, ``t = -ln(sigma)``."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    t = -np.log(sigma)
    return float(t) if t.ndim == 0 else t


def build_schedule(sigma_max: float = 80.0, sigma_min: float = 0.02, rho: float = 0.7, steps: int = 50) -> NoiseSchedule:
    """Interpolate linearly in ``sigma**(1/rho)`` and raise back to ``rho``.

    ``rho == 1`` gives a grid linear in sigma. The two endpoints are pinned
    exactly.
    """
    if not sigma_max > sigma_min > 0:
        raise ValueError("need sigma_max > sigma_min > 0")
    if not rho > 0:
        raise ValueError("rho must be positive")
    if steps < 2:
        raise ValueError("need at least 2 steps")
    ramp = np.arange(steps) / (steps - 1)
    # same grid with sigma_max factored out, so small rho cannot overflow
    ratio = (sigma_min / sigma_max) ** (1.0 / rho)
    sigmas = sigma_max * ((1.0 - ramp) + ramp * ratio) ** rho
    sigmas[0] = sigma_max
    sigmas[-1] = sigma_min
    if np.any(np.diff(sigmas) >= 0):
        raise ValueError("schedule is not strictly decreasing; increase the sigma range or reduce steps")
    sigmas.setflags(write=False)
    return NoiseSchedule(sigmas=sigmas, rho=float(rho), sigma_max=float(sigma_max), sigma_min=float(sigma_min))


def edge_noise_multiplier(edge: np.ndarray, sigma_t: float, sigma_max: float, eta: float) -> np.ndarray:
    """Per-pixel noise scale ``1 - E * (1 - s**2) * eta`` with ``s = clip(sigma_t / sigma_max, 0, 1)``."""
    sigma_norm = min(max(sigma_t / sigma_max, 0.0), 1.0)
    return 1.0 - np.asarray(edge, dtype=np.float64) * (1.0 - sigma_norm**2) * eta


def edge_aware_perturb(
    z0: np.ndarray,
    sigma_t: float,
    edge: np.ndarray,
    cfg: TrainNoiseConfig,
    sigma_max: float,
    rng: Rng,
) -> np.ndarray:
    """Forward-diffuse ``z0`` with noise attenuated on edge pixels.

    ``edge`` is a binary ``(height, width)`` map broadcast over all channels.
    A fresh noise field is drawn on every call.
    """
    z0 = as_cube_array(z0)
    edge = np.asarray(edge)
    if edge.shape != z0.shape[1:]:
        raise ValueError(f"edge map {edge.shape} does not match latent spatial shape {z0.shape[1:]}")
    if not sigma_t > 0:
        raise ValueError("sigma_t must be positive")
    eps = standard_normal_field(rng, z0.shape)
    scale = edge_noise_multiplier(edge, sigma_t, sigma_max, cfg.eta)
    return z0 + sigma_t * eps * scale[None]


def extract_edges(cube: HsiCube | np.ndarray, percentile: float = 90.0, dilate: int = 1) -> np.ndarray:
    """Binary edge map from Sobel magnitude of the channel-mean image.

    Pixels whose magnitude is positive and at least the ``percentile``-th
    percentile are marked, then the map is dilated ``dilate`` times with a
    3x3 square. Returns a ``uint8`` array of 0/1.
    """
    x = as_cube_array(cube)
    if x.shape[1] < 3 or x.shape[2] < 3:
        raise ValueError("edge extraction needs height and width >= 3")
    image = x.mean(axis=0)
    gy = ndimage.sobel(image, axis=0, mode="nearest")
    gx = ndimage.sobel(image, axis=1, mode="nearest")
    magnitude = np.hypot(gx, gy)
    threshold = np.percentile(magnitude, percentile)
    edges = (magnitude >= threshold) & (magnitude > 0)
    if dilate > 0 and edges.any():
        edges = ndimage.binary_dilation(edges, structure=np.ones((3, 3), bool), iterations=dilate)
    return edges.astype(np.uint8)
