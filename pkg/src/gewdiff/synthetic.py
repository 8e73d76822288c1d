"""Seeded synthetic hyperspectral scenes for tests and demos."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .core import HsiCube

__all__ = ["wavelength_grid", "smooth_scene", "downsample"]


def wavelength_grid(bands: int = 242, lo_nm: float = 400.0, hi_nm: float = 2500.0) -> np.ndarray:
    return np.linspace(lo_nm, hi_nm, bands)


def _texture(rng: np.random.Generator, shape: tuple[int, int], smoothness: float) -> np.ndarray:
    field = ndimage.gaussian_filter(rng.standard_normal(shape), smoothness, mode="wrap")
    return field / np.abs(field).max()


def smooth_scene(
    seed: int = 0,
    height: int = 64,
    width: int = 64,
    bands: int = 242,
    n_segments: int = 12,
    noise_std: float = 0.0,
) -> tuple[HsiCube, np.ndarray]:
    """Piecewise scene of smooth reflectance spectra.

    The label map is a Voronoi partition of ``n_segments`` random seeds. Each
    segment gets a baseline plus three Gaussian absorption/reflection bumps;
    within a segment the bump centres shift by up to 40 nm, widths vary by
    10 % and brightness by 15 %, all driven by smooth spatial texture fields.
    Returns the cube and the ``(height, width)`` label map.
    """
    rng = np.random.default_rng(seed)
    wl = wavelength_grid(bands)
    cy = rng.uniform(0, height, n_segments)
    cx = rng.uniform(0, width, n_segments)
    yy, xx = np.mgrid[0:height, 0:width]
    labels = np.argmin((yy[..., None] - cy) ** 2 + (xx[..., None] - cx) ** 2, axis=-1)

    brightness = 1.0 + 0.15 * _texture(rng, (height, width), 3.0)
    shift = 40.0 * _texture(rng, (height, width), 4.0)
    stretch = 1.0 + 0.1 * _texture(rng, (height, width), 5.0)

    cube = np.zeros((bands, height, width))
    for seg in range(n_segments):
        base = rng.uniform(0.03, 0.15)
        centres = rng.uniform(450.0, 2400.0, 3)
        widths = rng.uniform(80.0, 400.0, 3)
        amps = rng.uniform(0.05, 0.35, 3)
        inside = labels == seg
        if not inside.any():
            continue
        dc = shift[inside]
        sw = stretch[inside]
        spectra = np.full((bands, dc.size), base)
        for c, w, a in zip(centres, widths, amps):
            spectra += a * np.exp(-0.5 * ((wl[:, None] - (c + dc)) / (w * sw)) ** 2)
        cube[:, inside] = spectra * brightness[inside]
    if noise_std > 0:
        cube += noise_std * rng.standard_normal(cube.shape)
    return HsiCube(cube), labels


def downsample(cube: HsiCube | np.ndarray, factor: int) -> np.ndarray:
    """Block-average ``factor x factor`` pixel cells (trailing partial cells dropped)."""
    x = cube.data if isinstance(cube, HsiCube) else np.asarray(cube, dtype=np.float64)
    b, h, w = x.shape
    h2, w2 = h // factor, w // factor
    return x[:, : h2 * factor, : w2 * factor].reshape(b, h2, factor, w2, factor).mean(axis=(2, 4))
