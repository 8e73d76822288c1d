"""PCA over the channel axis: pixels are samples, channels are features."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .core import HsiCube, as_cube_array

__all__ = ["PcaModel", "pca_fit", "pca_project", "pca_inverse"]


@dataclass(frozen=True)
class PcaModel:
    """Mean spectrum, orthonormal loading rows and their explained variances.

    Variances use the ``n_pixels - 1`` denominator.
    """

    mean: np.ndarray
    loadings: np.ndarray
    eigenvalues: np.ndarray

    @property
    def retained(self) -> int:
        return self.loadings.shape[0]

    @property
    def channels(self) -> int:
        return self.mean.shape[0]

    def to_arrays(self, prefix: str = "pca") -> tuple[dict[str, Any], dict[str, np.ndarray]]:
        return (
            {f"{prefix}_k": self.retained},
            {
                f"{prefix}_mean": self.mean,
                f"{prefix}_loadings": self.loadings,
                f"{prefix}_eigenvalues": self.eigenvalues,
            },
        )

    @classmethod
    def from_arrays(cls, meta: dict[str, Any], arrays: dict[str, np.ndarray], prefix: str = "pca") -> "PcaModel":
        return cls(
            mean=arrays[f"{prefix}_mean"],
            loadings=arrays[f"{prefix}_loadings"],
            eigenvalues=arrays[f"{prefix}_eigenvalues"],
        )


def _pixels(cube: np.ndarray) -> np.ndarray:
    return cube.reshape(cube.shape[0], -1).T


def pca_fit(cube: HsiCube | np.ndarray, k: int) -> PcaModel:
    """Fit the top ``k`` principal directions via SVD of the centred pixel matrix.

    Each loading row is sign-flipped so that its largest-magnitude entry is
    positive.
    """
    x = as_cube_array(cube)
    channels = x.shape[0]
    if not 1 <= k <= channels:
        raise ValueError(f"k must be in [1, {channels}], got {k}")
    samples = _pixels(x)
    if samples.shape[0] < 2:
        raise ValueError("PCA needs at least two pixels")
    mean = samples.mean(axis=0)
    _, s, vt = np.linalg.svd(samples - mean, full_matrices=False)
    loadings = vt[:k].copy()
    pivot = np.argmax(np.abs(loadings), axis=1)
    signs = np.sign(loadings[np.arange(k), pivot])
    signs[signs == 0] = 1.0
    loadings *= signs[:, None]
    eigenvalues = s[:k] ** 2 / (samples.shape[0] - 1)
    return PcaModel(mean=mean, loadings=loadings, eigenvalues=eigenvalues)


def pca_project(cube: HsiCube | np.ndarray, model: PcaModel) -> np.ndarray:
    x = as_cube_array(cube)
    if x.shape[0] != model.channels:
        raise ValueError(f"cube has {x.shape[0]} channels, model expects {model.channels}")
    scores = (_pixels(x) - model.mean) @ model.loadings.T
    return scores.T.reshape((model.retained,) + x.shape[1:])


def pca_inverse(latent: np.ndarray, model: PcaModel) -> np.ndarray:
    z = as_cube_array(latent)
    if z.shape[0] != model.retained:
        raise ValueError(f"latent has {z.shape[0]} channels, model retains {model.retained}")
    recon = _pixels(z) @ model.loadings + model.mean
    return recon.T.reshape((model.channels,) + z.shape[1:])
