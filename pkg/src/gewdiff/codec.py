"""Band-space <-> latent codec: spectral RWA followed by PCA."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import HsiCube, as_cube_array, read_container, write_container
from .pca import PcaModel, pca_fit, pca_inverse, pca_project
from .rwa import RwaEncoding, haar_forward, rwa_encode, rwa_inverse

__all__ = ["LatentEncoding", "encode_latent", "decode_latent", "save_codec", "load_codec"]


@dataclass(frozen=True)
class LatentEncoding:
    """Everything the encoder produces for one image.

    ``rwa.approx_top`` is the wavelet approximation the PCA was fitted on and
    ``latent`` its projection.
    """

    rwa: RwaEncoding
    pca: PcaModel
    latent: np.ndarray

    def project(self, cube: HsiCube | np.ndarray) -> np.ndarray:
        """Latent of another image through this encoding's Haar depth and PCA basis."""
        approx = as_cube_array(cube)
        if approx.shape[0] != self.rwa.model.band_counts[0]:
            raise ValueError(f"cube has {approx.shape[0]} bands, codec expects {self.rwa.model.band_counts[0]}")
        for _ in range(self.rwa.model.levels):
            approx = haar_forward(approx).approx
        return pca_project(approx, self.pca)

    def decode(self, latent: np.ndarray | None = None, zero_residuals: bool = True) -> np.ndarray:
        """Band-space reconstruction of ``latent`` (default: the stored latent).

        Residuals can only be applied to the stored latent, since they are
        tied to the encoded image's pixels.
        """
        residuals = None
        if latent is None:
            latent = self.latent
            if not zero_residuals:
                residuals = self.rwa.residuals
        return decode_latent(latent, self, residuals)


def encode_latent(cube: HsiCube | np.ndarray, levels: int = 1, k: int = 20, keep_residuals: bool = False) -> LatentEncoding:
    rwa = rwa_encode(cube, levels=levels, keep_residuals=keep_residuals)
    pca = pca_fit(rwa.approx_top, k)
    return LatentEncoding(rwa=rwa, pca=pca, latent=pca_project(rwa.approx_top, pca))


def decode_latent(latent: np.ndarray, encoding: LatentEncoding, residuals=None) -> np.ndarray:
    """Inverse PCA with the stored basis, then inverse RWA with stored weights."""
    approx = pca_inverse(latent, encoding.pca)
    return rwa_inverse(approx, encoding.rwa.model, residuals)


def save_codec(encoding: LatentEncoding, path: str | Path) -> None:
    meta, arrays = encoding.rwa.to_arrays()
    pca_meta, pca_arrays = encoding.pca.to_arrays()
    meta.update(pca_meta)
    arrays.update(pca_arrays)
    arrays["latent"] = encoding.latent
    write_container(path, meta, arrays)


def load_codec(path: str | Path) -> LatentEncoding:
    meta, arrays = read_container(path)
    try:
        return LatentEncoding(
            rwa=RwaEncoding.from_arrays(meta, arrays),
            pca=PcaModel.from_arrays(meta, arrays),
            latent=arrays["latent"],
        )
    except KeyError as exc:
        raise ValueError(f"{path}: codec file is missing {exc}") from exc
