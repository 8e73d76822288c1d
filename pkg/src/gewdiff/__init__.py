"""Wavelet/PCA latent codec, edge-aware noise schedules, a multistep
diffusion sampler and quality metrics for hyperspectral super-resolution."""

__version__ = "0.1.0"

from .codec import LatentEncoding, decode_latent, encode_latent
from .core import HsiCube, Rng, load_cube, save_cube, standard_normal_field
from .pca import PcaModel, pca_fit, pca_inverse, pca_project
from .rwa import RwaEncoding, RwaModel, haar_forward, haar_inverse, rwa_decode, rwa_encode

__all__ = [
    "HsiCube",
    "Rng",
    "load_cube",
    "save_cube",
    "standard_normal_field",
    "RwaEncoding",
    "RwaModel",
    "haar_forward",
    "haar_inverse",
    "rwa_encode",
    "rwa_decode",
    "PcaModel",
    "pca_fit",
    "pca_project",
    "pca_inverse",
    "LatentEncoding",
    "encode_latent",
    "decode_latent",
]
