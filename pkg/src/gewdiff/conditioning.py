"""Condition inputs for the sampler: upsampled LR latent, vegetation mask, edges."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .codec import LatentEncoding, encode_latent
from .core import HsiCube, as_cube_array
from .noise import extract_edges

__all__ = [
    "ConditionSet",
    "default_band_indices",
    "ndvi",
    "mask_from_segments",
    "fallback_segment",
    "upsample_latent",
    "build_conditions",
]

MIN_SEGMENT = 8
NDVI_BINS = 4


def default_band_indices(bands: int, lo_nm: float = 400.0, hi_nm: float = 2500.0) -> tuple[int, int]:
    """Red (660 nm) and NIR (865 nm) band indices on an evenly spaced grid.

    For 242 bands over 400-2500 nm this gives (30, 53).
    """
    wavelengths = np.linspace(lo_nm, hi_nm, bands)
    red = int(np.argmin(np.abs(wavelengths - 660.0)))
    nir = int(np.argmin(np.abs(wavelengths - 865.0)))
    return red, nir


def ndvi(cube: HsiCube | np.ndarray, red_band: int, nir_band: int, normalize: bool = True) -> np.ndarray:
    """(NIR - Red) / (NIR + Red), with 0/0 mapped to 0.

    With ``normalize`` the result is shifted to ``(ndvi + 1) / 2`` in [0, 1].
    """
    x = as_cube_array(cube)
    bands = x.shape[0]
    for idx in (red_band, nir_band):
        if not 0 <= idx < bands:
            raise ValueError(f"band index {idx} out of range for {bands} bands")
    if red_band == nir_band:
        raise ValueError("red and NIR bands must differ")
    red = x[red_band]
    nir = x[nir_band]
    num = nir - red
    den = nir + red
    raw = np.divide(num, den, out=np.zeros_like(num), where=den != 0)
    # negative reflectances can push the ratio outside [-1, 1]
    raw = np.clip(raw, -1.0, 1.0)
    return (raw + 1.0) / 2.0 if normalize else raw


def mask_from_segments(ndvi_norm: np.ndarray, segs: np.ndarray) -> np.ndarray:
    """One minus the region mean of normalised NDVI, painted back per pixel."""
    ndvi_norm = np.asarray(ndvi_norm, dtype=np.float64)
    segs = np.asarray(segs)
    if ndvi_norm.shape != segs.shape:
        raise ValueError(f"NDVI map {ndvi_norm.shape} and segmentation {segs.shape} differ in shape")
    _, inverse = np.unique(segs.ravel(), return_inverse=True)
    sums = np.bincount(inverse, weights=ndvi_norm.ravel())
    counts = np.bincount(inverse)
    region_mask = 1.0 - sums / counts
    return np.clip(region_mask, 0.0, 1.0)[inverse].reshape(segs.shape)


def _block_mean(image: np.ndarray, cell: int) -> np.ndarray:
    if cell == 1:
        return image
    h, w = image.shape
    rows = np.arange(h) // cell
    cols = np.arange(w) // cell
    ids = rows[:, None] * (cols.max() + 1) + cols[None, :]
    means = np.bincount(ids.ravel(), weights=image.ravel()) / np.bincount(ids.ravel())
    return means[ids]


def _relabel_by_first_appearance(labels: np.ndarray) -> np.ndarray:
    uniq, first = np.unique(labels.ravel(), return_index=True)
    order = uniq[np.argsort(first)]
    lookup = np.empty(labels.max() + 1, dtype=np.int64)
    lookup[order] = np.arange(len(order))
    return lookup[labels]


def fallback_segment(ndvi_norm: np.ndarray, grid: int = 1) -> np.ndarray:
    """Deterministic stand-in segmenter.

    NDVI is averaged over ``grid x grid`` cells, quantised into four equal
    bins on [0, 1] and split into 4-connected components. Components under
    eight pixels are merged into their largest neighbour (ties go to the
    smaller label) until none remain. Labels are renumbered 0.. in raster
    order of first appearance.
    """
    if grid < 1:
        raise ValueError("grid cell size must be >= 1")
    values = _block_mean(np.asarray(ndvi_norm, dtype=np.float64), grid)
    bins = np.clip((values * NDVI_BINS).astype(np.int64), 0, NDVI_BINS - 1)

    labels = np.zeros(bins.shape, dtype=np.int64)
    next_label = 0
    for b in range(NDVI_BINS):
        comp, n = ndimage.label(bins == b)
        labels[comp > 0] = comp[comp > 0] - 1 + next_label
        next_label += n

    cross = ndimage.generate_binary_structure(2, 1)
    h, w = labels.shape
    while True:
        sizes = np.bincount(labels.ravel(), minlength=next_label)
        start_sizes = sizes.copy()
        boxes = ndimage.find_objects(labels + 1)
        merged = False
        for lab in np.flatnonzero((sizes > 0) & (sizes < MIN_SEGMENT)):
            if sizes[lab] != start_sizes[lab]:
                # grew or vanished during this pass; its box is stale
                merged = True
                continue
            rs, cs = boxes[lab]
            box = (slice(max(rs.start - 1, 0), min(rs.stop + 1, h)), slice(max(cs.start - 1, 0), min(cs.stop + 1, w)))
            sub = labels[box]
            region = sub == lab
            ring = ndimage.binary_dilation(region, structure=cross) & ~region
            neighbours = np.unique(sub[ring])
            if neighbours.size == 0:
                continue
            target = min(neighbours, key=lambda n: (-sizes[n], n))
            sub[region] = target
            sizes[target] += sizes[lab]
            sizes[lab] = 0
            merged = True
        if not merged:
            break
    return _relabel_by_first_appearance(labels)


def _interp_matrix(n_in: int, factor: int) -> np.ndarray:
    n_out = n_in * factor
    src = (np.arange(n_out) + 0.5) / factor - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    mat = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(mat, (rows, lo), 1.0 - frac)
    np.add.at(mat, (rows, hi), frac)
    return mat


def upsample_latent(latent: np.ndarray, factor: int) -> np.ndarray:
    """Bilinear upsampling of every channel, half-pixel centre convention.

    Output pixel ``i`` samples input coordinate ``(i + 0.5) / factor - 0.5``,
    clamped to the border.
    """
    if factor < 1:
        raise ValueError("factor must be >= 1")
    z = as_cube_array(latent)
    if factor == 1:
        return z.copy()
    rows = _interp_matrix(z.shape[1], factor)
    cols = _interp_matrix(z.shape[2], factor)
    return rows @ z @ cols.T


@dataclass(frozen=True)
class ConditionSet:
    lr_latent: np.ndarray
    mask: np.ndarray
    edge: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        spatial = self.lr_latent.shape[1:]
        if self.mask.shape != spatial or (self.edge is not None and self.edge.shape != spatial):
            raise ValueError("condition components must share height and width")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.lr_latent.shape

    def stacked(self) -> np.ndarray:
        """Channel concatenation ``[lr_latent, mask]``."""
        return np.concatenate([self.lr_latent, self.mask[None]], axis=0)


def build_conditions(
    lr: HsiCube | np.ndarray,
    segs: Optional[np.ndarray] = None,
    factor: int = 4,
    *,
    rwa_levels: int = 1,
    pca_k: int = 20,
    red_band: Optional[int] = None,
    nir_band: Optional[int] = None,
    codec: Optional[LatentEncoding] = None,
    edge_percentile: float = 90.0,
    edge_dilate: int = 1,
    segment_grid: int = 1,
) -> tuple[ConditionSet, LatentEncoding]:
    """Encode the LR cube and assemble the conditions at ``factor`` x its size.

    ``codec`` defaults to an encoding fitted on ``lr`` itself; pass one to
    project through a basis fitted elsewhere. ``segs`` may be given at LR or
    target resolution (LR labels are replicated). Returns the condition set
    and the codec used, which the decoder needs afterwards.
    """
    x = as_cube_array(lr)
    if codec is None:
        codec = encode_latent(x, levels=rwa_levels, k=pca_k)
        latent = codec.latent
    else:
        latent = codec.project(x)
    up = upsample_latent(latent, factor)

    if red_band is None or nir_band is None:
        red_default, nir_default = default_band_indices(x.shape[0])
        red_band = red_default if red_band is None else red_band
        nir_band = nir_default if nir_band is None else nir_band
    veg = ndvi(x, red_band, nir_band)
    veg_up = np.clip(upsample_latent(veg[None], factor)[0], 0.0, 1.0)

    target = up.shape[1:]
    if segs is None:
        segs = fallback_segment(veg_up, segment_grid)
    else:
        segs = np.asarray(segs)
        if segs.shape == x.shape[1:] and factor > 1:
            segs = np.repeat(np.repeat(segs, factor, axis=0), factor, axis=1)
        if segs.shape != target:
            raise ValueError(f"segmentation shape {segs.shape} matches neither LR nor target size")
    mask = mask_from_segments(veg_up, segs)
    edge = extract_edges(up, percentile=edge_percentile, dilate=edge_dilate)
    return ConditionSet(lr_latent=up, mask=mask, edge=edge), codec
