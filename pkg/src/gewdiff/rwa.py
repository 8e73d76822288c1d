"""Spectral Haar transform with per-level regression of detail coefficients.

Each level splits the running approximation along the band axis into
orthonormal Haar approximation/detail halves, then fits an affine model that
predicts every detail channel from that level's approximation channels. The
encoder keeps only the top approximation and the regression weights (plus,
optionally, the prediction residuals, which makes the transform lossless).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np

from .core import HsiCube, as_cube_array

__all__ = [
    "WaveletLevel",
    "RwaModel",
    "RwaEncoding",
    "haar_forward",
    "haar_inverse",
    "fit_regression",
    "predict_details",
    "rwa_encode",
    "rwa_decode",
    "rwa_inverse",
]

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
RCOND = 1e-10


@dataclass(frozen=True)
class WaveletLevel:
    """One Haar split.

    ``approx`` has ``ceil(C/2)`` channels. When ``C`` is odd its last channel
    is the unpaired trailing band, carried through unchanged.
    """

    approx: np.ndarray
    detail: np.ndarray

    @property
    def has_passthrough(self) -> bool:
        return self.approx.shape[0] == self.detail.shape[0] + 1

    @property
    def passthrough_band(self) -> Optional[np.ndarray]:
        return self.approx[-1] if self.has_passthrough else None


def haar_forward(cube: HsiCube | np.ndarray) -> WaveletLevel:
    x = as_cube_array(cube)
    channels = x.shape[0]
    if channels < 2:
        raise ValueError(f"Haar split needs at least 2 channels, got {channels}")
    pairs = channels // 2
    even = x[0 : 2 * pairs : 2]
    odd = x[1 : 2 * pairs : 2]
    approx = (even + odd) * _INV_SQRT2
    detail = (even - odd) * _INV_SQRT2
    if channels % 2:
        approx = np.concatenate([approx, x[-1:]], axis=0)
    return WaveletLevel(approx=approx, detail=detail)


def haar_inverse(level: WaveletLevel) -> np.ndarray:
    approx = np.asarray(level.approx, dtype=np.float64)
    detail = np.asarray(level.detail, dtype=np.float64)
    if approx.ndim != 3 or detail.ndim != 3 or approx.shape[1:] != detail.shape[1:]:
        raise ValueError(f"approx {approx.shape} and detail {detail.shape} have incompatible shapes")
    pairs = detail.shape[0]
    extra = approx.shape[0] - pairs
    if extra not in (0, 1):
        raise ValueError(
            f"approx/detail channel mismatch: {approx.shape[0]} approx vs {pairs} detail channels"
        )
    out = np.empty((2 * pairs + extra,) + approx.shape[1:])
    out[0 : 2 * pairs : 2] = (approx[:pairs] + detail) * _INV_SQRT2
    out[1 : 2 * pairs : 2] = (approx[:pairs] - detail) * _INV_SQRT2
    if extra:
        out[-1] = approx[-1]
    return out


def _design_matrix(approx: np.ndarray) -> np.ndarray:
    k = approx.shape[0]
    pixels = approx.reshape(k, -1).T
    return np.hstack([np.ones((pixels.shape[0], 1)), pixels])


def fit_regression(level: WaveletLevel) -> np.ndarray:
    """Least-squares weights predicting each detail channel from ``[1, approx]``.

    Returns a ``(n_detail, n_approx + 1)`` matrix whose row ``i`` holds the
    intercept followed by one weight per approximation channel. Solved through
    an SVD pseudoinverse; singular values below ``1e-10`` times the largest are
    dropped, which gives the minimum-norm solution when bands are collinear.
    """
    approx, detail = level.approx, level.detail
    if detail.shape[0] < 1:
        raise ValueError("level has no detail channels to regress")
    n_pixels = approx.shape[1] * approx.shape[2]
    if n_pixels < approx.shape[0] + 1:
        raise ValueError(
            f"too few pixels ({n_pixels}) for {approx.shape[0]} predictors plus intercept"
        )
    design = _design_matrix(approx)
    targets = detail.reshape(detail.shape[0], -1).T
    beta, *_ = np.linalg.lstsq(design, targets, rcond=RCOND)
    return beta.T


def predict_details(approx: np.ndarray, beta: np.ndarray) -> np.ndarray:
    if beta.shape[1] != approx.shape[0] + 1:
        raise ValueError(
            f"regression expects {beta.shape[1] - 1} approximation channels, got {approx.shape[0]}"
        )
    pred = beta[:, 1:] @ approx.reshape(approx.shape[0], -1) + beta[:, :1]
    return pred.reshape((beta.shape[0],) + approx.shape[1:])


@dataclass(frozen=True)
class RwaModel:
    """Regression weights for every level.

    ``band_counts[0]`` is the input band count and ``band_counts[j]`` the
    approximation channel count after level ``j``.
    """

    betas: tuple[np.ndarray, ...]
    band_counts: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.band_counts) != len(self.betas) + 1:
            raise ValueError("band_counts must have one more entry than betas")
        for j, beta in enumerate(self.betas):
            parent = self.band_counts[j]
            if beta.shape != (parent // 2, self.band_counts[j + 1] + 1):
                raise ValueError(f"level {j + 1} weights have shape {beta.shape}, inconsistent with band counts")
            if not np.all(np.isfinite(beta)):
                raise ValueError(f"level {j + 1} weights are not finite")

    @property
    def levels(self) -> int:
        return len(self.betas)

    def to_arrays(self, prefix: str = "rwa") -> tuple[dict[str, Any], dict[str, np.ndarray]]:
        meta = {f"{prefix}_levels": self.levels, f"{prefix}_band_counts": list(self.band_counts)}
        arrays = {f"{prefix}_beta_{j}": beta for j, beta in enumerate(self.betas)}
        return meta, arrays

    @classmethod
    def from_arrays(cls, meta: dict[str, Any], arrays: dict[str, np.ndarray], prefix: str = "rwa") -> "RwaModel":
        levels = int(meta[f"{prefix}_levels"])
        betas = tuple(arrays[f"{prefix}_beta_{j}"] for j in range(levels))
        return cls(betas=betas, band_counts=tuple(int(c) for c in meta[f"{prefix}_band_counts"]))


@dataclass(frozen=True)
class RwaEncoding:
    approx_top: np.ndarray
    model: RwaModel
    residuals: Optional[tuple[np.ndarray, ...]] = None

    def __post_init__(self) -> None:
        if self.approx_top.shape[0] != self.model.band_counts[-1]:
            raise ValueError("top approximation does not match the model's band counts")
        if self.residuals is not None:
            if len(self.residuals) != self.model.levels:
                raise ValueError("need one residual cube per level")
            for j, res in enumerate(self.residuals):
                expected = (self.model.band_counts[j] // 2,) + self.approx_top.shape[1:]
                if res.shape != expected:
                    raise ValueError(f"level {j + 1} residual shape {res.shape} != {expected}")

    @property
    def lossless(self) -> bool:
        return self.residuals is not None

    def to_arrays(self) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
        meta, arrays = self.model.to_arrays()
        meta["rwa_lossless"] = self.lossless
        arrays["rwa_approx_top"] = self.approx_top
        if self.residuals is not None:
            for j, res in enumerate(self.residuals):
                arrays[f"rwa_residual_{j}"] = res
        return meta, arrays

    @classmethod
    def from_arrays(cls, meta: dict[str, Any], arrays: dict[str, np.ndarray]) -> "RwaEncoding":
        model = RwaModel.from_arrays(meta, arrays)
        residuals = None
        if meta.get("rwa_lossless"):
            residuals = tuple(arrays[f"rwa_residual_{j}"] for j in range(model.levels))
        return cls(approx_top=arrays["rwa_approx_top"], model=model, residuals=residuals)


def rwa_encode(cube: HsiCube | np.ndarray, levels: int = 1, keep_residuals: bool = False) -> RwaEncoding:
    """Run ``levels`` Haar splits, fitting the detail regression at each one.

    Stops early when the running approximation has fewer than two channels;
    ``encoding.model.levels`` records how many levels were actually applied.
    """
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    running = as_cube_array(cube)
    band_counts = [running.shape[0]]
    betas: list[np.ndarray] = []
    residuals: list[np.ndarray] = []
    for _ in range(levels):
        if running.shape[0] < 2:
            break
        level = haar_forward(running)
        beta = fit_regression(level)
        betas.append(beta)
        if keep_residuals:
            residuals.append(level.detail - predict_details(level.approx, beta))
        running = level.approx
        band_counts.append(running.shape[0])
    model = RwaModel(betas=tuple(betas), band_counts=tuple(band_counts))
    return RwaEncoding(
        approx_top=running,
        model=model,
        residuals=tuple(residuals) if keep_residuals else None,
    )


def rwa_inverse(
    approx_top: np.ndarray,
    model: RwaModel,
    residuals: Optional[Sequence[np.ndarray]] = None,
) -> np.ndarray:
    """Undo the transform from a (possibly foreign) top approximation.

    Details are predicted from the running approximation with the stored
    weights; ``residuals`` are added when given. ``approx_top`` may have a
    different spatial size from the image the model was fitted on.
    """
    approx = np.asarray(approx_top, dtype=np.float64)
    if approx.ndim != 3 or approx.shape[0] != model.band_counts[-1]:
        raise ValueError(
            f"top approximation has shape {approx.shape}, model expects {model.band_counts[-1]} channels"
        )
    for j in reversed(range(model.levels)):
        detail = predict_details(approx, model.betas[j])
        if residuals is not None:
            detail = detail + residuals[j]
        approx = haar_inverse(WaveletLevel(approx=approx, detail=detail))
        if approx.shape[0] != model.band_counts[j]:
            raise ValueError(f"level {j + 1} reconstructs {approx.shape[0]} bands, expected {model.band_counts[j]}")
    return approx


def rwa_decode(encoding: RwaEncoding, zero_residuals: bool = False) -> np.ndarray:
    residuals = None if zero_residuals else encoding.residuals
    return rwa_inverse(encoding.approx_top, encoding.model, residuals)
