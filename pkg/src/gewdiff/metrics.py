"""Full-reference quality metrics for ``(bands, height, width)`` cubes.

Per-band metrics (PSNR, SSIM, CC) are averaged over bands. Bands that make a
metric undefined (constant bands for CC, zero-mean target bands for ERGAS)
are skipped and counted rather than turned into NaN.

LV here is the mean 3x3-window population variance, a local texture
measure; its values are only comparable between runs of this package.
FID is not computed.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .core import HsiCube, as_cube_array, spectral_angles

__all__ = [
    "MetricReport",
    "psnr",
    "ssim",
    "sam_deg",
    "cc",
    "rmse",
    "ergas",
    "local_variation",
    "report",
]

SSIM_SIGMA = 1.5
SSIM_RADIUS = 5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    p = as_cube_array(pred)
    t = as_cube_array(target)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    return p, t


def _band_mse(p: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.mean((p - t) ** 2, axis=(1, 2))


def psnr(pred, target, data_range: float = 1.0) -> float:
    p, t = _pair(pred, target)
    mse = _band_mse(p, t)
    with np.errstate(divide="ignore"):
        per_band = 10.0 * np.log10(data_range**2 / mse)
    return float(np.mean(per_band))


def _ssim_band(x: np.ndarray, y: np.ndarray, data_range: float) -> float:
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    def blur(img):
        return ndimage.gaussian_filter(img, SSIM_SIGMA, truncate=SSIM_RADIUS / SSIM_SIGMA, mode="reflect")

    mx, my = blur(x), blur(y)
    vx = blur(x * x) - mx * mx
    vy = blur(y * y) - my * my
    cxy = blur(x * y) - mx * my
    s = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2))
    r = SSIM_RADIUS
    return float(s[r:-r, r:-r].mean())


def ssim(pred, target, data_range: float = 1.0) -> float:
    """Single-scale SSIM (11x11 Gaussian window, sigma 1.5), band-averaged.

    The map is averaged over pixels whose window lies fully inside the image.
    """
    p, t = _pair(pred, target)
    if min(p.shape[1:]) < 2 * SSIM_RADIUS + 1:
        raise ValueError("SSIM needs height and width >= 11")
    return float(np.mean([_ssim_band(p[b], t[b], data_range) for b in range(p.shape[0])]))


def _angles_deg(p: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.degrees(spectral_angles(p, t))


def sam_deg(pred, target) -> float:
    """Mean per-pixel spectral angle in degrees."""
    p, t = _pair(pred, target)
    return float(np.mean(_angles_deg(p, t)))


def _constant_bands(x: np.ndarray) -> np.ndarray:
    return np.ptp(x.reshape(x.shape[0], -1), axis=1) == 0


def _cc_bands(p: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, int]:
    pc = p.reshape(p.shape[0], -1)
    tc = t.reshape(t.shape[0], -1)
    pc = pc - pc.mean(axis=1, keepdims=True)
    tc = tc - tc.mean(axis=1, keepdims=True)
    valid = ~(_constant_bands(p) | _constant_bands(t))
    denom = np.sqrt(np.sum(pc**2, axis=1) * np.sum(tc**2, axis=1))
    return np.sum(pc * tc, axis=1)[valid] / denom[valid], int(np.count_nonzero(~valid))


def cc(pred, target) -> float:
    """Band-averaged Pearson correlation over bands with nonzero variance in both cubes."""
    values, _ = _cc_bands(*_pair(pred, target))
    if values.size == 0:
        raise ValueError("every band is constant in pred or target; CC undefined")
    return float(np.mean(values))


def rmse(pred, target) -> float:
    p, t = _pair(pred, target)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def _ergas_terms(p: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, int]:
    means = t.mean(axis=(1, 2))
    valid = means != 0
    ratios = np.sqrt(_band_mse(p, t))[valid] / means[valid]
    return ratios, int(np.count_nonzero(~valid))


def ergas(pred, target, scale_ratio: float = 4.0) -> float:
    """Relative global error; band RMSE is normalised by the *target* band mean."""
    ratios, _ = _ergas_terms(*_pair(pred, target))
    if ratios.size == 0:
        raise ValueError("every target band has zero mean; ERGAS undefined")
    return float(100.0 / scale_ratio * np.sqrt(np.mean(ratios**2)))


def local_variation(cube: HsiCube | np.ndarray) -> float:
    x = as_cube_array(cube)
    if x.shape[1] < 3 or x.shape[2] < 3:
        raise ValueError("local variation needs height and width >= 3")
    windows = sliding_window_view(x, (3, 3), axis=(1, 2))
    return float(np.mean(windows.var(axis=(-2, -1))))


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    sam_deg: float
    cc: float
    rmse: float
    ergas: float
    lv: float
    skipped_bands: int = 0

    @staticmethod
    def columns() -> list[str]:
        return [f.name for f in fields(MetricReport)]

    def as_row(self) -> dict[str, str]:
        row = {}
        for name, value in asdict(self).items():
            if isinstance(value, float) and math.isinf(value):
                row[name] = "inf" if value > 0 else "-inf"
            elif isinstance(value, float):
                row[name] = repr(value)
            else:
                row[name] = str(value)
        return row

    def to_csv(self, extra: dict[str, object] | None = None) -> str:
        buf = io.StringIO()
        head = list(extra or {})
        writer = csv.DictWriter(buf, fieldnames=head + self.columns(), lineterminator="\n")
        writer.writeheader()
        writer.writerow({**(extra or {}), **self.as_row()})
        return buf.getvalue()


def report(pred, target, data_range: float = 1.0, scale_ratio: float = 4.0) -> MetricReport:
    """All metrics for one pair. ``lv`` is computed on ``pred``.

    ``skipped_bands`` counts bands dropped by CC or ERGAS.
    """
    p, t = _pair(pred, target)
    degenerate = _constant_bands(p) | _constant_bands(t) | (t.mean(axis=(1, 2)) == 0)
    return MetricReport(
        psnr=psnr(p, t, data_range),
        ssim=ssim(p, t, data_range),
        sam_deg=sam_deg(p, t),
        cc=cc(p, t),
        rmse=rmse(p, t),
        ergas=ergas(p, t, scale_ratio),
        lv=local_variation(p),
        skipped_bands=int(np.count_nonzero(degenerate)),
    )
