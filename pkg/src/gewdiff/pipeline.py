"""End-to-end runs: codec round trips, sweeps, super-resolution, schedule tables."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .codec import LatentEncoding, encode_latent
from .conditioning import ConditionSet, build_conditions
from .core import HsiCube, NumericError, as_cube_array
from .metrics import MetricReport, report
from .noise import NoiseSchedule, build_schedule
from .sampler import Denoiser, GaussianDenoiser, LinearDenoiser, SamplerConfig, ZeroDenoiser, multistep_weight, sample

__all__ = [
    "PipelineConfig",
    "SrResult",
    "make_denoiser",
    "run_encode_decode_eval",
    "run_sweep",
    "rows_to_csv",
    "run_super_resolution",
    "schedule_table",
    "run_schedule_report",
]


@dataclass(frozen=True)
class PipelineConfig:
    rwa_levels: int = 1
    pca_k: int = 20
    sr_factor: int = 4
    sigma_max: float = 80.0
    sigma_min: float = 0.02
    rho: float = 0.7
    steps: int = 50
    eta: float = 0.5
    red_band: Optional[int] = None
    nir_band: Optional[int] = None
    seed: int = 0
    denoiser: str = "gaussian"
    final_denoise: bool = True
    edge_percentile: float = 90.0
    edge_dilate: int = 1
    segment_grid: int = 1
    codec_source: str = "lr"

    def __post_init__(self) -> None:
        if self.rwa_levels < 1:
            raise ValueError("rwa_levels must be >= 1")
        if self.pca_k < 1:
            raise ValueError("pca_k must be >= 1")
        if self.sr_factor < 1:
            raise ValueError("sr_factor must be >= 1")
        if not self.sigma_max > self.sigma_min > 0:
            raise ValueError("need sigma_max > sigma_min > 0")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.steps < 2:
            raise ValueError("steps must be >= 2")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.codec_source not in ("lr", "hr"):
            raise ValueError("codec_source must be 'lr' or 'hr'")

    @classmethod
    def from_text(cls, text: str, **overrides: Any) -> "PipelineConfig":
        """Parse ``key = value`` lines (``#`` comments allowed), then apply overrides."""
        types = {f.name: f.type for f in fields(cls)}
        values: dict[str, Any] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in types:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            values[key] = _coerce(types[key], value)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @classmethod
    def from_file(cls, path: str | Path, **overrides: Any) -> "PipelineConfig":
        return cls.from_text(Path(path).read_text(), **overrides)

    def schedule(self) -> NoiseSchedule:
        return build_schedule(self.sigma_max, self.sigma_min, self.rho, self.steps)


def _coerce(type_name: str, value: str) -> Any:
    if value.lower() in ("none", ""):
        return None
    if "bool" in type_name:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if "int" in type_name:
        return int(value)
    if "float" in type_name:
        return float(value)
    return value


def _check(array: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(array)):
        raise NumericError(f"{what} contains NaN or infinity")
    return array


def run_encode_decode_eval(hr_cube: HsiCube | np.ndarray, config: PipelineConfig = PipelineConfig(), lossless: bool = False) -> MetricReport:
    """Encode with RWA + PCA and decode straight back, no diffusion in between.

    Residuals are discarded unless ``lossless`` is set, in which case they are
    re-applied (PCA truncation still loses information when ``pca_k`` is
    below the approximation channel count).
    """
    x = as_cube_array(hr_cube)
    enc = encode_latent(x, levels=config.rwa_levels, k=config.pca_k, keep_residuals=lossless)
    recon = _check(enc.decode(zero_residuals=not lossless), "reconstruction")
    return report(recon, x, scale_ratio=config.sr_factor)


def run_sweep(
    hr_cube: HsiCube | np.ndarray,
    levels: Sequence[int] = (1, 2, 3, 4),
    ks: Sequence[int] = (20, 10, 6, 4, 3),
    config: PipelineConfig = PipelineConfig(),
) -> list[dict[str, Any]]:
    """Round-trip metrics for every (levels, k) pair; one dict per row.

    Pairs where ``k`` exceeds the bands left after ``levels`` RWA splits are
    skipped (no row).
    """
    x = as_cube_array(hr_cube)
    rows = []
    for j in levels:
        for k in ks:
            cfg = replace(config, rwa_levels=j, pca_k=k)
            bands = x.shape[0]
            for _ in range(j):
                bands = (bands + 1) // 2 if bands >= 2 else bands
            if k > bands:
                continue
            enc = encode_latent(x, levels=j, k=k)
            recon = _check(enc.decode(), "reconstruction")
            rep = report(recon, x, scale_ratio=cfg.sr_factor)
            rows.append({"rwa_levels": enc.rwa.model.levels, "rwa_bands": enc.rwa.approx_top.shape[0], "pca_k": k, **rep.as_row()})
    return rows


def rows_to_csv(rows: Sequence[dict[str, Any]]) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return buf.getvalue()


def make_denoiser(name: str, conditions: ConditionSet, path: str | Path | None = None) -> Denoiser:
    """Build one of the bundled denoisers.

    ``gaussian`` uses the per-channel statistics of the condition latent as
    its prior; ``zero`` always predicts 0; ``linear-file`` loads an affine
    denoiser from ``path``.
    """
    if name == "gaussian":
        return GaussianDenoiser.fit(conditions.lr_latent)
    if name == "zero":
        return ZeroDenoiser()
    if name == "linear-file":
        if path is None:
            raise ValueError("linear-file denoiser needs a coefficient file")
        return LinearDenoiser.load(path)
    raise ValueError(f"unknown denoiser {name!r}")


@dataclass(frozen=True)
class SrResult:
    cube: HsiCube
    latent: np.ndarray
    conditions: ConditionSet
    codec: LatentEncoding


def run_super_resolution(
    lr_cube: HsiCube | np.ndarray,
    segs: Optional[np.ndarray] = None,
    config: PipelineConfig = PipelineConfig(),
    denoiser: Optional[Denoiser] = None,
    codec: Optional[LatentEncoding] = None,
) -> SrResult:
    """Conditions -> sampling -> inverse PCA (LR basis) -> inverse RWA without residuals.

    ``codec`` replaces the LR-fitted encoding (e.g. one fitted on HR data);
    ``denoiser`` defaults to ``make_denoiser(config.denoiser, ...)``.
    """
    x = as_cube_array(lr_cube)
    conditions, codec = build_conditions(
        x,
        segs,
        config.sr_factor,
        rwa_levels=config.rwa_levels,
        pca_k=config.pca_k,
        red_band=config.red_band,
        nir_band=config.nir_band,
        codec=codec,
        edge_percentile=config.edge_percentile,
        edge_dilate=config.edge_dilate,
        segment_grid=config.segment_grid,
    )
    if denoiser is None:
        denoiser = make_denoiser(config.denoiser, conditions)
    sampler_cfg = SamplerConfig(schedule=config.schedule(), seed=config.seed, final_denoise=config.final_denoise)
    latent = _check(sample(denoiser, conditions, sampler_cfg, conditions.shape), "sampled latent")
    cube = _check(codec.decode(latent), "decoded cube")
    return SrResult(cube=HsiCube(cube), latent=latent, conditions=conditions, codec=codec)


def schedule_table(schedule: NoiseSchedule) -> list[dict[str, float]]:
    """Rows ``(n, sigma, t, dt, gamma)``.

    ``dt`` is ``t[n+1] - t[n]`` and ``gamma`` the multistep weight used when
    stepping from ``n``; both are NaN where undefined (``gamma`` at the first
    and last rows, ``dt`` at the last).
    """
    sig = schedule.sigmas
    ts = schedule.ts
    rows = []
    last = len(sig) - 1
    for n in range(len(sig)):
        dt = ts[n + 1] - ts[n] if n < last else math.nan
        gamma = multistep_weight(sig[n - 1], sig[n], sig[n + 1]) if 0 < n < last else math.nan
        rows.append({"n": n, "sigma": float(sig[n]), "t": float(ts[n]), "dt": float(dt), "gamma": float(gamma)})
    return rows


def run_schedule_report(config: PipelineConfig = PipelineConfig()) -> str:
    rows = [
        {key: ("" if isinstance(val, float) and math.isnan(val) else repr(val) if isinstance(val, float) else val) for key, val in row.items()}
        for row in schedule_table(config.schedule())
    ]
    return rows_to_csv(rows)
