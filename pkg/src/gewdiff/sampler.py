"""Deterministic second-order multistep sampler in data-prediction form.

A denoiser is any callable ``denoiser(z, conditions, sigma) -> z0_hat``
returning an array shaped like ``z``. With ``t = -ln(sigma)`` each step
advances

    z_next = (s_next / s_n) * z_n + (1 - s_next / s_n) * f_tilde

where ``f_tilde`` extrapolates the current and previous denoiser outputs
linearly in ``t``. This is exact when the denoiser output is constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from .core import NumericError, Rng, read_container, standard_normal_field, write_container
from .noise import NoiseSchedule, build_schedule

__all__ = [
    "Denoiser",
    "GaussianDenoiser",
    "ConstantDenoiser",
    "ZeroDenoiser",
    "LinearDenoiser",
    "SamplerConfig",
    "init_state",
    "multistep_weight",
    "solver_step",
    "sample",
]

Denoiser = Callable[[np.ndarray, Any, float], np.ndarray]


@dataclass(frozen=True)
class GaussianDenoiser:
    """Exact posterior mean when ``z0 ~ N(mu, diag(s2))`` per channel.

    Ignores the conditions. The probability-flow ODE then has the closed form
    ``z(s) = mu + (z(s0) - mu) * sqrt((s2 + s**2) / (s2 + s0**2))``.
    """

    mu: np.ndarray
    s2: np.ndarray

    def __post_init__(self) -> None:
        mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        s2 = np.atleast_1d(np.asarray(self.s2, dtype=np.float64))
        if mu.shape != s2.shape or mu.ndim != 1:
            raise ValueError("mu and s2 must be 1-D vectors of equal length")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(s2)) and np.all(s2 > 0)):
            raise ValueError("mu must be finite and s2 finite and positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "s2", s2)

    @classmethod
    def fit(cls, latent: np.ndarray, floor: float = 1e-12) -> "GaussianDenoiser":
        """Per-channel mean and variance of a ``(channels, h, w)`` latent."""
        flat = np.asarray(latent, dtype=np.float64).reshape(latent.shape[0], -1)
        return cls(mu=flat.mean(axis=1), s2=np.maximum(flat.var(axis=1), floor))

    def __call__(self, z: np.ndarray, conditions: Any, sigma: float) -> np.ndarray:
        mu = self.mu[:, None, None]
        s2 = self.s2[:, None, None]
        return (s2 * z + sigma**2 * mu) / (s2 + sigma**2)


@dataclass(frozen=True)
class ConstantDenoiser:
    value: np.ndarray | float

    def __call__(self, z: np.ndarray, conditions: Any, sigma: float) -> np.ndarray:
        return np.broadcast_to(self.value, z.shape).astype(np.float64)


class ZeroDenoiser(ConstantDenoiser):
    def __init__(self) -> None:
        super().__init__(0.0)


@dataclass(frozen=True)
class LinearDenoiser:
    """Affine per-pixel network wrapped in the usual noise-level preconditioning.

    ``z0_hat = c_skip * z + c_out * (W @ [c_in * z; cond] + b)`` with
    ``c_skip = sd**2 / (s**2 + sd**2)``, ``c_out = s * sd / sqrt(s**2 + sd**2)``
    and ``c_in = 1 / sqrt(s**2 + sd**2)``. ``cond`` is the stacked condition
    channels (latent then mask); ``W`` has shape ``(k, k + n_cond)``.
    """

    weight: np.ndarray
    bias: np.ndarray
    sigma_data: float = 0.5

    def __call__(self, z: np.ndarray, conditions: Any, sigma: float) -> np.ndarray:
        k = z.shape[0]
        sd2 = self.sigma_data**2
        c_skip = sd2 / (sigma**2 + sd2)
        c_out = sigma * self.sigma_data / np.sqrt(sigma**2 + sd2)
        c_in = 1.0 / np.sqrt(sigma**2 + sd2)
        parts = [c_in * z]
        if self.weight.shape[1] > k:
            if conditions is None:
                raise ValueError("this denoiser needs condition channels")
            parts.append(conditions.stacked() if hasattr(conditions, "stacked") else np.asarray(conditions))
        features = np.concatenate(parts, axis=0)
        if features.shape[0] != self.weight.shape[1] or self.weight.shape[0] != k:
            raise ValueError(f"weight shape {self.weight.shape} incompatible with {features.shape[0]} input channels")
        # overflow is reported by the sampler's finiteness check instead
        with np.errstate(over="ignore", invalid="ignore"):
            out = self.weight @ features.reshape(features.shape[0], -1) + self.bias[:, None]
            return c_skip * z + c_out * out.reshape(z.shape)

    def save(self, path: str | Path) -> None:
        write_container(path, {"sigma_data": self.sigma_data}, {"weight": self.weight, "bias": self.bias})

    @classmethod
    def load(cls, path: str | Path) -> "LinearDenoiser":
        meta, arrays = read_container(path)
        return cls(weight=arrays["weight"], bias=arrays["bias"], sigma_data=float(meta.get("sigma_data", 0.5)))


@dataclass(frozen=True)
class SamplerConfig:
    schedule: NoiseSchedule = field(default_factory=build_schedule)
    seed: int = 0
    final_denoise: bool = True


def init_state(schedule: NoiseSchedule, shape: tuple[int, ...], rng: Rng) -> np.ndarray:
    """Starting point ``sigma_max * eps``."""
    return schedule.sigmas[0] * standard_normal_field(rng, shape)


def multistep_weight(sigma_prev: float, sigma_n: float, sigma_next: float) -> float:
    """Extrapolation weight ``-0.5 * (t_next - t_n) / (t_n - t_prev)``."""
    h = np.log(sigma_n / sigma_next)
    h_prev = np.log(sigma_prev / sigma_n)
    return -0.5 * h / h_prev


def solver_step(
    z_n: np.ndarray,
    f_n: np.ndarray,
    f_prev: Optional[np.ndarray],
    sigma_n: float,
    sigma_next: float,
    sigma_prev: Optional[float] = None,
) -> np.ndarray:
    """Advance from ``sigma_n`` to ``sigma_next``.

    Without history (``f_prev`` is None) this is the first-order step.
    """
    if not 0 < sigma_next < sigma_n:
        raise ValueError(f"need 0 < sigma_next < sigma_n, got {sigma_next} and {sigma_n}")
    if f_prev is None:
        f_tilde = f_n
    else:
        if sigma_prev is None or not sigma_prev > sigma_n:
            raise ValueError("multistep update needs sigma_prev > sigma_n")
        gamma = multistep_weight(sigma_prev, sigma_n, sigma_next)
        f_tilde = (1.0 - gamma) * f_n + gamma * f_prev
    ratio = sigma_next / sigma_n
    return ratio * z_n + (1.0 - ratio) * f_tilde


def _evaluate(denoiser: Denoiser, z: np.ndarray, conditions: Any, sigma: float) -> np.ndarray:
    out = np.asarray(denoiser(z, conditions, float(sigma)), dtype=np.float64)
    if out.shape != z.shape:
        raise ValueError(f"denoiser returned shape {out.shape}, expected {z.shape}")
    if not np.all(np.isfinite(out)):
        raise NumericError(f"denoiser produced non-finite values at sigma={sigma}")
    return out


def sample(
    denoiser: Denoiser,
    conditions: Any,
    config: SamplerConfig,
    shape: tuple[int, ...],
    z_init: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Integrate from ``sigma_max`` down to ``sigma_min`` along the schedule.

    Uses one denoiser call per grid point: ``N - 1`` steps plus, when
    ``config.final_denoise`` is set, a last data prediction at ``sigma_min``
    which is returned instead of the raw state. ``z_init`` overrides the
    seeded starting noise.
    """
    sigmas = config.schedule.sigmas
    if z_init is None:
        z = init_state(config.schedule, shape, Rng(config.seed))
    else:
        z = np.array(z_init, dtype=np.float64)
        if z.shape != tuple(shape):
            raise ValueError(f"z_init has shape {z.shape}, expected {tuple(shape)}")
    f_prev = None
    for n in range(len(sigmas) - 1):
        f_n = _evaluate(denoiser, z, conditions, sigmas[n])
        z = solver_step(
            z,
            f_n,
            f_prev,
            sigmas[n],
            sigmas[n + 1],
            sigmas[n - 1] if n > 0 else None,
        )
        f_prev = f_n
    if config.final_denoise:
        z = _evaluate(denoiser, z, conditions, sigmas[-1])
    return z
