import numpy as np
import pytest

from gewdiff.core import NumericError, Rng
from gewdiff.noise import build_schedule
from gewdiff.sampler import (
    ConstantDenoiser,
    GaussianDenoiser,
    LinearDenoiser,
    SamplerConfig,
    ZeroDenoiser,
    init_state,
    multistep_weight,
    sample,
    solver_step,
)

MU = np.array([0.3, -0.2, 0.1])
S2 = np.array([0.5, 1.0, 2.0])
SHAPE = (3, 8, 8)


def gaussian_oracle(z_T, sigma, sigma_max, mu=MU, s2=S2):
    """Closed-form probability-flow solution for a Gaussian data prior."""
    mu = mu[:, None, None]
    s2 = s2[:, None, None]
    return mu + (z_T - mu) * np.sqrt((s2 + sigma**2) / (s2 + sigma_max**2))


def terminal_error(steps, rho=7.0, seed=0):
    schedule = build_schedule(80.0, 0.02, rho, steps)
    z_T = init_state(schedule, SHAPE, Rng(seed))
    cfg = SamplerConfig(schedule=schedule, final_denoise=False)
    z = sample(GaussianDenoiser(MU, S2), None, cfg, SHAPE, z_init=z_T)
    exact = gaussian_oracle(z_T, 0.02, 80.0)
    return np.linalg.norm(z - exact) / np.linalg.norm(exact)


def test_init_state_scale_and_determinism():
    schedule = build_schedule()
    a = init_state(schedule, (10, 100, 100), Rng(1))
    assert np.array_equal(a, init_state(schedule, (10, 100, 100), Rng(1)))
    assert abs(a.std() / 80.0 - 1.0) < 0.01
    assert np.abs(a).max() < 80.0 * 6


def test_constant_denoiser_single_step_exact(nprng):
    c = 0.37
    z = nprng.standard_normal(SHAPE) * 10
    out = solver_step(z, np.full(SHAPE, c), None, 5.0, 2.0)
    assert np.max(np.abs(out - (c + (2.0 / 5.0) * (z - c)))) < 1e-12


def test_constant_denoiser_multistep_exact(nprng):
    c = -1.5
    z = nprng.standard_normal(SHAPE) * 3
    f = np.full(SHAPE, c)
    out = solver_step(z, f, f, 5.0, 2.0, sigma_prev=9.0)
    assert np.max(np.abs(out - (c + 0.4 * (z - c)))) < 1e-12


@pytest.mark.parametrize("steps", [2, 3, 10, 50])
def test_constant_denoiser_full_run_exact(steps):
    schedule = build_schedule(80.0, 0.02, 0.7, steps)
    cfg = SamplerConfig(schedule=schedule, seed=3, final_denoise=False)
    z_T = init_state(schedule, SHAPE, Rng(3))
    out = sample(ConstantDenoiser(0.25), None, cfg, SHAPE)
    expected = 0.25 + (0.02 / 80.0) * (z_T - 0.25)
    assert np.max(np.abs(out - expected)) < 1e-12


def test_step_rejects_non_decreasing_sigma():
    z = np.zeros(SHAPE)
    with pytest.raises(ValueError):
        solver_step(z, z, None, 1.0, 1.0)
    with pytest.raises(ValueError):
        solver_step(z, z, None, 1.0, 2.0)
    with pytest.raises(ValueError):
        solver_step(z, z, z, 2.0, 1.0, sigma_prev=None)


def test_equal_log_steps_give_minus_half():
    assert multistep_weight(4.0, 2.0, 1.0) == pytest.approx(-0.5, abs=1e-15)
    z = np.zeros(SHAPE)
    f_n, f_prev = np.full(SHAPE, 2.0), np.full(SHAPE, 1.0)
    out = solver_step(z, f_n, f_prev, 2.0, 1.0, sigma_prev=4.0)
    assert np.allclose(out, 0.5 * (1.5 * 2.0 - 0.5 * 1.0), atol=1e-15)


def test_gaussian_terminal_state_matches_closed_form():
    assert terminal_error(200) <= 1e-3


def test_gaussian_convergence_order():
    errs = [terminal_error(n) for n in (10, 20, 40)]
    orders = [np.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 1.7, orders


def test_gaussian_denoiser_is_posterior_mean():
    den = GaussianDenoiser(np.array([1.0]), np.array([4.0]))
    z = np.full((1, 1, 1), 3.0)
    # E[x | x + sigma*n = z] for x ~ N(1, 4), sigma = 2
    assert den(z, None, 2.0)[0, 0, 0] == pytest.approx(1.0 + 4.0 / 8.0 * 2.0)


def test_zero_denoiser_scalar_recurrence():
    schedule = build_schedule(80.0, 0.02, 0.7, 12)
    cfg = SamplerConfig(schedule=schedule, seed=5, final_denoise=False)
    out = sample(ZeroDenoiser(), None, cfg, SHAPE)
    factor = 1.0
    for a, b in zip(schedule.sigmas[:-1], schedule.sigmas[1:]):
        factor *= b / a
    z_T = init_state(schedule, SHAPE, Rng(5))
    assert np.allclose(out, factor * z_T, rtol=1e-12, atol=0)
    assert factor == pytest.approx(0.02 / 80.0, rel=1e-12)


def test_sampling_is_affine_in_start():
    schedule = build_schedule(80.0, 0.02, 0.7, 20)
    cfg = SamplerConfig(schedule=schedule, final_denoise=True)
    den = GaussianDenoiser(MU, S2)
    a = init_state(schedule, SHAPE, Rng(1))
    b = init_state(schedule, SHAPE, Rng(2))
    run = lambda z: sample(den, None, cfg, SHAPE, z_init=z)
    lhs = run(0.3 * a + 0.7 * b)
    rhs = 0.3 * run(a) + 0.7 * run(b)
    assert np.allclose(lhs, rhs, atol=1e-10)


def test_determinism():
    cfg = SamplerConfig(seed=11)
    den = GaussianDenoiser(MU, S2)
    assert sample(den, None, cfg, SHAPE).tobytes() == sample(den, None, cfg, SHAPE).tobytes()


def test_nfe_equals_grid_length():
    calls = []

    def counting(z, cond, sigma):
        calls.append(sigma)
        return np.zeros_like(z)

    sample(counting, None, SamplerConfig(), SHAPE)
    assert len(calls) == 50
    assert calls[-1] == 0.02 and calls[0] == 80.0


def test_denoiser_contract_violations():
    with pytest.raises(ValueError):
        sample(lambda z, c, s: np.zeros((1,)), None, SamplerConfig(), SHAPE)
    with pytest.raises(NumericError):
        sample(lambda z, c, s: np.full_like(z, np.nan), None, SamplerConfig(), SHAPE)


def test_linear_denoiser_roundtrip(tmp_path, nprng):
    weight = nprng.standard_normal((3, 3 + 2)) * 0.1
    bias = nprng.standard_normal(3) * 0.1
    den = LinearDenoiser(weight, bias)
    den.save(tmp_path / "lin.bin")
    back = LinearDenoiser.load(tmp_path / "lin.bin")

    class Cond:
        def stacked(self):
            return np.ones((2, 8, 8))

    z = nprng.standard_normal(SHAPE)
    assert np.array_equal(den(z, Cond(), 1.3), back(z, Cond(), 1.3))
