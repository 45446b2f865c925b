import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ambient.diffusion import NoiseSchedule, add_noise, time_grid
from ambient.samplers import SamplerConfig, sample_uncond


def test_schedule_monotone_and_g_identity():
    s = NoiseSchedule()
    t = time_grid(s, 200)[::-1]
    assert np.all(np.diff(s.sigma(t)) > 0)
    np.testing.assert_allclose(s.g(t) ** 2, 2 * s.sigma_dot(t) * s.sigma(t))
    assert s.sigma(s.t_min) <= 0.002 * s.sigma(s.t_max)


@given(n=st.integers(2, 400))
def test_time_grid_strictly_decreasing(n):
    s = NoiseSchedule()
    g = time_grid(s, n)
    assert len(g) == n and g[0] == s.t_max and g[-1] == s.t_min
    assert np.all(np.diff(g) < 0)


def test_time_grid_two_points_and_error():
    s = NoiseSchedule()
    assert time_grid(s, 2).tolist() == [80.0, 0.002]
    with pytest.raises(ValueError):
        time_grid(s, 1)


def test_linear_spacing():
    g = time_grid(NoiseSchedule(spacing="linear"), 5)
    np.testing.assert_allclose(np.diff(g), np.diff(g)[0])


def test_add_noise_variance():
    x0 = np.zeros(100_000)
    xt = add_noise(x0, 2.0, 0)
    assert abs(np.var(xt) / 4.0 - 1) < 0.02
    xc = add_noise(np.zeros(100_000, complex), 2.0, 1)
    assert abs(np.var(xc.real) / 4 - 1) < 0.02 and abs(np.var(xc.imag) / 4 - 1) < 0.02


def test_add_noise_zero_and_range():
    x0 = np.arange(3.0)
    assert np.array_equal(add_noise(x0, 0.0, 0), x0)
    assert np.array_equal(add_noise(x0, 1.0, 5), add_noise(x0, 1.0, 5))
    with pytest.raises(ValueError):
        add_noise(x0, 100.0, 0)


def test_one_reverse_step_noise_magnitude():
    # zero score contribution: denoiser returns x itself, so the step is pure noise
    s = NoiseSchedule()
    cfg = SamplerConfig(steps=2, seed=3)
    x = sample_uncond(lambda x, sigma: x, s, cfg, (200_000,))
    rng = np.random.default_rng(3)
    x0 = s.sigma_max * rng.standard_normal(200_000)
    dt = s.t_max - s.t_min
    step = x - x0
    np.testing.assert_allclose(step, s.g(s.t_max) * np.sqrt(dt) * rng.standard_normal(200_000), rtol=0, atol=1e-9)
