"""Reverse-SDE samplers: unconditional, DPS, Ambient DPS and the one-step
ambient restorer.

All samplers integrate the reverse variance-exploding SDE with
Euler-Maruyama on :func:`~ambient.diffusion.time_grid`. From grid time
``t`` to ``t - dt`` the update is::

    x <- x + 2 sigma_dot sigma dt * (score - gamma_t * grad) + g(t) sqrt(dt) xi

with ``score = (x0_hat - x) / sigma^2`` and
``grad = d/dx 1/2 ||y - A x0_hat(x)||^2``. The deterministic probability-flow
variant halves the drift and drops the noise.

States may carry leading batch dimensions; each batch entry is an independent
trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffusion import NoiseSchedule, standard_noise, time_grid
from .numerics import as_rng
from .operators import LinearOp

GAMMA_RANGE = (0.1, 10.0)


class SamplerError(RuntimeError):
    pass


@dataclass
class SamplerConfig:
    steps: int = 100
    guidance: str = "constant"
    gamma: float = 1.0
    seed: int = 0
    stochastic: bool = True
    allow_any_gamma: bool = False

    def __post_init__(self):
        if self.steps < 2:
            raise ValueError("steps must be >= 2")
        if self.guidance not in ("constant", "normalized"):
            raise ValueError(f"unknown guidance mode {self.guidance!r}")
        lo, hi = GAMMA_RANGE
        if self.guidance == "constant" and not self.allow_any_gamma and self.gamma != 0 and not lo <= self.gamma <= hi:
            raise ValueError(f"constant gamma {self.gamma} outside the recommended range [{lo}, {hi}]")

    @classmethod
    def parse_gamma(cls, text: str, **kw) -> "SamplerConfig":
        """Build from a CLI ``--gamma`` value: ``const:<v>`` or ``normalized``."""
        if text == "normalized":
            return cls(guidance="normalized", **kw)
        if text.startswith("const:"):
            return cls(guidance="constant", gamma=float(text.split(":", 1)[1]), **kw)
        raise ValueError(f"bad gamma spec {text!r}; use const:<v> or normalized")


@dataclass(frozen=True)
class InverseProblem:
    y: np.ndarray
    op: LinearOp

    def __post_init__(self):
        expected = tuple(self.op.out_shape)
        got = np.shape(self.y)[np.ndim(self.y) - len(expected):]
        if tuple(got) != expected:
            raise ValueError(f"measurement shape {np.shape(self.y)} does not match operator output {expected}")


def _batch_norm(r, n_signal_dims):
    axes = tuple(range(r.ndim - n_signal_dims, r.ndim))
    return np.sqrt(np.sum(np.abs(r) ** 2, axis=axes, keepdims=True))


def _integrate(x, schedule, config, rng, direction, callback=None):
    """Shared Euler-Maruyama loop. ``direction(x, sigma)`` returns
    ``(x0_hat, score - gamma * grad)``."""
    grid = time_grid(schedule, config.steps)
    for i in range(len(grid) - 1):
        t, t_next = grid[i], grid[i + 1]
        dt = t - t_next
        sigma = float(schedule.sigma(t))
        _, drift = direction(x, sigma)
        rate = float(schedule.sigma_dot(t)) * sigma * dt
        if config.stochastic:
            x = x + 2.0 * rate * drift + float(schedule.g(t)) * np.sqrt(dt) * standard_noise(x.shape, np.iscomplexobj(x), rng)
        else:
            x = x + rate * drift
        if not np.all(np.isfinite(x)):
            raise SamplerError(f"non-finite state at step {i} (t={t:.4g})")
        if callback is not None:
            callback(i, t_next, x)
    return x


def _initial(shape, complex_, schedule, rng):
    return schedule.sigma_max * standard_noise(tuple(shape), complex_, rng)


def sample_uncond(denoiser, schedule: NoiseSchedule, config: SamplerConfig, shape, complex_=False, callback=None):
    """Unconditional reverse-SDE sample(s) of the given full shape (batch included)."""
    rng = as_rng(config.seed)
    x = _initial(shape, complex_, schedule, rng)

    def direction(x, sigma):
        x0 = denoiser(x, sigma)
        return x0, (x0 - x) / sigma**2

    return _integrate(x, schedule, config, rng, direction, callback)


def _gamma(config, residual, n_dims):
    if config.guidance == "normalized":
        return 1.0 / np.maximum(_batch_norm(residual, n_dims), 1e-12)
    return config.gamma


def dps_sample(denoiser, problem: InverseProblem, schedule: NoiseSchedule, config: SamplerConfig,
               shape, complex_=False, callback=None):
    """Diffusion posterior sampling with a clean denoiser.

    The denoiser must provide ``vjp(x, sigma, v)``; analytic denoisers use
    their closed-form Jacobian, networks use reverse-mode differentiation.
    """
    if not hasattr(denoiser, "vjp"):
        raise TypeError("DPS needs a denoiser with a vector-Jacobian product")
    rng = as_rng(config.seed)
    x = _initial(shape, complex_, schedule, rng)
    op, y = problem.op, problem.y
    n_out = len(op.out_shape)

    def direction(x, sigma):
        x0 = denoiser(x, sigma)
        score = (x0 - x) / sigma**2
        if config.guidance == "constant" and config.gamma == 0:
            return x0, score
        r = op.apply(x0) - y
        grad = denoiser.vjp(x, sigma, op.adjoint(r))
        gamma = _gamma(config, r, n_out)
        if not np.isscalar(gamma):
            gamma = gamma.reshape(gamma.shape[: gamma.ndim - n_out] + (1,) * (x.ndim - gamma.ndim + n_out))
        return x0, score - gamma * grad

    return _integrate(x, schedule, config, rng, direction, callback)


def _check_contract(denoiser, a_train: LinearOp):
    if getattr(denoiser, "conditioning", None) == "mask":
        try:
            a_train.mask
        except TypeError as exc:
            raise TypeError(
                f"operator kind {a_train.kind!r} is incompatible with a mask-conditioned denoiser"
            ) from exc


def adps_sample(denoiser, problem: InverseProblem | None, a_train: LinearOp, schedule: NoiseSchedule,
                config: SamplerConfig, shape, complex_=False, callback=None):
    """Ambient DPS. ``a_train`` stays fixed for the whole trajectory.

    At every step the state is re-corrupted, ``y_train = A_train x``, and the
    ambient posterior mean ``E[x0 | y_train, A_train]`` replaces the clean
    one; the likelihood gradient reaches ``x`` through ``A_train^H``. With
    ``problem=None`` this is unconditional ambient sampling.
    """
    _check_contract(denoiser, a_train)
    rng = as_rng(config.seed)
    x = _initial(shape, complex_, schedule, rng)
    guided = problem is not None and not (config.guidance == "constant" and config.gamma == 0)
    if guided:
        op, y = problem.op, problem.y
        n_out = len(op.out_shape)

    def direction(x, sigma):
        y_train = a_train.apply(x)
        x0 = denoiser(y_train, a_train, sigma)
        score = (x0 - x) / sigma**2
        if not guided:
            return x0, score
        r = op.apply(x0) - y
        grad = a_train.adjoint(denoiser.vjp(y_train, a_train, sigma, op.adjoint(r)))
        gamma = _gamma(config, r, n_out)
        if not np.isscalar(gamma):
            gamma = gamma.reshape(gamma.shape[: gamma.ndim - n_out] + (1,) * (x.ndim - gamma.ndim + n_out))
        return x0, score - gamma * grad

    return _integrate(x, schedule, config, rng, direction, callback)


def aos_predict(denoiser, y, a_op, sigma: float | None = None, schedule: NoiseSchedule | None = None):
    """Ambient one-step restoration: a single forward pass at minimal noise.

    Only meaningful when ``a_op`` follows the training mask distribution;
    out-of-distribution masks carry no guarantee.
    """
    if sigma is None:
        sigma = (schedule or NoiseSchedule()).sigma_min
    _check_contract(denoiser, a_op)
    return denoiser(y, a_op, sigma)
