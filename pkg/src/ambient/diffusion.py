"""Variance-exploding noise schedule and forward noising.

``sigma(t) = t`` on ``[sigma_min, sigma_max]`` with EDM-style rho spacing of
the reverse-time grid. Scores are ``(E[x0|x_t] - x_t) / sigma^2`` and the
reverse drift is ``-2 sigma_dot sigma * score``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import as_rng


@dataclass(frozen=True)
class NoiseSchedule:
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    rho: float = 7.0
    spacing: str = "edm"

    def __post_init__(self):
        if not 0 < self.sigma_min < self.sigma_max:
            raise ValueError("need 0 < sigma_min < sigma_max")
        if self.spacing not in ("edm", "linear"):
            raise ValueError(f"unknown spacing {self.spacing!r}")

    @property
    def t_min(self) -> float:
        return self.sigma_min

    @property
    def t_max(self) -> float:
        return self.sigma_max

    def sigma(self, t):
        return np.asarray(t, dtype=np.float64) * 1.0

    def sigma_dot(self, t):
        return np.ones_like(np.asarray(t, dtype=np.float64))

    def g(self, t):
        """Diffusion coefficient ``sqrt(2 sigma_dot sigma)``."""
        return np.sqrt(2.0 * self.sigma_dot(t) * self.sigma(t))

    def as_dict(self) -> dict:
        return {"sigma_min": self.sigma_min, "sigma_max": self.sigma_max, "rho": self.rho, "spacing": self.spacing}


def time_grid(schedule: NoiseSchedule, n: int) -> np.ndarray:
    """Strictly decreasing grid of ``n`` times from ``t_max`` to ``t_min``."""
    if n < 2:
        raise ValueError(f"time grid needs at least 2 points, got {n}")
    frac = np.arange(n) / (n - 1)
    if schedule.spacing == "linear":
        t = schedule.t_max + frac * (schedule.t_min - schedule.t_max)
    else:
        inv = 1.0 / schedule.rho
        lo, hi = schedule.t_min**inv, schedule.t_max**inv
        t = (hi + frac * (lo - hi)) ** schedule.rho
    t[0], t[-1] = schedule.t_max, schedule.t_min
    return t


def add_noise(x0, t: float, rng, schedule: NoiseSchedule | None = None):
    """``x0 + sigma(t) * eta``; complex inputs get unit-variance real and imaginary parts."""
    schedule = schedule or NoiseSchedule()
    if not schedule.t_min <= t <= schedule.t_max and t != 0:
        raise ValueError(f"t={t} outside [{schedule.t_min}, {schedule.t_max}]")
    x0 = np.asarray(x0)
    return x0 + schedule.sigma(t) * standard_noise(x0.shape, np.iscomplexobj(x0), as_rng(rng))


def standard_noise(shape, complex_: bool, rng: np.random.Generator):
    if complex_:
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return rng.standard_normal(shape)
