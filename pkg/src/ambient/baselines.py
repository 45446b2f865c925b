"""Non-diffusion comparators: L1-wavelet reconstruction by monotone FISTA and
the SSDU k-space splitting loss.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .metrics import nrmse
from .numerics import as_rng, haar_fwd, haar_inv, max_haar_levels, vdot
from .operators import LinearOp, MaskSpec, _line_mask_to_full, _round_half_up


# -- FISTA -------------------------------------------------------------------------

@dataclass(frozen=True)
class FistaConfig:
    """``lam`` weights the Haar L1 term; the step is ``1 / L`` with ``L``
    estimated by power iteration on ``A^H A``."""

    lam: float = 0.001
    iters: int = 100
    levels: int | None = None
    power_iters: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.iters < 1:
            raise ValueError("need at least one iteration")


def operator_norm_sq(op: LinearOp, iters: int = 50, seed=0, complex_=True) -> float:
    """Largest eigenvalue of ``A^H A`` by power iteration."""
    rng = as_rng(seed)
    v = rng.standard_normal(op.in_shape)
    if complex_:
        v = v + 1j * rng.standard_normal(op.in_shape)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = op.adjoint(op.apply(v))
        lam = float(np.linalg.norm(w))
        if lam == 0:
            return 0.0
        v = w / lam
    return lam


def soft_threshold(c, tau: float):
    """Complex-aware shrinkage ``c * max(|c| - tau, 0) / |c|``."""
    mag = np.abs(c)
    scale = np.maximum(mag - tau, 0.0) / np.where(mag > 0, mag, 1.0)
    return c * scale


def l1_wavelet_objective(x, y, op: LinearOp, lam: float, levels: int) -> float:
    r = op.apply(x) - y
    return float(0.5 * np.real(vdot(r, r)) + lam * np.sum(np.abs(haar_fwd(x, levels))))


def fista_l1wavelet(y, op: LinearOp, config: FistaConfig = FistaConfig(), x0=None, history: list | None = None):
    """Minimize ``1/2 ||A x - y||^2 + lam ||W x||_1`` with orthonormal Haar ``W``.

    Uses the monotone FISTA variant: the accepted iterate never increases
    the objective. If ``history`` is a list, per-iteration objectives are
    appended to it.
    """
    y = np.asarray(y)
    complex_ = np.iscomplexobj(y) or op.kind in ("mri_acquire", "mri_adjoint_aggregate")
    L = operator_norm_sq(op, config.power_iters, config.seed, complex_)
    if not L > 0:
        raise ValueError("operator has zero norm")
    levels = max_haar_levels(op.in_shape) if config.levels is None else config.levels
    step = 1.0 / L
    dtype = np.complex128 if complex_ else np.float64
    x = np.zeros(op.in_shape, dtype=dtype) if x0 is None else np.asarray(x0, dtype=dtype)
    v = x.copy()
    t = 1.0
    f_x = l1_wavelet_objective(x, y, op, config.lam, levels)

    def prox(u):
        if config.lam == 0:
            return u
        return haar_inv(soft_threshold(haar_fwd(u, levels), config.lam * step), levels)

    for _ in range(config.iters):
        grad = op.adjoint(op.apply(v) - y)
        z = prox(v - step * grad)
        if not complex_:
            z = np.real(z)
        f_z = l1_wavelet_objective(z, y, op, config.lam, levels)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        x_prev = x
        if f_z <= f_x:
            x, f_x = z, f_z
        v = x + (t / t_next) * (z - x) + ((t - 1.0) / t_next) * (x - x_prev)
        t = t_next
        if history is not None:
            history.append(f_x)
    return x


def prox_residual(x, y, op: LinearOp, lam: float, levels: int | None = None) -> float:
    """Relative fixed-point residual ``||x - prox(x - grad/L)|| / ||x||``."""
    levels = max_haar_levels(op.in_shape) if levels is None else levels
    L = operator_norm_sq(op, 100, 0, np.iscomplexobj(x))
    step = 1.0 / L
    u = x - step * op.adjoint(op.apply(x) - y)
    p = haar_inv(soft_threshold(haar_fwd(u, levels), lam * step), levels)
    return float(np.linalg.norm(x - p) / max(np.linalg.norm(x), 1e-300))


# -- SSDU ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SsduSplit:
    """Disjoint partition of the acquired set ``omega`` into ``theta``
    (network input) and ``lam`` (loss), with realized ratio ``rho``."""

    omega: MaskSpec
    theta: MaskSpec
    lam: MaskSpec
    rho: float


def ssdu_split(mask: MaskSpec, rho: float, seed) -> SsduSplit:
    """Uniformly draw ``round(rho |omega|)`` non-ACS kept units into the loss set.

    Units are lines for ``kspace_line`` masks and entries for pixel masks.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    rng = as_rng(seed)
    if mask.kind == "kspace_line":
        units = mask.line_mask()
        protected = np.zeros_like(units)
        protected[mask.acs_indices()] = True
    else:
        units = mask.mask.astype(bool).ravel()
        protected = np.zeros_like(units)
    n_kept = int(units.sum())
    n_loss = _round_half_up(rho * n_kept)
    candidates = np.flatnonzero(units & ~protected)
    if n_loss >= n_kept or n_loss > candidates.size:
        raise ValueError(f"rho={rho} leaves the reconstruction set empty")
    if n_loss == 0:
        raise ValueError(f"rho={rho} leaves the loss set empty")
    chosen = rng.choice(candidates, size=n_loss, replace=False)
    loss_units = np.zeros_like(units)
    loss_units[chosen] = True
    theta_units = units & ~loss_units
    if mask.kind == "kspace_line":
        theta_mask = _line_mask_to_full(theta_units, mask.shape)
        loss_mask = _line_mask_to_full(loss_units, mask.shape)
    else:
        theta_mask = theta_units.reshape(mask.shape).astype(np.float64)
        loss_mask = loss_units.reshape(mask.shape).astype(np.float64)
    theta = replace(mask, mask=theta_mask, seed=None)
    lam = replace(mask, mask=loss_mask, acs_lines=0, seed=None)
    return SsduSplit(mask, theta, lam, n_loss / n_kept)


def ssdu_loss(y_lambda, x_hat, a_lambda: LinearOp) -> float:
    """``||y - A x||_1 / ||y||_1 + ||y - A x||_2 / ||y||_2`` over the loss set."""
    y_lambda = np.asarray(y_lambda)
    n1 = np.sum(np.abs(y_lambda))
    if n1 == 0:
        raise ValueError("loss measurements are all zero")
    r = y_lambda - a_lambda.apply(x_hat)
    return float(np.sum(np.abs(r)) / n1 + np.linalg.norm(r) / np.linalg.norm(y_lambda))


def nrmse_loss(x, x_hat) -> float:
    """``||x - x_hat|| / ||x||``."""
    return nrmse(x, x_hat)
