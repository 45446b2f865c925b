"""Brute-force and Monte-Carlo verifiers for the identifiability results.

* :func:`bruteforce_posterior_mean` enumerates a discrete prior to get the exact
  ``E[x0 | y~_t, A~]`` that an ambient denoiser should learn.
* :func:`expected_mask_fullrank` and :func:`expected_operator_fullrank`
  estimate ``E[P | P~]`` and ``E[A | P~]`` for ``A = sum_i S_i^H F^-1 P F S_i``
  and report how far they are from singular.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .models import realify
from .numerics import as_rng, fftn, min_singular_value
from .operators import CoilMaps, Identity, Inpaint, LinearOp, MaskSpec, centered_indices, lines_for

MAX_OPERATOR_DIM = 64
# draws used only to fit the minimizing direction; fixed so the direction,
# and hence the per-draw variance, does not depend on ``trials``
PILOT_TRIALS = 100_000


@dataclass
class OracleReport:
    claim: str
    estimate: float
    tolerance: float
    trials: int
    passed: bool
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    def to_text(self) -> str:
        items = {
            "claim": self.claim,
            "estimate": repr(float(self.estimate)),
            "tolerance": repr(float(self.tolerance)),
            "trials": self.trials,
            "pass": "true" if self.passed else "false",
            "seed": "none" if self.seed is None else self.seed,
        }
        for k, v in self.extra.items():
            items[k] = repr(float(v)) if isinstance(v, (float, np.floating)) else v
        return "".join(f"{k} = {v}\n" for k, v in items.items())


# -- mask laws -------------------------------------------------------------------

@dataclass(frozen=True)
class MaskLaw:
    """Distribution of the acquisition mask ``P`` and of its further corruption.

    ``kspace_line``: ``round(n/R)`` lines including ``acs_lines`` central ones,
    further corrupted to ``round(n/target_R)`` lines (ACS kept).
    ``pixel``: entries kept with prob ``1 - p``, then erased with prob ``delta``.
    """

    kind: str
    shape: tuple
    p: float = 0.0
    delta: float = 0.0
    R: float = 2.0
    target_R: float = 3.0
    acs_lines: int = 0

    @property
    def n_units(self) -> int:
        return self.shape[-1] if self.kind == "kspace_line" else int(np.prod(self.shape))

    def _acs(self):
        if self.acs_lines == 0:
            return np.zeros(0, dtype=np.int64)
        return centered_indices(self.shape[-1], self.acs_lines)

    def sample_pair(self, rng, trials: int):
        """Joint draws ``(P, P~)`` as boolean unit indicators, shape ``(trials, units)``."""
        rng = as_rng(rng)
        n = self.n_units
        if self.kind == "pixel":
            p_full = rng.random((trials, n)) >= self.p
            return p_full, p_full & (rng.random((trials, n)) >= self.delta)
        acs = self._acs()
        k_r, k_t = lines_for(n, self.R), lines_for(n, self.target_R)
        free = np.setdiff1d(np.arange(n), acs)
        p_full = np.zeros((trials, n), dtype=bool)
        p_full[:, acs] = True
        keys = rng.random((trials, free.size))
        order = np.argsort(keys, axis=1)
        kept = free[order[:, : k_r - acs.size]]
        np.put_along_axis(p_full, kept, True, axis=1)
        tilde = p_full.copy()
        tilde[np.arange(trials)[:, None], kept[:, : k_r - k_t]] = False
        return p_full, tilde

    def exact_conditional(self, tilde_units) -> np.ndarray:
        """Exact ``E[P | P~]`` per unit.

        Line masks: ``P`` given ``P~`` adds ``k_R - k_target`` lines uniformly
        among the absent ones (every superset of the right size is equally
        likely). Pixel masks: independent entries with
        ``Pr[P=1 | P~=0] = (1-p) delta / ((1-p) delta + p)``.
        """
        tilde_units = np.asarray(tilde_units, dtype=bool)
        out = np.ones(tilde_units.shape)
        if self.kind == "pixel":
            q = (1 - self.p) * self.delta / ((1 - self.p) * self.delta + self.p)
            out[~tilde_units] = q
            return out
        n = self.n_units
        r = lines_for(n, self.R) - lines_for(n, self.target_R)
        absent = n - int(tilde_units.sum())
        out[~tilde_units] = r / absent if absent else 1.0
        return out

    def sample_conditional(self, tilde_units, rng, trials: int):
        """Draws of ``P`` given ``P~``; returns ``(samples, proposals)``.

        Line masks use the exact conditional; pixel masks use rejection from
        the joint law, so ``proposals >= len(samples)``.
        """
        rng = as_rng(rng)
        tilde_units = np.asarray(tilde_units, dtype=bool)
        n = self.n_units
        if self.kind == "kspace_line":
            r = lines_for(n, self.R) - lines_for(n, self.target_R)
            absent = np.flatnonzero(~tilde_units)
            out = np.broadcast_to(tilde_units, (trials, n)).copy()
            if r:
                pick = np.argsort(rng.random((trials, absent.size)), axis=1)[:, :r]
                out[np.arange(trials)[:, None], absent[pick]] = True
            return out, trials
        accepted, proposals, chunk = [], 0, max(1024, trials)
        have = 0
        while have < trials:
            p_full, tilde = self.sample_pair(rng, chunk)
            proposals += chunk
            hit = np.all(tilde == tilde_units, axis=1)
            accepted.append(p_full[hit])
            have += int(hit.sum())
            if proposals >= 200 * max(trials, chunk) and have == 0:
                raise RuntimeError("rejection sampler never accepted; conditioning event has negligible mass")
        return np.concatenate(accepted)[:trials], proposals

    def units_to_diag(self, units) -> np.ndarray:
        """Expand unit indicators (lines or entries) to full diagonal masks."""
        units = np.asarray(units, dtype=np.float64)
        lead = units.shape[:-1]
        if self.kind == "kspace_line":
            ones = (1,) * (len(self.shape) - 1)
            return np.broadcast_to(units.reshape(*lead, *ones, units.shape[-1]), (*lead, *self.shape)).copy()
        return units.reshape(*lead, *self.shape)


def law_for(mask: MaskSpec, delta: float = 0.1, target_R: float | None = None) -> MaskLaw:
    """The law that produced a realized mask, with the standard further corruption."""
    if mask.kind == "pixel":
        return MaskLaw("pixel", mask.shape, p=mask.p, delta=delta)
    return MaskLaw("kspace_line", mask.shape, R=mask.R, target_R=mask.R + 1 if target_R is None else target_R,
                   acs_lines=mask.acs_lines)


def _pilot_estimate(scalars_fn, direction_fn, pilot, samples):
    """Estimate of ``min_v v^H E[M] v`` for ``M`` linear in the sample.

    The minimizing direction is fitted on an independent pilot draw and the
    Rayleigh quotient is averaged over the main draws, so the estimate is a
    mean of i.i.d. scalars with an honest standard error. It can only be
    biased upwards, by a term quadratic in the direction error. Fitting and
    evaluating on the same draws would bias the minimum downwards, and
    swapping two halves correlates the two averages.
    """
    vals = scalars_fn(direction_fn(pilot.mean(axis=0)), samples)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals)))


def expected_mask_fullrank(law: MaskLaw, tilde_units, trials: int = 100_000, seed=0,
                           threshold: float = 0.0, pilot_trials: int = PILOT_TRIALS) -> OracleReport:
    """Monte-Carlo ``E[P | P~]``; reports its smallest diagonal entry.

    Passes when that entry exceeds ``threshold``. ``plugin`` is the minimum
    of the averaged diagonal.
    """
    rng = as_rng(seed)
    pilot, _ = law.sample_conditional(tilde_units, rng, pilot_trials)
    samples, proposals = law.sample_conditional(tilde_units, rng, trials)
    pilot, samples = pilot.astype(np.float64), samples.astype(np.float64)

    def direction(mean):
        return int(np.argmin(mean))

    est, se = _pilot_estimate(lambda k, block: block[:, k], direction, pilot, samples)
    exact = float(law.exact_conditional(tilde_units).min())
    return OracleReport(
        "expected_mask_fullrank", est, threshold, len(samples), bool(est > threshold),
        seed if isinstance(seed, int) else None,
        {"std_error": se, "exact": exact, "plugin": float(samples.mean(axis=0).min()),
         "acceptance_rate": len(samples) / proposals},
    )


def dft_matrix(shape) -> np.ndarray:
    """Unitary multi-dimensional DFT as an explicit ``N x N`` matrix."""
    shape = tuple(shape)
    n = int(np.prod(shape))
    basis = np.eye(n, dtype=np.complex128).reshape(n, *shape)
    cols = fftn(basis, axes=tuple(range(1, len(shape) + 1))).reshape(n, n)
    return cols.T


def aggregate_matrix(diag_mask, coils: CoilMaps, dft=None) -> np.ndarray:
    """``sum_i S_i^H F^H diag(m) F S_i`` for a (possibly fractional) mask ``m``."""
    shape = coils.shape
    n = int(np.prod(shape))
    if n > MAX_OPERATOR_DIM:
        raise ValueError(f"explicit operator of dimension {n} exceeds the limit of {MAX_OPERATOR_DIM}")
    F = dft_matrix(shape) if dft is None else dft
    m = np.asarray(diag_mask, dtype=np.float64).reshape(n)
    inner = F.conj().T @ (m[:, None] * F)
    out = np.zeros((n, n), dtype=np.complex128)
    for s in coils.maps.reshape(coils.n_coils, n):
        out += s.conj()[:, None] * inner * s[None, :]
    return out


def expected_operator_fullrank(coils: CoilMaps, law: MaskLaw, tilde_units, trials: int = 100_000, seed=0,
                               threshold: float = 0.01, domain: str = "kspace",
                               pilot_trials: int = PILOT_TRIALS) -> OracleReport:
    """Monte-Carlo ``E[A | P~]`` as an explicit matrix; reports its smallest singular value.

    ``E[A | P~]`` is Hermitian positive semidefinite, so its smallest
    singular value is its smallest eigenvalue, evaluated along a direction
    fitted on an independent pilot draw.
    ``domain="kspace"`` exploits linearity in ``P``; ``domain="image"``
    builds every ``F^-1 P F`` explicitly, which must agree up to Monte-Carlo
    error. Passes when the estimate exceeds ``threshold``. ``exact`` comes
    from the closed-form conditional, ``plugin`` from the averaged mask.
    """
    if tuple(law.shape) != tuple(coils.shape):
        raise ValueError("mask law and coil maps disagree on shape")
    n = int(np.prod(coils.shape))
    if n > MAX_OPERATOR_DIM:
        raise ValueError(f"explicit operator of dimension {n} exceeds the limit of {MAX_OPERATOR_DIM}")
    rng = as_rng(seed)
    pilot, _ = law.sample_conditional(tilde_units, rng, pilot_trials)
    samples, _ = law.sample_conditional(tilde_units, rng, trials)
    pilot = law.units_to_diag(pilot).reshape(len(pilot), n)
    diag = law.units_to_diag(samples).reshape(len(samples), n)
    F = dft_matrix(coils.shape)
    maps = coils.maps.reshape(coils.n_coils, n)

    def direction(mean_diag):
        _, vecs = np.linalg.eigh(aggregate_matrix(mean_diag, coils, F))
        return vecs[:, 0]

    if domain == "kspace":
        def scalars(v, block):
            w = np.sum(np.abs((maps * v) @ F.T) ** 2, axis=0)
            return block @ w
    elif domain == "image":
        def scalars(v, block):
            u = maps * v
            out = np.empty(len(block))
            for start in range(0, len(block), 4096):
                chunk = block[start:start + 4096]
                conj = np.einsum("ka,jk,kb->jab", F.conj(), chunk, F, optimize=True)
                out[start:start + 4096] = np.real(np.einsum("ia,jab,ib->j", u.conj(), conj, u, optimize=True))
            return out
    else:
        raise ValueError(f"unknown domain {domain!r}")
    est, se = _pilot_estimate(scalars, direction, pilot, diag)
    exact_diag = law.units_to_diag(law.exact_conditional(tilde_units))
    exact = min_singular_value(aggregate_matrix(exact_diag, coils, F))
    plugin = min_singular_value(aggregate_matrix(diag.mean(axis=0), coils, F))
    return OracleReport(
        "expected_operator_fullrank", est, threshold, len(samples), bool(est > threshold),
        seed if isinstance(seed, int) else None,
        {"std_error": se, "exact": exact, "plugin": plugin, "coils": coils.n_coils},
    )


# -- posterior means ---------------------------------------------------------------

def _as_mask_or_op(mask_or_op):
    if isinstance(mask_or_op, (Identity, Inpaint)):
        return mask_or_op.mask, None
    if isinstance(mask_or_op, LinearOp):
        return None, mask_or_op
    return np.asarray(mask_or_op, dtype=np.float64), None


def bruteforce_posterior_mean(atoms, weights, y_t, mask_or_op, sigma: float) -> np.ndarray:
    """Exact ``E[x0 | y~_t, A~]`` for a discrete prior ``sum_k w_k delta(x_k)``.

    ``y~_t = A~ (x0 + sigma eta)``. For diagonal masks the likelihood lives on
    the kept coordinates; for a general operator it lives on the range of
    ``A~`` with covariance ``sigma^2 A~ A~^H`` (eigendecomposition, zero
    eigenvalues dropped). ``y_t`` may carry leading batch axes matching the mask.
    """
    atoms = np.asarray(atoms)
    w = np.asarray(weights, dtype=np.float64)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if len(atoms) > 64:
        raise ValueError("prior support limited to 64 atoms")
    shape = atoms.shape[1:]
    xr = realify(atoms, shape)
    mask, op = _as_mask_or_op(mask_or_op)
    y_t = np.asarray(y_t)
    if op is None:
        batch = y_t.shape[: y_t.ndim - len(shape)]
        m = np.broadcast_to(mask, (*batch, *shape)).astype(np.float64)
        if np.iscomplexobj(atoms):
            m = m + 1j * m
        mr = realify(m, shape).real if np.iscomplexobj(m) else realify(m, shape)
        yr = realify(y_t.astype(atoms.dtype, copy=False), shape)
        diff = yr[..., None, :] - mr[..., None, :] * xr
        logl = -0.5 * np.sum(mr[..., None, :] * diff**2, axis=-1) / sigma**2
    else:
        complex_ = np.iscomplexobj(atoms) or op.kind.startswith("mri")
        Am = op.as_matrix(complex_input=complex_)
        if complex_:
            Ar = np.zeros((2 * Am.shape[0], 2 * Am.shape[1]))
            Ar[0::2, 0::2], Ar[0::2, 1::2] = Am.real, -Am.imag
            Ar[1::2, 0::2], Ar[1::2, 1::2] = Am.imag, Am.real
            xr = realify(atoms.astype(np.complex128), shape)
        else:
            Ar = np.real(Am)
        out_shape = tuple(op.out_shape)
        batch = y_t.shape[: y_t.ndim - len(out_shape)]
        yr = realify(y_t.astype(np.complex128) if complex_ else y_t, out_shape).reshape(*batch, -1)
        lam, U = np.linalg.eigh(Ar @ Ar.T)
        keep = lam > 1e-10 * max(lam.max(), 1e-300)
        U, lam = U[:, keep], lam[keep]
        proj = (yr[..., None, :] - xr @ Ar.T) @ U
        logl = -0.5 * np.sum(proj**2 / lam, axis=-1) / sigma**2
    logp = np.log(w) + logl
    top = logp.max(axis=-1, keepdims=True)
    if not np.all(np.isfinite(top)):
        raise FloatingPointError("degenerate likelihood: no atom has finite density")
    post = np.exp(logp - top)
    post /= post.sum(axis=-1, keepdims=True)
    return np.tensordot(post, atoms, axes=(-1, 0))


def theorem1_grid(atoms, weights, p: float, delta: float, sigmas, n_per: int, seed=0):
    """Held-out test inputs ``(sigma, y~_t, A~)`` for the inpainting toy."""
    rng = as_rng(seed)
    atoms = np.asarray(atoms)
    grid = []
    for s in sigmas:
        k = rng.choice(len(atoms), size=n_per, p=np.asarray(weights))
        mask = (rng.random((n_per, *atoms.shape[1:])) >= p) & (rng.random((n_per, *atoms.shape[1:])) >= delta)
        mask = mask.astype(np.float64)
        y = mask * (atoms[k] + s * rng.standard_normal((n_per, *atoms.shape[1:])))
        grid.append((float(s), y, mask))
    return grid


def theorem1_check(model_fn, oracle_fn, grid, tolerance: float = 0.05, seed=None) -> OracleReport:
    """Max over noise levels of ``||H - D||_F / ||D||_F``.

    ``model_fn(y, mask, sigma)`` is the trained denoiser and
    ``oracle_fn(y, mask, sigma)`` the exact posterior mean.
    """
    devs = {}
    for sigma, y, mask in grid:
        d = oracle_fn(y, mask, sigma)
        h = model_fn(y, mask, sigma)
        devs[sigma] = float(np.linalg.norm(h - d) / np.linalg.norm(d))
    worst = max(devs.values())
    extra = {f"deviation_sigma_{s:g}": v for s, v in devs.items()}
    return OracleReport("theorem1", worst, tolerance, sum(len(g[1]) for g in grid), bool(worst < tolerance),
                        seed, extra)


def fourier_conjugate(diag, shape) -> np.ndarray:
    """``F^-1 diag(d) F`` as an explicit matrix; its singular values are those of ``diag(d)``."""
    F = dft_matrix(shape)
    d = np.asarray(diag).reshape(-1)
    return F.conj().T @ (d[:, None] * F)


# -- verification drivers ------------------------------------------------------------

def adjoint_suite(seed=0) -> dict:
    """One small instance of every operator family."""
    from .operators import (Composite, Downsample, MriAcquire, MriAggregate, gaussian_cs_operator,
                            make_coil_maps, make_kspace_mask, make_pixel_mask)
    mask = make_kspace_mask((16, 16), 4, 4, seed)
    coils = make_coil_maps((16, 16), 4, seed=seed)
    return {
        "identity": Identity((8, 8)),
        "inpaint": Inpaint(make_pixel_mask((8, 8), 0.3, seed).mask),
        "gaussian_cs": gaussian_cs_operator(64, 20, seed),
        "downsample": Downsample((16, 16), 2),
        "mri_acquire": MriAcquire(mask, coils),
        "mri_adjoint_aggregate": MriAggregate(mask, coils),
        "composite": Composite(Downsample((16, 16), 2), MriAggregate(mask, coils)),
    }


def adjoint_report(trials: int = 100, seed=0, tolerance: float = 1e-10) -> OracleReport:
    from .operators import adjoint_check
    devs = {name: adjoint_check(op, trials, seed) for name, op in adjoint_suite(seed).items()}
    worst = max(devs.values())
    return OracleReport("adjoints", worst, tolerance, trials, bool(worst < tolerance), seed,
                        {f"deviation_{k}": v for k, v in devs.items()})


def _composite_fn(a, b):
    from . import autodiff as ad
    h = ad.tanh(a @ b)
    scale = ad.exp(a.sum(axis=1, keepdims=True) * 0.1)
    denom = ad.sqrt(b * b + 1.0).mean()
    mixed = ad.concat([h * scale, ad.log(b * b + 2.0)[0:1, :]], axis=0)
    return (mixed / denom).sum() + (a[:, 0] ** 3).sum()


def gradient_check(points: int = 100, seed=0, tolerance: float = 1e-4, h: float = 1e-6) -> OracleReport:
    """Reverse-mode directional derivatives against central differences.

    Each point draws a random composite expression of the engine's
    primitives, and a random MLP (alternating real/complex signals and
    mask conditioning) with gradients taken w.r.t. parameters and input.
    """
    from . import autodiff as ad
    from .models import grad_wrt_input, grad_wrt_params, init_mlp, mlp_denoise
    rng = as_rng(seed)
    worst = 0.0

    def rel(a, b):
        return abs(a - b) / max(abs(a), abs(b), 1e-8)

    for k in range(points):
        a0, b0 = rng.standard_normal((3, 4)), rng.standard_normal((4, 5))
        ga, gb = ad.grad(_composite_fn, a0, b0)
        da, db = rng.standard_normal(a0.shape), rng.standard_normal(b0.shape)
        f = lambda s: _composite_fn(ad.lift(a0 + s * da), ad.lift(b0 + s * db)).value  # noqa: E731
        worst = max(worst, rel(np.sum(ga * da) + np.sum(gb * db), (f(h) - f(-h)) / (2 * h)))

        complex_, mask_channel = bool(k % 2), bool((k // 2) % 2)
        params = init_mlp((4,), (8, 8), seed=int(rng.integers(2**31)), complex_signal=complex_,
                          mask_channel=mask_channel)
        batch = 3
        y = rng.standard_normal((batch, 4)) + (1j * rng.standard_normal((batch, 4)) if complex_ else 0)
        mask = (rng.random((batch, 4)) > 0.3).astype(float) if mask_channel else None
        sigma = np.exp(rng.uniform(-2, 1, size=batch))
        target = rng.standard_normal((batch, 8 if complex_ else 4))

        def loss_var(out):
            return ((out - target) ** 2).sum()

        def loss_np(p, yy):
            out = mlp_denoise(p, yy, mask, sigma)
            out = realify(out, (4,)).reshape(batch, -1) if complex_ else out
            return float(((out - target) ** 2).sum())

        _, grads = grad_wrt_params(params, y, mask, sigma, loss_var)
        dirs = [rng.standard_normal(g.shape) for g in grads]
        arrays = params.arrays()
        plus = params.with_arrays([a + h * d for a, d in zip(arrays, dirs)])
        minus = params.with_arrays([a - h * d for a, d in zip(arrays, dirs)])
        fd = (loss_np(plus, y) - loss_np(minus, y)) / (2 * h)
        worst = max(worst, rel(sum(np.sum(g * d) for g, d in zip(grads, dirs)), fd))

        gy = grad_wrt_input(params, y, mask, sigma, loss_var)
        dy = rng.standard_normal(y.shape) + (1j * rng.standard_normal(y.shape) if complex_ else 0)
        fd = (loss_np(params, y + h * dy) - loss_np(params, y - h * dy)) / (2 * h)
        worst = max(worst, rel(float(np.real(np.sum(np.conj(gy) * dy))), fd))
    return OracleReport("gradients", worst, tolerance, points, bool(worst < tolerance), seed)


THEOREM1_DEFAULTS = dict(n=8, atoms=4, p=0.2, delta=0.1, sigmas=(0.2, 0.5, 1.0), hidden=(128, 128),
                         iters=20_000, lr=3e-3, batch_size=256, n_test=2000)


def theorem1_experiment(seed=0, **overrides):
    """Train an ambient MLP on a discrete inpainting toy and compare it to the exact
    posterior mean. Returns ``(trained_report, untrained_report)``."""
    from .models import TrainConfig, init_mlp, mlp_denoise, train_ambient_inpaint
    cfg = {**THEOREM1_DEFAULTS, **overrides}
    n, k = cfg["n"], cfg["atoms"]
    rng = as_rng(seed)
    atoms = rng.choice([-1.0, 1.0], size=(k, n))
    weights = np.full(k, 1.0 / k)

    def sample_fn(r, b):
        idx = r.choice(k, size=b, p=weights)
        masks = (r.random((b, n)) >= cfg["p"]).astype(np.float64)
        return masks * atoms[idx], masks

    tcfg = TrainConfig(lr=cfg["lr"], batch_size=cfg["batch_size"], iters=cfg["iters"], seed=seed,
                       sigmas=cfg["sigmas"], delta=cfg["delta"], hidden=cfg["hidden"], lr_final=0.01,
                       optimizer="adam")
    params, _ = train_ambient_inpaint(sample_fn, tcfg)
    grid = theorem1_grid(atoms, weights, cfg["p"], cfg["delta"], cfg["sigmas"], cfg["n_test"], seed + 1)

    def oracle(y, mask, s):
        return bruteforce_posterior_mean(atoms, weights, y, mask, s)

    trained = theorem1_check(lambda y, m, s: mlp_denoise(params, y, m, s), oracle, grid, seed=seed)
    blank = init_mlp((n,), cfg["hidden"], seed, mask_channel=True)
    untrained = theorem1_check(lambda y, m, s: mlp_denoise(blank, y, m, s), oracle, grid, seed=seed)
    untrained.claim = "theorem1_untrained"
    return trained, untrained


def theorem2_reports(n: int = 16, coils=(1, 2, 4), R: float = 2.0, target_R: float | None = None,
                     acs_lines: int = 2, trials: int = 100_000, seed=0, threshold: float = 0.01) -> list:
    """``expected_operator_fullrank`` on a 1-D line-mask problem, one report per coil count."""
    from .operators import identity_coils, make_coil_maps
    law = MaskLaw("kspace_line", (n,), R=R, target_R=R + 1 if target_R is None else target_R,
                  acs_lines=acs_lines)
    _, tilde = law.sample_pair(as_rng(seed), 1)
    reports = []
    for nc in coils:
        maps = identity_coils((n,)) if nc == 1 else make_coil_maps((n,), nc, seed=seed + nc)
        rep = expected_operator_fullrank(maps, law, tilde[0], trials, seed, threshold)
        rep.extra.update({"n": n, "R": R, "target_R": law.target_R})
        reports.append(rep)
    return reports
