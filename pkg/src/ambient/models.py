"""Denoisers: closed-form Gaussian-mixture posterior means and a small MLP,
plus clean and ambient training loops.

Analytic denoisers work in a "realified" flat space: complex signals are
mapped to real vectors by interleaving real and imaginary parts, which turns
circular complex noise with unit-variance parts into standard real noise.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .diffusion import standard_noise
from .numerics import as_rng
from .operators import Identity, Inpaint, LinearOp, MriAcquire, MriAggregate, further_corrupt
from .tensorio import load_tensor, read_kv, save_tensor, write_kv


# -- realification ---------------------------------------------------------------

def realify(x, shape) -> np.ndarray:
    """``(*batch, *shape)`` -> ``(*batch, D)`` real; complex entries interleaved."""
    x = np.asarray(x)
    batch = x.shape[: x.ndim - len(shape)]
    if np.iscomplexobj(x):
        return ad.to_real(x).reshape(*batch, -1)
    return x.reshape(*batch, -1)


def unrealify(xr, shape, complex_: bool) -> np.ndarray:
    batch = xr.shape[:-1]
    if complex_:
        return ad.to_complex(xr.reshape(*batch, *shape, 2))
    return xr.reshape(*batch, *shape)


# -- Gaussian mixtures -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GaussianMixturePrior:
    """``sum_k w_k N(mu_k, tau_k^2 I)``; complex means give circular components
    with variance ``tau_k^2`` per real and imaginary part."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        v = np.asarray(self.variances, dtype=np.float64)
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be positive and sum to 1")
        if np.any(v < 0):
            raise ValueError("component variances must be non-negative")
        if len(w) != len(self.means) or len(w) != len(v):
            raise ValueError("weights, means and variances disagree on K")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "variances", v)
        object.__setattr__(self, "means", np.asarray(self.means))

    @property
    def shape(self) -> tuple:
        return self.means.shape[1:]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.means)

    @property
    def flat_means(self) -> np.ndarray:
        return realify(self.means, self.shape)

    def mean(self) -> np.ndarray:
        return np.tensordot(self.weights, self.means, axes=1)

    def sample(self, n: int, rng) -> np.ndarray:
        rng = as_rng(rng)
        k = rng.choice(len(self.weights), size=n, p=self.weights)
        noise = standard_noise((n, *self.shape), self.is_complex, rng)
        tau = np.sqrt(self.variances[k]).reshape(n, *([1] * len(self.shape)))
        return self.means[k] + tau * noise


def gaussian_prior(mean, tau2: float) -> GaussianMixturePrior:
    mean = np.asarray(mean)
    return GaussianMixturePrior(np.ones(1), mean[None], np.array([tau2]))


def random_mixture(shape, n_components: int, seed, spread: float = 2.0, tau2: float = 0.25) -> GaussianMixturePrior:
    """Equal-weight mixture with means drawn as ``spread * N(0, I)``."""
    rng = as_rng(seed)
    shape = tuple(np.atleast_1d(shape))
    means = spread * rng.standard_normal((n_components, *shape))
    return GaussianMixturePrior(np.full(n_components, 1.0 / n_components), means, np.full(n_components, tau2))


def _softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _mixture_parts(prior, xr, sigma):
    """Responsibilities, per-component means and logit gradients for x_t = x0 + sigma eta."""
    mu = prior.flat_means
    tau2 = prior.variances
    v = tau2 + sigma**2
    diff = xr[..., None, :] - mu
    d = mu.shape[-1]
    logits = np.log(prior.weights) - 0.5 * np.sum(diff**2, axis=-1) / v - 0.5 * d * np.log(v)
    r = _softmax(logits)
    c = tau2 / v
    m = c[:, None] * xr[..., None, :] + (1 - c)[:, None] * mu
    g = -diff / v[:, None]
    return r, c, m, g


def gm_denoise(prior: GaussianMixturePrior, x_t, sigma: float) -> np.ndarray:
    """Exact ``E[x0 | x0 + sigma eta = x_t]`` under the mixture."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    x_t = np.asarray(x_t)
    if sigma == 0:
        return x_t.copy()
    xr = realify(x_t, prior.shape)
    r, _, m, _ = _mixture_parts(prior, xr, sigma)
    out = np.einsum("...k,...kd->...d", r, m)
    return unrealify(out, prior.shape, prior.is_complex)


def gm_denoise_vjp(prior: GaussianMixturePrior, x_t, sigma: float, v) -> np.ndarray:
    """``J^T v`` for the Jacobian of :func:`gm_denoise` with respect to ``x_t``."""
    x_t = np.asarray(x_t)
    if sigma == 0:
        return np.asarray(v).copy()
    xr = realify(x_t, prior.shape)
    ur = realify(np.asarray(v, dtype=x_t.dtype if prior.is_complex else np.float64), prior.shape)
    r, c, m, g = _mixture_parts(prior, xr, sigma)
    gbar = np.einsum("...k,...kd->...d", r, g)
    mu_dot = np.einsum("...kd,...d->...k", m, ur)
    out = (r @ c)[..., None] * ur + np.einsum("...k,...kd->...d", r * mu_dot, g - gbar[..., None, :])
    return unrealify(out, prior.shape, prior.is_complex)


# ambient (linearly corrupted) conditioning --------------------------------------

def _ambient_diag(prior, yr, maskr, sigma):
    mu = prior.flat_means
    tau2 = prior.variances
    v = tau2 + sigma**2
    diff = maskr[..., None, :] * (yr[..., None, :] - mu)
    rank = maskr.sum(axis=-1, keepdims=True)
    logits = np.log(prior.weights) - 0.5 * np.sum(diff**2, axis=-1) / v - 0.5 * rank * np.log(v)
    r = _softmax(logits)
    c = tau2 / v
    m = mu + c[:, None] * diff
    g = -diff / v[:, None]
    return r, c, m, g


@dataclass(frozen=True)
class _Factors:
    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray
    full_rank: bool


def _factorize(op: LinearOp, complex_: bool) -> _Factors:
    shape = op.in_shape
    d = int(np.prod(shape)) * (2 if complex_ else 1)
    basis = unrealify(np.eye(d), shape, complex_)
    cols = realify(op.apply(basis), op.out_shape)
    mat = cols.T
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    keep = s > 1e-10 * max(s.max(), 1e-300)
    return _Factors(u[:, keep], s[keep], vt[keep], bool(keep.sum() == d))


def _ambient_matrix(prior, yr, f: _Factors, sigma):
    mu = prior.flat_means
    tau2 = prior.variances
    v = tau2 + sigma**2
    mmu = (mu @ f.vt.T) * f.s  # U^T M mu
    z = ((yr @ f.u)[..., None, :] - mmu) / f.s  # s^-1 U^T (y - M mu), per component
    logits = np.log(prior.weights) - 0.5 * np.sum(z**2, axis=-1) / v - 0.5 * len(f.s) * np.log(v)
    r = _softmax(logits)
    c = tau2 / v
    m = mu + c[:, None] * (z @ f.vt)
    g = -((z / f.s) @ f.u.T) / v[:, None]
    return r, c, m, g


class _AmbientCache:
    def __init__(self):
        self._store = {}

    def get(self, op, complex_):
        key = (id(op), complex_)
        hit = self._store.get(key)
        if hit is None or hit[0] is not op:
            if len(self._store) > 64:
                self._store.clear()
            hit = (op, _factorize(op, complex_))
            self._store[key] = hit
        return hit[1]


_CACHE = _AmbientCache()


def _ambient_parts(prior, y, op, sigma):
    shape = prior.shape
    if isinstance(op, (Identity, Inpaint)) or (isinstance(op, np.ndarray)):
        mask = op.mask if isinstance(op, LinearOp) else op
        mask = np.broadcast_to(mask, np.shape(y)[: np.ndim(y) - len(shape)] + tuple(shape))
        maskr = realify(mask * (1 + 1j) if prior.is_complex else mask, shape).real
        if sigma == 0 and np.any(np.atleast_1d(maskr.sum(axis=-1)) < maskr.shape[-1]):
            raise ValueError("singular conditioning covariance: sigma=0 with a rank-deficient operator")
        yr = realify(y, shape).real if not prior.is_complex else realify(y, shape)
        return _ambient_diag(prior, yr, maskr, sigma), ("diag", maskr)
    f = _CACHE.get(op, prior.is_complex)
    if sigma == 0 and not f.full_rank:
        raise ValueError("singular conditioning covariance: sigma=0 with a rank-deficient operator")
    yr = realify(y, op.out_shape)
    return _ambient_matrix(prior, yr, f, sigma), ("matrix", f)


def gm_ambient_denoise(prior: GaussianMixturePrior, y_t, op, sigma: float) -> np.ndarray:
    """Exact ``E[x0 | A(x0 + sigma eta) = y_t]`` under the mixture.

    ``op`` is a :class:`LinearOp` or a 0/1 mask array (diagonal operator,
    may carry batch dimensions).
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if np.any(prior.variances + sigma**2 == 0):
        raise ValueError("singular conditioning covariance: zero component variance at sigma=0")
    (r, _, m, _), _ = _ambient_parts(prior, y_t, op, sigma)
    out = np.einsum("...k,...kd->...d", r, m)
    return unrealify(out, prior.shape, prior.is_complex)


def gm_ambient_denoise_vjp(prior: GaussianMixturePrior, y_t, op, sigma: float, v) -> np.ndarray:
    """``J^T v`` for :func:`gm_ambient_denoise` with respect to ``y_t``."""
    (r, c, m, g), (mode, extra) = _ambient_parts(prior, y_t, op, sigma)
    ur = realify(np.asarray(v), prior.shape)
    if not prior.is_complex:
        ur = ur.real
    gbar = np.einsum("...k,...kd->...d", r, g)
    mu_dot = np.einsum("...kd,...d->...k", m, ur)
    tail = np.einsum("...k,...kd->...d", r * mu_dot, g - gbar[..., None, :])
    rc = (r @ c)[..., None]
    if mode == "diag":
        lead = rc * extra * ur
    else:
        f = extra
        lead = rc * ((((ur @ f.vt.T) / f.s) @ f.u.T))
    out = lead + tail
    out_shape = prior.shape if mode == "diag" else op.out_shape
    complex_out = prior.is_complex
    return unrealify(out, out_shape, complex_out)


# -- denoiser wrappers used by the samplers -----------------------------------------

class GMDenoiser:
    kind = "analytic_gm"
    conditioning = "none"

    def __init__(self, prior: GaussianMixturePrior):
        self.prior = prior

    def __call__(self, x, sigma):
        return gm_denoise(self.prior, x, sigma)

    def vjp(self, x, sigma, v):
        return gm_denoise_vjp(self.prior, x, sigma, v)


class GMAmbientDenoiser:
    """Analytic ``E[x0 | A(x0 + sigma eta), A]``; conditions on the whole operator."""

    kind = "analytic_gm"
    conditioning = "operator"

    def __init__(self, prior: GaussianMixturePrior):
        self.prior = prior

    def __call__(self, y, op, sigma):
        return gm_ambient_denoise(self.prior, y, op, sigma)

    def vjp(self, y, op, sigma, v):
        return gm_ambient_denoise_vjp(self.prior, y, op, sigma, v)


class AmbientFromClean:
    """Ambient interface over a clean denoiser; the operator is ignored."""

    conditioning = "none"

    def __init__(self, clean):
        self.clean = clean
        self.kind = getattr(clean, "kind", "wrapped")

    def __call__(self, y, op, sigma):
        return self.clean(y, sigma)

    def vjp(self, y, op, sigma, v):
        return self.clean.vjp(y, sigma, v)


# -- MLP -------------------------------------------------------------------------------

@dataclass
class MlpParams:
    """Fully connected tanh network.

    Input layout: ``[realified signal, mask channel (optional), log(sigma)/4]``.
    """

    widths: list
    weights: list
    biases: list
    signal_shape: tuple
    complex_signal: bool = False
    mask_channel: bool = False
    activation: str = "tanh"

    @property
    def signal_dim(self) -> int:
        return int(np.prod(self.signal_shape)) * (2 if self.complex_signal else 1)

    @property
    def input_dim(self) -> int:
        return self.signal_dim + (int(np.prod(self.signal_shape)) if self.mask_channel else 0) + 1

    def copy(self) -> "MlpParams":
        return MlpParams(
            list(self.widths), [w.copy() for w in self.weights], [b.copy() for b in self.biases],
            tuple(self.signal_shape), self.complex_signal, self.mask_channel, self.activation,
        )

    def arrays(self) -> list:
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def with_arrays(self, arrays) -> "MlpParams":
        p = self.copy()
        p.weights = list(arrays[0::2])
        p.biases = list(arrays[1::2])
        return p


def init_mlp(signal_shape, hidden=(64, 64), seed=0, complex_signal=False, mask_channel=False) -> MlpParams:
    rng = as_rng(seed)
    signal_shape = tuple(np.atleast_1d(signal_shape))
    probe = MlpParams([], [], [], signal_shape, complex_signal, mask_channel)
    widths = [probe.input_dim, *hidden, probe.signal_dim]
    weights = [rng.standard_normal((a, b)) / np.sqrt(a) for a, b in zip(widths[:-1], widths[1:])]
    biases = [np.zeros(b) for b in widths[1:]]
    return MlpParams(widths, weights, biases, signal_shape, complex_signal, mask_channel)


def sigma_embedding(sigma, batch: int) -> np.ndarray:
    s = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (batch,))
    return (np.log(s) / 4.0)[:, None]


def _layout(params: MlpParams, y, mask, sigma):
    y = np.asarray(y)
    nd = len(params.signal_shape)
    if tuple(y.shape[y.ndim - nd:]) != tuple(params.signal_shape):
        raise ValueError(f"signal shape {y.shape} does not match layout {params.signal_shape}")
    batch = y.shape[: y.ndim - nd]
    b = int(np.prod(batch))
    if params.complex_signal:
        y = y.astype(np.complex128)
    elif np.iscomplexobj(y):
        raise ValueError("complex input for a real-signal network")
    yr = realify(y, params.signal_shape).reshape(b, -1)
    parts = [yr]
    if params.mask_channel:
        if mask is None:
            raise ValueError("this network expects a mask channel")
        m = np.broadcast_to(np.asarray(mask, dtype=np.float64), (*batch, *params.signal_shape))
        parts.append(m.reshape(b, -1))
    parts.append(sigma_embedding(np.broadcast_to(sigma, batch).reshape(-1) if np.ndim(sigma) else sigma, b))
    inp = np.concatenate(parts, axis=1)
    if inp.shape[1] != params.widths[0]:
        raise ValueError(f"input width {inp.shape[1]} does not match first layer {params.widths[0]}")
    return inp, batch


def mlp_forward(params: MlpParams, inp, weights=None, biases=None):
    """Forward pass on a 2-D input; accepts numpy arrays or :class:`~ambient.autodiff.Var`."""
    weights = params.weights if weights is None else weights
    biases = params.biases if biases is None else biases
    h = inp
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        h = h @ w + b
        if i < last:
            h = ad.tanh(h) if isinstance(h, ad.Var) else np.tanh(h)
    return h


def mlp_denoise(params: MlpParams, y_t, mask, sigma) -> np.ndarray:
    """Deterministic forward pass; output has the signal shape."""
    inp, batch = _layout(params, y_t, mask, sigma)
    out = mlp_forward(params, inp)
    return unrealify(out, params.signal_shape, params.complex_signal).reshape(*batch, *params.signal_shape)


def grad_wrt_params(params: MlpParams, y_t, mask, sigma, loss_fn):
    """Reverse-mode gradient of ``loss_fn(output_var)`` w.r.t. every weight and bias.

    ``output_var`` is the realified network output of shape ``(batch, D)``.
    Returns ``(loss, [dW0, db0, dW1, db1, ...])``.
    """
    inp, _ = _layout(params, y_t, mask, sigma)
    leaves = [ad.leaf(a) for a in params.arrays()]
    out = mlp_forward(params, ad.lift(inp), leaves[0::2], leaves[1::2])
    loss = loss_fn(out)
    if loss.value.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.value.shape}")
    loss.backward()
    return float(loss.value), [np.zeros_like(l.value) if l.grad is None else l.grad for l in leaves]


def grad_wrt_input(params: MlpParams, y_t, mask, sigma, loss_fn) -> np.ndarray:
    """Reverse-mode gradient of ``loss_fn(output_var)`` w.r.t. the signal input."""
    y_t = np.asarray(y_t)
    inp, batch = _layout(params, y_t, mask, sigma)
    d = params.signal_dim
    x = ad.leaf(inp[:, :d])
    rest = ad.lift(inp[:, d:])
    out = mlp_forward(params, ad.concat([x, rest], axis=1))
    loss = loss_fn(out)
    if loss.value.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.value.shape}")
    loss.backward()
    g = np.zeros_like(x.value) if x.grad is None else x.grad
    return unrealify(g, params.signal_shape, params.complex_signal).reshape(*batch, *params.signal_shape)


def _vjp_loss(params, v, batch):
    v = np.asarray(v, dtype=np.complex128 if params.complex_signal else np.float64)
    vr = realify(v, params.signal_shape).reshape(int(np.prod(batch)), -1)
    return lambda out: (out * vr).sum()


class MlpDenoiser:
    kind = "mlp"
    conditioning = "none"

    def __init__(self, params: MlpParams):
        if params.mask_channel:
            raise ValueError("clean denoiser expects a network without a mask channel")
        self.params = params

    def __call__(self, x, sigma):
        return mlp_denoise(self.params, x, None, sigma)

    def vjp(self, x, sigma, v):
        batch = np.shape(x)[: np.ndim(x) - len(self.params.signal_shape)]
        return grad_wrt_input(self.params, x, None, sigma, _vjp_loss(self.params, v, batch))


class MlpAmbientDenoiser:
    """Network conditioned on the concatenated 0/1 mask of the operator."""

    kind = "mlp"
    conditioning = "mask"

    def __init__(self, params: MlpParams):
        if not params.mask_channel:
            raise ValueError("ambient denoiser needs a mask channel")
        self.params = params

    def _mask(self, op):
        if isinstance(op, np.ndarray):
            return op
        try:
            return op.mask
        except TypeError as exc:
            raise TypeError(f"operator kind {op.kind!r} is incompatible with mask conditioning") from exc

    def __call__(self, y, op, sigma):
        return mlp_denoise(self.params, y, self._mask(op), sigma)

    def vjp(self, y, op, sigma, v):
        batch = np.shape(y)[: np.ndim(y) - len(self.params.signal_shape)]
        return grad_wrt_input(self.params, y, self._mask(op), sigma, _vjp_loss(self.params, v, batch))


# -- training ------------------------------------------------------------------------------

class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-2
    batch_size: int = 64
    iters: int = 1000
    seed: int = 0
    momentum: float = 0.9
    sigmas: tuple = (0.5,)
    lr_final: float = 0.1
    delta: float = 0.1
    r_increment: float = 1.0
    hidden: tuple = (64, 64)
    precision: str = "f64"
    optimizer: str = "sgd"

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.iters < 1:
            raise ValueError("lr, batch_size and iters must be positive")
        if self.precision not in ("f32", "f64"):
            raise ValueError("precision must be f32 or f64")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be sgd or adam")
        self.sigmas = tuple(float(s) for s in np.atleast_1d(self.sigmas))
        self.hidden = tuple(int(h) for h in self.hidden)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


def _lr_at(config: TrainConfig, it: int) -> float:
    frac = it / max(config.iters - 1, 1)
    return config.lr * (config.lr_final + (1 - config.lr_final) * 0.5 * (1 + math.cos(math.pi * frac)))


def _sgd(params: MlpParams, config: TrainConfig, step_fn):
    """Momentum SGD or Adam; ``step_fn(params, it, rng)`` returns ``(loss, grads)``.

    For Adam, ``momentum`` is the first-moment decay and the second-moment
    decay is fixed at 0.999.
    """
    rng = as_rng(config.seed)
    dtype = np.float32 if config.precision == "f32" else np.float64
    arrays = [a.astype(dtype) for a in params.arrays()]
    velocity = [np.zeros_like(a) for a in arrays]
    second = [np.zeros_like(a) for a in arrays]
    b1, b2, eps = config.momentum, 0.999, 1e-8
    trace = []
    for it in range(config.iters):
        current = params.with_arrays(arrays)
        loss, grads = step_fn(current, it, rng)
        if not np.isfinite(loss):
            last = trace[-1] if trace else float("nan")
            raise TrainingDiverged(f"loss became {loss} at iteration {it} (last finite loss {last})")
        trace.append(loss)
        lr = _lr_at(config, it)
        for a, v, s2, g in zip(arrays, velocity, second, grads):
            g = g.astype(dtype)
            if config.optimizer == "adam":
                v *= b1
                v += (1 - b1) * g
                s2 *= b2
                s2 += (1 - b2) * g * g
                a -= lr * (v / (1 - b1 ** (it + 1))) / (np.sqrt(s2 / (1 - b2 ** (it + 1))) + eps)
            else:
                v *= config.momentum
                v += g
                a -= lr * v
    return params.with_arrays(arrays), np.asarray(trace)


def _draw_sigmas(config, rng, b):
    return np.asarray(config.sigmas)[rng.integers(len(config.sigmas), size=b)]


def _sq_loss(target_r):
    n = target_r.shape[0]
    return lambda out: ((out - target_r) ** 2).sum() * (1.0 / n)


def train_clean(sample_fn, config: TrainConfig, params: MlpParams | None = None, signal_shape=None):
    """Minimize ``E || h(x0 + sigma eta, sigma) - x0 ||^2``.

    ``sample_fn(rng, batch)`` returns clean signals ``(batch, *shape)``.
    Returns ``(params, loss_trace)``.
    """
    if params is None:
        probe = sample_fn(as_rng(config.seed), 1)
        signal_shape = probe.shape[1:]
        params = init_mlp(signal_shape, config.hidden, config.seed, np.iscomplexobj(probe))

    def step(p, it, rng):
        x0 = sample_fn(rng, config.batch_size)
        s = _draw_sigmas(config, rng, config.batch_size)
        sb = s.reshape(-1, *([1] * len(p.signal_shape)))
        xt = x0 + sb * standard_noise(x0.shape, np.iscomplexobj(x0), rng)
        return grad_wrt_params(p, xt, None, s, _sq_loss(realify(x0, p.signal_shape)))

    return _sgd(params, config, step)


def train_ambient_inpaint(sample_fn, config: TrainConfig, params: MlpParams | None = None):
    """Ambient training from inpainted data.

    ``sample_fn(rng, batch)`` returns ``(y0, masks)`` with ``y0 = masks * x0``.
    Each step erases every observed entry again with probability ``delta``,
    feeds ``A~(y0 + sigma eta)`` with its mask and regresses ``A h`` on ``y0``.
    """
    if config.delta <= 0:
        raise ValueError("ambient training needs delta > 0")
    if params is None:
        y0, _ = sample_fn(as_rng(config.seed), 1)
        params = init_mlp(y0.shape[1:], config.hidden, config.seed, np.iscomplexobj(y0), mask_channel=True)

    def step(p, it, rng):
        y0, masks = sample_fn(rng, config.batch_size)
        tilde = masks * (rng.random(masks.shape) >= config.delta)
        s = _draw_sigmas(config, rng, config.batch_size)
        sb = s.reshape(-1, *([1] * len(p.signal_shape)))
        yt = tilde * (y0 + sb * standard_noise(y0.shape, np.iscomplexobj(y0), rng))
        target = realify(y0, p.signal_shape)
        mask_r = realify(masks * (1 + 1j) if p.complex_signal else masks, p.signal_shape).real
        n = config.batch_size

        def loss(out):
            return (((out * mask_r) - target) ** 2).sum() * (1.0 / n)

        return grad_wrt_params(p, yt, tilde, s, loss)

    return _sgd(params, config, step)


def train_ambient_mri(sample_fn, config: TrainConfig, params: MlpParams | None = None):
    """Ambient training from multi-coil k-space.

    ``sample_fn(rng, batch)`` returns a list of :class:`~ambient.mri_sim.KspaceData`.
    Each step removes lines down to ``R + r_increment``, aggregates the
    further-corrupted coils through the adjoint, adds ``sigma A~ eta`` and
    regresses ``A h`` on ``A x0`` (the adjoint aggregate at the original mask).
    """
    if params is None:
        first = sample_fn(as_rng(config.seed), 1)[0]
        params = init_mlp(first.mask.shape, config.hidden, config.seed, True, mask_channel=True)

    def step(p, it, rng):
        items = sample_fn(rng, config.batch_size)
        for item in items:
            if item.mask.kind != "kspace_line":
                raise ValueError("train_ambient_mri needs kspace_line masks")
        shape = tuple(p.signal_shape)
        tilde = [further_corrupt(it_.mask, rng, target_R=it_.mask.R + config.r_increment) for it_ in items]
        coils = np.stack([it_.coils.maps for it_ in items])
        masks = np.stack([it_.mask.mask for it_ in items])
        tmasks = np.stack([t.mask for t in tilde])
        z = np.stack([it_.z for it_ in items])
        a_op = MriAggregate(masks, coils, shape)
        at_op = MriAggregate(tmasks, coils, shape)
        y0 = MriAcquire(masks, coils, shape).adjoint(z)
        y_tilde = MriAcquire(tmasks, coils, shape).adjoint(z)
        s = _draw_sigmas(config, rng, len(items))
        sb = s.reshape(-1, *([1] * len(shape)))
        yt = y_tilde + sb * at_op.apply(standard_noise(y0.shape, True, rng))
        target = ad.to_real(y0)
        n = len(items)

        def loss(out):
            out_c = out.reshape(n, *shape, 2)
            return ((ad.linear(out_c, a_op, True) - target) ** 2).sum() * (1.0 / n)

        return grad_wrt_params(p, yt, tmasks, s, loss)

    return _sgd(params, config, step)


# -- checkpoints -----------------------------------------------------------------------------

def save_params(directory, params: MlpParams, extra: dict | None = None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        save_tensor(d / f"w{i}.ambt", np.asarray(w, dtype=np.float64))
        save_tensor(d / f"b{i}.ambt", np.asarray(b, dtype=np.float64))
    manifest = {
        "widths": list(params.widths),
        "signal_shape": list(params.signal_shape),
        "complex_signal": int(params.complex_signal),
        "mask_channel": int(params.mask_channel),
        "activation": params.activation,
    }
    manifest.update(extra or {})
    write_kv(d / "manifest.txt", manifest)


def load_params(directory) -> MlpParams:
    d = Path(directory)
    meta = read_kv(d / "manifest.txt")
    widths = [int(w) for w in meta["widths"].split(",")]
    n = len(widths) - 1
    return MlpParams(
        widths,
        [load_tensor(d / f"w{i}.ambt") for i in range(n)],
        [load_tensor(d / f"b{i}.ambt") for i in range(n)],
        tuple(int(s) for s in meta["signal_shape"].split(",")),
        bool(int(meta["complex_signal"])),
        bool(int(meta["mask_channel"])),
        meta.get("activation", "tanh"),
    )

