"""Linear corruption operators: inpainting masks, k-space line masks,
coil sensitivity maps, the multi-coil MRI composites, Gaussian compressed
sensing and block-average downsampling.

Every operator accepts inputs with arbitrary leading batch dimensions,
``x.shape == (*batch, *in_shape)``. Masks and coil maps may carry their own
leading batch dimensions, which then broadcast against those of ``x``.

k-space masks live in unshifted FFT order. "Lines" are indexed by the last
axis of the image shape and each kept line is fully sampled along the
remaining axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .numerics import as_rng, centered_indices, fftn, ifftn, vdot
from .tensorio import load_tensor, read_kv, save_tensor, write_kv


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def lines_for(n_lines: int, R: float) -> int:
    """Number of kept lines at acceleration ``R``: ``round(n_lines / R)``."""
    return _round_half_up(n_lines / R)


# -- masks -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MaskSpec:
    """A realized 0/1 diagonal corruption mask plus the law that drew it.

    ``kind`` is ``"pixel"`` (independent erasures with probability ``p``) or
    ``"kspace_line"`` (whole lines along the last axis, ``acs_lines`` central
    lines always kept, ``round(n_lines / R)`` lines kept in total).
    """

    kind: str
    shape: tuple
    mask: np.ndarray
    p: float = 0.0
    R: float = 1.0
    acs_lines: int = 0
    seed: int | None = None
    delta: float = 0.0

    @property
    def n_lines(self) -> int:
        return self.shape[-1]

    def line_mask(self) -> np.ndarray:
        if self.kind != "kspace_line":
            raise ValueError("line_mask only defined for kspace_line masks")
        return self.mask.reshape(-1, self.n_lines)[0].astype(bool)

    def acs_indices(self) -> np.ndarray:
        if self.kind != "kspace_line" or self.acs_lines == 0:
            return np.zeros(0, dtype=np.int64)
        return centered_indices(self.n_lines, self.acs_lines)

    def kept_count(self) -> int:
        if self.kind == "kspace_line":
            return int(self.line_mask().sum())
        return int(self.mask.sum())

    def sidecar(self) -> dict:
        return {
            "kind": self.kind,
            "shape": list(self.shape),
            "p": float(self.p),
            "R": float(self.R),
            "acs_lines": self.acs_lines,
            "seed": "none" if self.seed is None else self.seed,
            "delta": float(self.delta),
        }


def _line_mask_to_full(lines: np.ndarray, shape) -> np.ndarray:
    return np.broadcast_to(lines.astype(np.float64), tuple(shape)).copy()


def make_pixel_mask(shape, p: float, seed) -> MaskSpec:
    """Bernoulli inpainting mask: every entry kept independently with prob ``1 - p``."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"erasure probability must satisfy 0 <= p < 1, got {p}")
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    rng = as_rng(seed)
    mask = (rng.random(shape) >= p).astype(np.float64)
    return MaskSpec("pixel", shape, mask, p=float(p), seed=seed if isinstance(seed, int) else None)


def make_kspace_mask(shape, R: float, acs_lines: int, seed) -> MaskSpec:
    """Random line mask at acceleration ``R`` with a fully sampled ACS block."""
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    n = shape[-1]
    if R < 1:
        raise ValueError(f"acceleration must be >= 1, got {R}")
    if acs_lines < 0 or acs_lines > n:
        raise ValueError(f"acs_lines={acs_lines} exceeds the {n} phase-encode lines")
    budget = lines_for(n, R)
    if acs_lines > budget:
        raise ValueError(f"infeasible mask: {acs_lines} ACS lines exceed the budget of {budget} at R={R}")
    rng = as_rng(seed)
    lines = np.zeros(n, dtype=bool)
    acs = centered_indices(n, acs_lines) if acs_lines else np.zeros(0, dtype=np.int64)
    lines[acs] = True
    free = np.flatnonzero(~lines)
    lines[rng.choice(free, size=budget - acs_lines, replace=False)] = True
    return MaskSpec(
        "kspace_line", shape, _line_mask_to_full(lines, shape), R=float(R), acs_lines=acs_lines,
        seed=seed if isinstance(seed, int) else None,
    )


def kspace_mask_from_lines(shape, lines, R: float = 1.0, acs_lines: int = 0) -> MaskSpec:
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    lines = np.asarray(lines, dtype=bool)
    return MaskSpec("kspace_line", shape, _line_mask_to_full(lines, shape), R=float(R), acs_lines=acs_lines)


def further_corrupt(mask: MaskSpec, seed, delta: float | None = None, target_R: float | None = None) -> MaskSpec:
    """Erase additional entries of a realized mask.

    Pixel masks: every kept entry is erased independently with probability
    ``delta > 0``. Line masks: non-ACS kept lines are removed uniformly at
    random until ``round(n_lines / target_R)`` lines remain (default
    ``target_R = R + 1``).
    """
    rng = as_rng(seed)
    if mask.kind == "pixel":
        if delta is None or delta <= 0 or delta >= 1:
            raise ValueError(f"further corruption needs 0 < delta < 1, got {delta}")
        erase = rng.random(mask.mask.shape) < delta
        new = np.where(erase, 0.0, mask.mask)
        return replace(mask, mask=new, delta=float(delta), seed=None)
    if mask.kind != "kspace_line":
        raise ValueError(f"unknown mask kind {mask.kind!r}")
    target_R = mask.R + 1 if target_R is None else target_R
    n = mask.n_lines
    target = lines_for(n, target_R)
    if target < mask.acs_lines:
        raise ValueError(f"target of {target} lines is below the ACS floor of {mask.acs_lines}")
    lines = mask.line_mask().copy()
    protected = np.zeros(n, dtype=bool)
    protected[mask.acs_indices()] = True
    removable = np.flatnonzero(lines & ~protected)
    n_remove = int(lines.sum()) - target
    if n_remove < 0:
        raise ValueError(f"mask keeps {int(lines.sum())} lines, fewer than the target {target}")
    lines[rng.choice(removable, size=n_remove, replace=False)] = False
    return replace(mask, mask=_line_mask_to_full(lines, mask.shape), R=float(target_R), seed=None)


def save_mask(path, mask: MaskSpec) -> None:
    path = Path(path)
    save_tensor(path, mask.mask)
    write_kv(path.with_suffix(".kv"), mask.sidecar())


def load_mask(path) -> MaskSpec:
    path = Path(path)
    arr = load_tensor(path)
    meta = read_kv(path.with_suffix(".kv"))
    seed = None if meta["seed"] == "none" else int(meta["seed"])
    return MaskSpec(
        meta["kind"], tuple(int(s) for s in meta["shape"].split(",")), arr,
        p=float(meta["p"]), R=float(meta["R"]), acs_lines=int(meta["acs_lines"]),
        seed=seed, delta=float(meta["delta"]),
    )


# -- coil maps -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CoilMaps:
    """Complex sensitivity maps ``maps[i]`` with ``sum_i |S_i|^2 = 1`` pointwise."""

    maps: np.ndarray

    @property
    def n_coils(self) -> int:
        return self.maps.shape[0]

    @property
    def shape(self) -> tuple:
        return self.maps.shape[1:]

    def normalization_residual(self) -> float:
        return float(np.max(np.abs(np.sum(np.abs(self.maps) ** 2, axis=0) - 1.0)))


def make_coil_maps(shape, n_coils: int, smoothness: float = 0.5, seed=0) -> CoilMaps:
    """Gaussian-bump magnitudes with random linear phases, renormalized pointwise.

    ``smoothness`` is the bump width as a fraction of the field of view.
    """
    if n_coils < 1:
        raise ValueError("need at least one coil")
    if smoothness <= 0:
        raise ValueError("smoothness must be positive")
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    rng = as_rng(seed)
    grids = np.meshgrid(*[np.linspace(-0.5, 0.5, s, endpoint=False) + 0.5 / s for s in shape], indexing="ij")
    maps = np.empty((n_coils, *shape), dtype=np.complex128)
    for i in range(n_coils):
        angle = 2 * np.pi * (i / n_coils) + rng.uniform(-0.3, 0.3)
        centre = [0.6 * np.cos(angle + k * np.pi / 2) for k in range(len(shape))]
        r2 = sum((g - c) ** 2 for g, c in zip(grids, centre))
        magnitude = np.exp(-r2 / (2 * smoothness**2))
        slopes = rng.uniform(-np.pi, np.pi, size=len(shape))
        phase = sum(s * g for s, g in zip(slopes, grids)) + rng.uniform(-np.pi, np.pi)
        maps[i] = magnitude * np.exp(1j * phase)
    rss = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return CoilMaps(maps / rss)


def identity_coils(shape) -> CoilMaps:
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    return CoilMaps(np.ones((1, *shape), dtype=np.complex128))


# -- linear operators ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinearOp:
    """Base class; subclasses implement ``_apply`` and ``_adjoint``."""

    in_shape: tuple
    out_shape: tuple
    kind: str = field(default="abstract", init=False)

    def apply(self, x):
        return self._apply(np.asarray(x))

    def adjoint(self, y):
        return self._adjoint(np.asarray(y))

    __call__ = apply

    @property
    def mask(self):
        raise TypeError(f"{self.kind} operator has no mask for conditioning")

    def batch_shape(self, x) -> tuple:
        return np.shape(x)[: np.ndim(x) - len(self.in_shape)]

    def as_matrix(self, complex_input: bool = False) -> np.ndarray:
        """Dense matrix of the operator acting on flattened inputs."""
        n = int(np.prod(self.in_shape))
        eye = np.eye(n, dtype=np.complex128 if complex_input else np.float64)
        cols = self.apply(eye.reshape(n, *self.in_shape))
        return cols.reshape(n, -1).T


@dataclass(frozen=True, eq=False)
class Identity(LinearOp):
    kind: str = field(default="identity", init=False)

    def __init__(self, shape):
        shape = tuple(int(s) for s in np.atleast_1d(shape))
        object.__setattr__(self, "in_shape", shape)
        object.__setattr__(self, "out_shape", shape)

    def _apply(self, x):
        return x.copy()

    def _adjoint(self, y):
        return y.copy()

    @property
    def mask(self):
        return np.ones(self.in_shape)


@dataclass(frozen=True, eq=False)
class Inpaint(LinearOp):
    """Diagonal 0/1 mask ``A = diag(mask)``; output keeps the input shape."""

    kind: str = field(default="inpaint", init=False)
    weights: np.ndarray = None

    def __init__(self, mask):
        w = mask.mask if isinstance(mask, MaskSpec) else np.asarray(mask, dtype=np.float64)
        sig = mask.shape if isinstance(mask, MaskSpec) else w.shape
        object.__setattr__(self, "in_shape", tuple(sig))
        object.__setattr__(self, "out_shape", tuple(sig))
        object.__setattr__(self, "weights", w)

    def _apply(self, x):
        return self.weights * x

    def _adjoint(self, y):
        return np.conj(self.weights) * y

    @property
    def mask(self):
        return self.weights


@dataclass(frozen=True, eq=False)
class MatrixOp(LinearOp):
    """Dense matrix acting on the flattened input."""

    kind: str = field(default="gaussian_cs", init=False)
    matrix: np.ndarray = None

    def __init__(self, matrix, in_shape=None, kind="gaussian_cs"):
        matrix = np.asarray(matrix)
        in_shape = (matrix.shape[1],) if in_shape is None else tuple(in_shape)
        if int(np.prod(in_shape)) != matrix.shape[1]:
            raise ValueError("in_shape does not match matrix columns")
        object.__setattr__(self, "in_shape", in_shape)
        object.__setattr__(self, "out_shape", (matrix.shape[0],))
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "kind", kind)

    def _apply(self, x):
        b = self.batch_shape(x)
        return (x.reshape(*b, -1) @ self.matrix.T).reshape(*b, *self.out_shape)

    def _adjoint(self, y):
        b = y.shape[: y.ndim - 1]
        return (y @ np.conj(self.matrix)).reshape(*b, *self.in_shape)


def gaussian_cs_operator(n, m: int, seed) -> MatrixOp:
    """``m x n`` matrix with i.i.d. ``N(0, 1/m)`` entries. ``n`` may be a shape."""
    if m < 1:
        raise ValueError("need at least one measurement")
    in_shape = tuple(int(s) for s in np.atleast_1d(n))
    size = int(np.prod(in_shape))
    rng = as_rng(seed)
    return MatrixOp(rng.standard_normal((m, size)) / np.sqrt(m), in_shape)


@dataclass(frozen=True, eq=False)
class Downsample(LinearOp):
    """Block averaging by ``factor`` over the (at most two) leading signal axes."""

    kind: str = field(default="downsample", init=False)
    factor: int = 1

    def __init__(self, shape, factor: int):
        shape = tuple(int(s) for s in np.atleast_1d(shape))
        spatial = min(len(shape), 2)
        if factor < 1 or any(s % factor for s in shape[:spatial]):
            raise ValueError(f"shape {shape} not divisible by factor {factor}")
        out = tuple(s // factor for s in shape[:spatial]) + shape[spatial:]
        object.__setattr__(self, "in_shape", shape)
        object.__setattr__(self, "out_shape", out)
        object.__setattr__(self, "factor", int(factor))

    @property
    def _spatial(self):
        return min(len(self.in_shape), 2)

    def _apply(self, x):
        f, k = self.factor, self._spatial
        b = self.batch_shape(x)
        nb = len(b)
        split = []
        for s in self.in_shape[:k]:
            split += [s // f, f]
        y = x.reshape(*b, *split, *self.in_shape[k:])
        return y.mean(axis=tuple(nb + 2 * i + 1 for i in range(k)))

    def _adjoint(self, y):
        f, k = self.factor, self._spatial
        b = y.shape[: y.ndim - len(self.out_shape)]
        out = y
        for i in range(k):
            out = np.repeat(out, f, axis=len(b) + i)
        return out / f**k


def downsample_operator(shape, factor: int) -> Downsample:
    return Downsample(shape, factor)


def _mri_parts(mask, coils, shape):
    """Split mask/coil arguments; raw (possibly batched) arrays need ``shape``
    unless the coil maps are unbatched."""
    if isinstance(mask, MaskSpec):
        if mask.kind != "kspace_line":
            raise ValueError("MRI operators need a kspace_line mask, got pixel mask")
        spec, w = mask, mask.mask
        shape = tuple(mask.shape)
    else:
        spec, w = None, np.asarray(mask, dtype=np.float64)
    maps = coils.maps if isinstance(coils, CoilMaps) else np.asarray(coils)
    if shape is None:
        shape = tuple(maps.shape[1:])
    return spec, w, maps, tuple(int(s) for s in np.atleast_1d(shape))


@dataclass(frozen=True, eq=False)
class MriAggregate(LinearOp):
    """``A = sum_i S_i^H F^-1 P F S_i`` (Hermitian, spectrum in ``[0, 1]``)."""

    kind: str = field(default="mri_adjoint_aggregate", init=False)
    line_mask: np.ndarray = None
    coil_maps: np.ndarray = None
    spec: MaskSpec | None = None

    def __init__(self, mask, coils, shape=None):
        spec, w, maps, shape = _mri_parts(mask, coils, shape)
        if maps.shape[-len(shape):] != shape:
            raise ValueError(f"coil maps {maps.shape} do not match image shape {shape}")
        object.__setattr__(self, "in_shape", shape)
        object.__setattr__(self, "out_shape", shape)
        object.__setattr__(self, "line_mask", w)
        object.__setattr__(self, "coil_maps", maps)
        object.__setattr__(self, "spec", spec)

    @property
    def _axes(self):
        return tuple(range(-len(self.in_shape), 0))

    def _apply(self, x):
        nd = len(self.in_shape)
        s = self.coil_maps
        p = np.expand_dims(self.line_mask, -nd - 1)
        xs = np.expand_dims(x, -nd - 1) * s
        k = fftn(xs, self._axes) * p
        return np.sum(np.conj(s) * ifftn(k, self._axes), axis=-nd - 1)

    _adjoint = _apply

    @property
    def mask(self):
        return self.line_mask


def mri_operator(mask, coils, shape=None) -> MriAggregate:
    return MriAggregate(mask, coils, shape)


@dataclass(frozen=True, eq=False)
class MriAcquire(LinearOp):
    """Per-coil measurements ``z_i = P F S_i x``; adjoint aggregates coils."""

    kind: str = field(default="mri_acquire", init=False)
    line_mask: np.ndarray = None
    coil_maps: np.ndarray = None

    def __init__(self, mask, coils, shape=None):
        _, w, maps, shape = _mri_parts(mask, coils, shape)
        object.__setattr__(self, "in_shape", shape)
        object.__setattr__(self, "out_shape", (maps.shape[-len(shape) - 1], *shape))
        object.__setattr__(self, "line_mask", w)
        object.__setattr__(self, "coil_maps", maps)

    @property
    def _axes(self):
        return tuple(range(-len(self.in_shape), 0))

    def _apply(self, x):
        nd = len(self.in_shape)
        p = np.expand_dims(self.line_mask, -nd - 1)
        return fftn(np.expand_dims(x, -nd - 1) * self.coil_maps, self._axes) * p

    def _adjoint(self, z):
        nd = len(self.in_shape)
        p = np.expand_dims(self.line_mask, -nd - 1)
        return np.sum(np.conj(self.coil_maps) * ifftn(z * p, self._axes), axis=-nd - 1)

    @property
    def mask(self):
        return self.line_mask


@dataclass(frozen=True, eq=False)
class Composite(LinearOp):
    """``outer @ inner``."""

    kind: str = field(default="composite", init=False)
    outer: LinearOp = None
    inner: LinearOp = None

    def __init__(self, outer: LinearOp, inner: LinearOp):
        if tuple(outer.in_shape) != tuple(inner.out_shape):
            raise ValueError("operator shapes do not chain")
        object.__setattr__(self, "in_shape", inner.in_shape)
        object.__setattr__(self, "out_shape", outer.out_shape)
        object.__setattr__(self, "outer", outer)
        object.__setattr__(self, "inner", inner)

    def _apply(self, x):
        return self.outer.apply(self.inner.apply(x))

    def _adjoint(self, y):
        return self.inner.adjoint(self.outer.adjoint(y))


def compose(outer: LinearOp, inner: LinearOp) -> Composite:
    return Composite(outer, inner)


def adjoint_check(op: LinearOp, trials: int = 100, seed=0) -> float:
    """Max over random complex pairs of ``|<Ax,y> - <x,A^H y>| / (|Ax| |y|)``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = as_rng(seed)
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(op.in_shape) + 1j * rng.standard_normal(op.in_shape)
        y = rng.standard_normal(op.out_shape) + 1j * rng.standard_normal(op.out_shape)
        ax = op.apply(x)
        ahy = op.adjoint(y)
        scale = max(np.linalg.norm(ax) * np.linalg.norm(y), np.linalg.norm(x) * np.linalg.norm(ahy))
        if scale == 0.0:
            continue
        worst = max(worst, abs(vdot(ax, y) - vdot(x, ahy)) / scale)
    return float(worst)
