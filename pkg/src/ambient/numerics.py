"""Numerical substrate: unitary radix-2 FFT, orthonormal Haar wavelets,
smallest singular values and seeded random streams.

Tensors are plain :class:`numpy.ndarray` objects. Supported dtypes are
float32, float64, complex64 and complex128.
"""

from __future__ import annotations

import numpy as np

RNG_ALGORITHM = "PCG64"

SUPPORTED_DTYPES = (np.float32, np.float64, np.complex64, np.complex128)


def make_rng(seed: int) -> np.random.Generator:
    """Return a generator backed by numpy's PCG64 bit generator."""
    return np.random.Generator(np.random.PCG64(seed))


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return make_rng(seed)


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _fft_last(x: np.ndarray) -> np.ndarray:
    """Unnormalized forward DFT along the last axis (iterative DIT)."""
    n = x.shape[-1]
    lead = x.shape[:-1]
    out = x[..., _bit_reverse_indices(n)]
    m = 1
    while m < n:
        w = np.exp(-1j * np.pi * np.arange(m) / m).astype(out.dtype)
        blocks = out.reshape(*lead, n // (2 * m), 2, m)
        a = blocks[..., 0, :]
        b = blocks[..., 1, :] * w
        out = np.stack((a + b, a - b), axis=-2).reshape(*lead, n)
        m *= 2
    return out


def _complex_dtype(x: np.ndarray):
    return np.complex64 if x.dtype in (np.float32, np.complex64) else np.complex128


def fft(x, axis: int = -1) -> np.ndarray:
    """Unitary DFT along ``axis`` (scaled by ``1/sqrt(n)``).

    Raises
    ------
    ValueError
        If the axis length is not a power of two.
    """
    x = np.asarray(x)
    n = x.shape[axis]
    if not is_power_of_two(n):
        raise ValueError(f"fft length must be a power of two, got {n}")
    xc = np.moveaxis(x.astype(_complex_dtype(x), copy=False), axis, -1)
    out = _fft_last(xc) / np.sqrt(n)
    return np.moveaxis(out, -1, axis).astype(xc.dtype, copy=False)


def ifft(x, axis: int = -1) -> np.ndarray:
    """Inverse of :func:`fft`; equals its adjoint since the transform is unitary."""
    return np.conj(fft(np.conj(np.asarray(x)), axis=axis))


def fftn(x, axes) -> np.ndarray:
    out = np.asarray(x)
    for ax in axes:
        out = fft(out, axis=ax)
    return out


def ifftn(x, axes) -> np.ndarray:
    out = np.asarray(x)
    for ax in axes:
        out = ifft(out, axis=ax)
    return out


def centered_indices(n: int, count: int) -> np.ndarray:
    """Indices of the ``count`` lowest-frequency bins in unshifted FFT order.

    The block is the one that would sit in the middle of an fftshift-ed
    spectrum, i.e. shifted positions ``n//2 - count//2 ... n//2 - count//2 + count - 1``.
    """
    if count > n:
        raise ValueError(f"cannot take {count} central bins out of {n}")
    start = n // 2 - count // 2
    shifted = np.arange(start, start + count)
    return np.sort(np.fft.ifftshift(np.arange(n))[shifted])


# -- Haar wavelets -----------------------------------------------------------

_INV_SQRT2 = 1.0 / np.sqrt(2.0)


def _check_haar(shape, levels: int, axes):
    if levels < 0:
        raise ValueError("levels must be non-negative")
    for ax in axes:
        if shape[ax] % (2**levels):
            raise ValueError(
                f"axis {ax} of length {shape[ax]} not divisible by 2**{levels}"
            )


def max_haar_levels(shape) -> int:
    levels = 0
    while all(s % (2 ** (levels + 1)) == 0 for s in shape):
        levels += 1
    return levels


def haar_fwd(x, levels: int, axes=None) -> np.ndarray:
    """Orthonormal multi-level Haar transform (Mallat layout, same shape as ``x``).

    At each level the current approximation block is split along every axis
    in ``axes`` into an approximation half followed by a detail half.
    """
    out = np.array(x, dtype=np.result_type(x, np.float64) if np.isrealobj(x) else x.dtype, copy=True)
    axes = tuple(range(out.ndim)) if axes is None else tuple(a % out.ndim for a in axes)
    _check_haar(out.shape, levels, axes)
    for lev in range(levels):
        region = tuple(
            slice(0, out.shape[a] >> lev) if a in axes else slice(None) for a in range(out.ndim)
        )
        block = out[region]
        for ax in axes:
            even = np.take(block, np.arange(0, block.shape[ax], 2), axis=ax)
            odd = np.take(block, np.arange(1, block.shape[ax], 2), axis=ax)
            block = np.concatenate(((even + odd) * _INV_SQRT2, (even - odd) * _INV_SQRT2), axis=ax)
        out[region] = block
    return out


def haar_inv(c, levels: int, axes=None) -> np.ndarray:
    """Inverse of :func:`haar_fwd`."""
    out = np.array(c, dtype=np.result_type(c, np.float64) if np.isrealobj(c) else c.dtype, copy=True)
    axes = tuple(range(out.ndim)) if axes is None else tuple(a % out.ndim for a in axes)
    _check_haar(out.shape, levels, axes)
    for lev in reversed(range(levels)):
        region = tuple(
            slice(0, out.shape[a] >> lev) if a in axes else slice(None) for a in range(out.ndim)
        )
        block = out[region]
        for ax in reversed(axes):
            half = block.shape[ax] // 2
            lo = np.take(block, np.arange(half), axis=ax)
            hi = np.take(block, np.arange(half, 2 * half), axis=ax)
            even = (lo + hi) * _INV_SQRT2
            odd = (lo - hi) * _INV_SQRT2
            merged = np.stack((even, odd), axis=ax + 1)
            shape = list(block.shape)
            block = merged.reshape(shape)
        out[region] = block
    return out


# -- linear algebra ----------------------------------------------------------

def min_singular_value(m) -> float:
    """Smallest singular value of a 2-D array (full SVD)."""
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D array, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return float(np.linalg.svd(m, compute_uv=False).min())


def vdot(a, b) -> complex:
    """Inner product ``sum(conj(a) * b)`` over all entries."""
    return np.vdot(np.asarray(a).ravel(), np.asarray(b).ravel())
