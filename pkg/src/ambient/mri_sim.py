"""Synthetic multi-coil MRI: ellipse phantoms, noiseless acquisition,
ACS-based intensity normalization and an on-disk dataset layout.

Dataset directory::

    phantom_000000.ambt   complex image
    coils_000000.ambt     complex maps (Nc, *shape)
    mask_000000.ambt      0/1 k-space mask (+ mask_000000.kv sidecar)
    manifest.txt          key = value: count, shape, per-item seeds, config hash
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .numerics import as_rng, centered_indices, ifftn
from .operators import CoilMaps, MaskSpec, MriAcquire, load_mask, make_coil_maps, make_kspace_mask, save_mask
from .tensorio import load_tensor, read_kv, save_tensor, text_hash, write_kv

MAX_MAGNITUDE = 1.5


@dataclass(frozen=True, eq=False)
class Phantom:
    image: np.ndarray
    n_ellipses: int
    intensity_range: tuple
    phase_ramp: tuple
    seed: int | None


def make_phantom(shape, seed, n_ellipses: int = 6, intensity_range=(0.1, 0.5)) -> Phantom:
    """Random-ellipse complex image with a smooth (linear plus offset) phase.

    A bright outer ellipse of intensity 1 holds ``n_ellipses`` smaller
    inclusions whose intensities add or subtract values drawn from
    ``intensity_range``; the magnitude is clipped to ``[0, 1.5]``.
    """
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    if len(shape) != 2:
        raise ValueError("phantoms are 2-D")
    rng = as_rng(seed)
    yy, xx = np.meshgrid(*[np.linspace(-1, 1, s, endpoint=False) + 1.0 / s for s in shape], indexing="ij")

    def ellipse(cy, cx, ay, ax, theta):
        c, s = np.cos(theta), np.sin(theta)
        u = (xx - cx) * c + (yy - cy) * s
        v = -(xx - cx) * s + (yy - cy) * c
        return (u / ax) ** 2 + (v / ay) ** 2 <= 1.0

    mag = ellipse(0.0, 0.0, rng.uniform(0.75, 0.9), rng.uniform(0.6, 0.8), rng.uniform(-0.3, 0.3)).astype(np.float64)
    lo, hi = intensity_range
    for _ in range(n_ellipses):
        cy, cx = rng.uniform(-0.45, 0.45, size=2)
        ay, ax = rng.uniform(0.08, 0.35, size=2)
        value = rng.uniform(lo, hi) * rng.choice([-1.0, 1.0])
        mag += value * ellipse(cy, cx, ay, ax, rng.uniform(0, np.pi))
    mag = np.clip(mag, 0.0, MAX_MAGNITUDE)
    ramp = tuple(float(v) for v in rng.uniform(-1.0, 1.0, size=2))
    offset = float(rng.uniform(-np.pi, np.pi))
    phase = ramp[0] * yy + ramp[1] * xx + offset
    image = mag * np.exp(1j * phase)
    return Phantom(image, n_ellipses, (float(lo), float(hi)), (*ramp, offset), seed if isinstance(seed, int) else None)


@dataclass(frozen=True, eq=False)
class KspaceData:
    """Per-coil k-space ``z[i] = P F S_i x``; masked-out lines are zero."""

    z: np.ndarray
    mask: MaskSpec
    coils: CoilMaps

    def operator(self) -> MriAcquire:
        return MriAcquire(self.mask, self.coils)


def acquire(phantom, coils: CoilMaps, mask: MaskSpec) -> KspaceData:
    image = phantom.image if isinstance(phantom, Phantom) else np.asarray(phantom)
    if image.shape != tuple(coils.shape) or image.shape != tuple(mask.shape):
        raise ValueError(f"shape mismatch: image {image.shape}, coils {coils.shape}, mask {mask.shape}")
    return KspaceData(MriAcquire(mask, coils).apply(image), mask, coils)


def prewhiten(kspace: KspaceData) -> KspaceData:
    """Coil noise decorrelation. Noiseless data have identity noise covariance,
    so this is a unit transform kept for pipeline shape."""
    return kspace


def acs_rss(kspace: KspaceData, acs_size: int = 24) -> np.ndarray:
    """RSS image from the zero-filled central ``acs_size`` block of k-space."""
    shape = kspace.z.shape[1:]
    keep = np.zeros(shape, dtype=bool)
    idx = [centered_indices(s, min(acs_size, s)) for s in shape[-2:]]
    keep[np.ix_(*idx)] = True
    low = ifftn(np.where(keep, kspace.z, 0), axes=(-2, -1))
    return np.sqrt(np.sum(np.abs(low) ** 2, axis=0))


def normalize(kspace: KspaceData, acs_size: int = 24, percentile: float = 99.0):
    """Scale k-space so the 99th percentile of the ACS RSS image is 1.

    The block is clamped to the image size. Returns ``(normalized, scale)``.
    """
    scale = float(np.percentile(acs_rss(kspace, acs_size), percentile))
    if not scale > 0:
        raise ValueError("zero energy in the autocalibration region")
    return replace(kspace, z=kspace.z / scale), scale


# -- datasets ----------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetConfig:
    count: int = 16
    shape: tuple = (16, 16)
    n_coils: int = 4
    R: float = 4.0
    acs_lines: int = 4
    acs_size: int = 24
    seed: int = 0

    def as_dict(self) -> dict:
        return {
            "count": self.count, "shape": list(self.shape), "n_coils": self.n_coils, "R": self.R,
            "acs_lines": self.acs_lines, "acs_size": self.acs_size, "seed": self.seed,
        }

    def digest(self) -> str:
        return text_hash(repr(sorted(self.as_dict().items())))


def item_seeds(master_seed: int, count: int) -> list:
    """Independent per-item seeds derived from the master seed."""
    children = np.random.SeedSequence(master_seed).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("AMBIENT_THREADS", "1")))
    except ValueError:
        return 1


def _make_item(config: DatasetConfig, seed: int):
    rng = as_rng(seed)
    s_ph, s_coil, s_mask = (int(v) for v in rng.integers(0, 2**31 - 1, size=3))
    phantom = make_phantom(config.shape, s_ph)
    coils = make_coil_maps(config.shape, config.n_coils, seed=s_coil)
    mask = make_kspace_mask(config.shape, config.R, config.acs_lines, s_mask)
    return phantom, coils, mask


def write_dataset(directory, config: DatasetConfig) -> list:
    """Generate and store ``config.count`` phantoms. Returns the item seeds."""
    if config.count < 1:
        raise ValueError("dataset needs at least one item")
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    seeds = item_seeds(config.seed, config.count)

    def work(i):
        phantom, coils, mask = _make_item(config, seeds[i])
        save_tensor(d / f"phantom_{i:06d}.ambt", phantom.image)
        save_tensor(d / f"coils_{i:06d}.ambt", coils.maps)
        save_mask(d / f"mask_{i:06d}.ambt", mask)

    with ThreadPoolExecutor(worker_count()) as pool:
        list(pool.map(work, range(config.count)))
    meta = config.as_dict()
    meta["item_seeds"] = seeds
    meta["config_hash"] = config.digest()
    write_kv(d / "manifest.txt", meta)
    return seeds


@dataclass(frozen=True, eq=False)
class DatasetItem:
    index: int
    image: np.ndarray
    coils: CoilMaps
    mask: MaskSpec

    def kspace(self, mask: MaskSpec | None = None) -> KspaceData:
        return acquire(self.image, self.coils, mask or self.mask)


def read_manifest(directory) -> dict:
    path = Path(directory) / "manifest.txt"
    if not path.exists():
        raise FileNotFoundError(f"no dataset manifest in {directory}")
    return read_kv(path)


def load_dataset(directory) -> list:
    d = Path(directory)
    meta = read_manifest(d)
    items = []
    for i in range(int(meta["count"])):
        items.append(DatasetItem(
            i,
            load_tensor(d / f"phantom_{i:06d}.ambt"),
            CoilMaps(load_tensor(d / f"coils_{i:06d}.ambt")),
            load_mask(d / f"mask_{i:06d}.ambt"),
        ))
    return items
