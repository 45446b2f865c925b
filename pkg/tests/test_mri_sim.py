import numpy as np
import pytest

from ambient.mri_sim import (
    MAX_MAGNITUDE,
    DatasetConfig,
    KspaceData,
    acquire,
    acs_rss,
    item_seeds,
    load_dataset,
    make_phantom,
    normalize,
    prewhiten,
    read_manifest,
    write_dataset,
)
from ambient.numerics import fftn
from ambient.operators import identity_coils, make_coil_maps, make_kspace_mask


def test_phantom_determinism_and_bounds():
    a = make_phantom((32, 32), 5)
    b = make_phantom((32, 32), 5)
    c = make_phantom((32, 32), 6)
    assert np.array_equal(a.image, b.image)
    assert np.abs(a.image).max() <= MAX_MAGNITUDE
    assert np.mean(~np.isclose(a.image, c.image)) >= 0.10
    assert a.seed == 5 and len(a.phase_ramp) == 3


def test_phantom_needs_2d():
    with pytest.raises(ValueError):
        make_phantom((16,), 0)


def test_acquire_single_identity_coil_is_masked_fft():
    shape = (16, 16)
    x = make_phantom(shape, 0).image
    full = make_kspace_mask(shape, 1, 0, 0)
    k = acquire(x, identity_coils(shape), full)
    np.testing.assert_allclose(k.z[0], fftn(x, axes=(-2, -1)), atol=1e-12)
    mask = make_kspace_mask(shape, 4, 2, 1)
    k = acquire(x, identity_coils(shape), mask)
    assert np.all(k.z[:, :, ~mask.line_mask()] == 0)


def test_full_sampling_adjoint_recovers_image():
    shape = (16, 16)
    x = make_phantom(shape, 1).image
    coils = make_coil_maps(shape, 4, seed=2)
    k = acquire(x, coils, make_kspace_mask(shape, 1, 0, 0))
    np.testing.assert_allclose(k.operator().adjoint(k.z), x, atol=1e-12)


def test_acquire_shape_mismatch():
    with pytest.raises(ValueError):
        acquire(np.zeros((8, 8)), identity_coils((16, 16)), make_kspace_mask((16, 16), 2, 2, 0))


def test_normalize_percentile_is_one():
    shape = (32, 32)
    k = acquire(make_phantom(shape, 3).image, make_coil_maps(shape, 4, seed=3), make_kspace_mask(shape, 4, 8, 3))
    kn, scale = normalize(prewhiten(k))
    assert scale > 0
    assert np.percentile(acs_rss(kn), 99) == pytest.approx(1.0, abs=1e-10)


def test_normalize_constant_image():
    shape = (16, 16)
    x = np.full(shape, 2.0 + 0j)
    k = acquire(x, identity_coils(shape), make_kspace_mask(shape, 1, 0, 0))
    kn, scale = normalize(k)
    assert scale == pytest.approx(2.0)
    np.testing.assert_allclose(acs_rss(kn), 1.0, atol=1e-12)


def test_normalize_zero_energy():
    shape = (16, 16)
    k = acquire(np.zeros(shape, complex), identity_coils(shape), make_kspace_mask(shape, 2, 4, 0))
    with pytest.raises(ValueError):
        normalize(k)


def test_item_seeds_distinct_and_stable():
    s = item_seeds(7, 50)
    assert s == item_seeds(7, 50)
    assert len(set(s)) == 50
    assert item_seeds(7, 10) == s[:10]


def _read_all(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_dataset_roundtrip_and_bit_reproducibility(tmp_path, monkeypatch):
    cfg = DatasetConfig(count=5, shape=(16, 16), n_coils=2, R=2, acs_lines=4, seed=3)
    write_dataset(tmp_path / "a", cfg)
    monkeypatch.setenv("AMBIENT_THREADS", "4")
    write_dataset(tmp_path / "b", cfg)
    assert _read_all(tmp_path / "a") == _read_all(tmp_path / "b")
    meta = read_manifest(tmp_path / "a")
    assert int(meta["count"]) == 5 and meta["config_hash"] == cfg.digest()
    items = load_dataset(tmp_path / "a")
    assert len(items) == 5
    assert items[0].mask.kept_count() == 8 and items[0].coils.maps.shape == (2, 16, 16)
    assert isinstance(items[0].kspace(), KspaceData)


def test_dataset_errors(tmp_path):
    with pytest.raises(ValueError):
        write_dataset(tmp_path, DatasetConfig(count=0))
    with pytest.raises(FileNotFoundError):
        read_manifest(tmp_path / "missing")
