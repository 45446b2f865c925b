import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ambient.numerics import fft, ifft
from ambient.operators import (
    Composite,
    Downsample,
    Identity,
    Inpaint,
    MriAcquire,
    MriAggregate,
    adjoint_check,
    further_corrupt,
    gaussian_cs_operator,
    identity_coils,
    kspace_mask_from_lines,
    lines_for,
    load_mask,
    make_coil_maps,
    make_kspace_mask,
    make_pixel_mask,
    mri_operator,
    save_mask,
)


def _pair(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# -- masks -----------------------------------------------------------------------

def test_pixel_mask_p0_keeps_everything():
    assert np.all(make_pixel_mask((4, 4), 0.0, 0).mask == 1)


def test_pixel_mask_keep_fraction():
    m = make_pixel_mask((100_000,), 0.4, 7).mask
    assert abs(m.mean() - 0.6) < 0.005


def test_pixel_mask_rejects_p_one():
    with pytest.raises(ValueError):
        make_pixel_mask((4,), 1.0, 0)


def test_kspace_line_counts_on_128_grid():
    # 20 ACS lines where the budget allows; R=8 keeps only 16 lines, so 10 ACS there
    for R, acs, expected in [(1, 0, 128), (2, 20, 64), (4, 20, 32), (6, 20, 21), (8, 10, 16)]:
        m = make_kspace_mask((4, 128), R, acs, seed=R)
        lines = m.line_mask()
        assert lines.sum() == expected
        assert lines[m.acs_indices()].all()
        # lines are fully kept or dropped along the readout axis
        assert np.all(m.mask == lines[None, :])


def test_kspace_mask_seeds_differ_outside_acs():
    a = make_kspace_mask((128,), 4, 20, 1)
    b = make_kspace_mask((128,), 4, 20, 2)
    acs = a.acs_indices()
    assert np.array_equal(a.line_mask()[acs], b.line_mask()[acs])
    assert not np.array_equal(a.line_mask(), b.line_mask())


def test_kspace_mask_infeasible():
    with pytest.raises(ValueError):
        make_kspace_mask((128,), 8, 20, 0)  # budget 16 < 20 ACS


def test_further_corrupt_kspace_64_to_43():
    m = make_kspace_mask((128,), 2, 20, 0)
    t = further_corrupt(m, 1)
    assert t.line_mask().sum() == 43 == lines_for(128, 3)
    assert t.R == 3


@given(seed=st.integers(0, 10_000), R=st.sampled_from([2.0, 3.0, 4.0]))
def test_further_corrupt_is_subset_and_keeps_acs(seed, R):
    m = make_kspace_mask((32,), R, 4, seed)
    t = further_corrupt(m, seed + 1)
    assert np.all(t.mask <= m.mask)
    assert t.line_mask()[m.acs_indices()].all()


def test_further_corrupt_pixel_rate():
    m = make_pixel_mask((200_000,), 0.0, 0)
    t = further_corrupt(m, 1, delta=0.1)
    assert abs(t.mask.mean() - 0.9) < 0.005
    p = make_pixel_mask((1000,), 0.5, 3)
    assert np.all(further_corrupt(p, 4, delta=0.3).mask <= p.mask)


def test_further_corrupt_errors():
    with pytest.raises(ValueError):
        further_corrupt(make_pixel_mask((8,), 0.2, 0), 0, delta=0.0)
    m = make_kspace_mask((16,), 4, 4, 0)
    with pytest.raises(ValueError):
        further_corrupt(m, 0)  # R+1 budget of 3 lines is below 4 ACS lines


def test_mask_file_roundtrip(tmp_path):
    m = make_kspace_mask((8, 16), 2, 4, 5)
    save_mask(tmp_path / "m.ambt", m)
    back = load_mask(tmp_path / "m.ambt")
    assert np.array_equal(back.mask, m.mask)
    assert (back.kind, back.shape, back.R, back.acs_lines, back.seed) == ("kspace_line", (8, 16), 2.0, 4, 5)


# -- coils -----------------------------------------------------------------------

def test_single_coil_has_unit_modulus():
    c = make_coil_maps((8, 8), 1, seed=3)
    np.testing.assert_allclose(np.abs(c.maps), 1.0, atol=1e-12)


@given(n_coils=st.integers(1, 6), seed=st.integers(0, 1000))
def test_coil_normalization(n_coils, seed):
    assert make_coil_maps((8, 4), n_coils, seed=seed).normalization_residual() < 1e-10


def test_coil_seeds_differ():
    a, b = make_coil_maps((8, 8), 4, seed=0), make_coil_maps((8, 8), 4, seed=1)
    assert not np.allclose(a.maps, b.maps)
    assert a.normalization_residual() < 1e-10 and b.normalization_residual() < 1e-10


# -- operators -------------------------------------------------------------------

def _all_ops(seed=0):
    mask = make_kspace_mask((8, 16), 4, 2, seed)
    coils = make_coil_maps((8, 16), 3, seed=seed)
    return [
        Identity((5,)),
        Inpaint(make_pixel_mask((6, 6), 0.3, seed).mask),
        gaussian_cs_operator(32, 12, seed),
        Downsample((8, 8), 2),
        Downsample((12,), 3),
        MriAcquire(mask, coils),
        MriAggregate(mask, coils),
        Composite(Downsample((8, 16), 2), MriAggregate(mask, coils)),
    ]


@pytest.mark.parametrize("op", _all_ops(), ids=lambda o: o.kind)
def test_adjoint_identity(op):
    assert adjoint_check(op, 100, 0) < 1e-10


@pytest.mark.parametrize("op", _all_ops(), ids=lambda o: o.kind)
def test_linearity(op, rng):
    x, z = _pair(rng, op.in_shape), _pair(rng, op.in_shape)
    a, b = 1.5 - 0.5j, -2.0
    np.testing.assert_allclose(op.apply(a * x + b * z), a * op.apply(x) + b * op.apply(z), atol=1e-12)


def test_identity_adjoint_check_is_zero():
    assert adjoint_check(Identity((4,)), 10, 0) == 0.0


def test_gaussian_cs_scalar_case():
    op = gaussian_cs_operator(1, 1, 3)
    a = op.as_matrix()[0, 0]
    assert op.apply(np.array([2.0]))[0] == pytest.approx(2 * a)
    assert op.adjoint(np.array([2.0]))[0] == pytest.approx(2 * a)


def test_gaussian_cs_isometry_in_expectation(rng):
    x = rng.standard_normal(64)
    energies = [np.sum(gaussian_cs_operator(64, 32, s).apply(x) ** 2) for s in range(1000)]
    assert abs(np.mean(energies) / np.sum(x**2) - 1) < 0.05


def test_downsample_factor_one_is_identity(rng):
    x = rng.standard_normal((4, 4))
    assert np.array_equal(Downsample((4, 4), 1).apply(x), x)


def test_downsample_block_average():
    x = np.arange(16.0).reshape(4, 4)
    np.testing.assert_allclose(Downsample((4, 4), 2).apply(x), [[2.5, 4.5], [10.5, 12.5]])
    np.testing.assert_allclose(Downsample((4, 4), 2).adjoint(np.ones((2, 2))), np.full((4, 4), 0.25))
    with pytest.raises(ValueError):
        Downsample((5, 4), 2)


def test_mri_operator_full_sampling_is_identity(rng):
    mask = make_kspace_mask((8, 8), 1, 0, 0)
    op = mri_operator(mask, make_coil_maps((8, 8), 4, seed=1))
    x = _pair(rng, (8, 8))
    np.testing.assert_allclose(op.apply(x), x, atol=1e-12)


def test_mri_operator_single_coil_is_projection(rng):
    mask = make_kspace_mask((8, 8), 2, 2, 0)
    op = mri_operator(mask, identity_coils((8, 8)))
    x = _pair(rng, (8, 8))
    np.testing.assert_allclose(op.apply(op.apply(x)), op.apply(x), atol=1e-10)
    expected = ifft(mask.line_mask() * fft(np.fft.fft(x, axis=0, norm="ortho")), axis=-1)
    np.testing.assert_allclose(op.apply(x), np.fft.ifft(expected, axis=0, norm="ortho"), atol=1e-12)


def test_mri_operator_hermitian_with_rayleigh_in_unit_interval(rng):
    mask = make_kspace_mask((8, 16), 4, 2, 3)
    op = mri_operator(mask, make_coil_maps((8, 16), 4, seed=2))
    for _ in range(20):
        x, y = _pair(rng, (8, 16)), _pair(rng, (8, 16))
        assert np.isclose(np.vdot(op.apply(x), y), np.conj(np.vdot(op.apply(y), x)))
        q = np.real(np.vdot(x, op.apply(x)))
        assert -1e-12 <= q <= np.vdot(x, x).real + 1e-12


def test_mri_aggregate_equals_acquire_normal(rng):
    mask = make_kspace_mask((8, 8), 2, 2, 1)
    coils = make_coil_maps((8, 8), 2, seed=0)
    x = _pair(rng, (8, 8))
    acq = MriAcquire(mask, coils)
    np.testing.assert_allclose(MriAggregate(mask, coils).apply(x), acq.adjoint(acq.apply(x)), atol=1e-12)


def test_mri_operator_rejects_pixel_mask():
    with pytest.raises(ValueError):
        mri_operator(make_pixel_mask((8, 8), 0.5, 0), identity_coils((8, 8)))


def test_batched_masks_broadcast(rng):
    masks = make_pixel_mask((5, 6), 0.5, 0).mask
    op = Inpaint(masks)
    x = rng.standard_normal((5, 6))
    assert np.array_equal(op.apply(x), masks * x)
    lines = np.stack([make_kspace_mask((8,), 2, 2, s).mask for s in range(3)])
    agg = MriAggregate(lines, identity_coils((8,)), (8,))
    xs = _pair(rng, (3, 8))
    for i in range(3):
        single = MriAggregate(kspace_mask_from_lines((8,), lines[i].astype(bool)), identity_coils((8,)))
        np.testing.assert_allclose(agg.apply(xs)[i], single.apply(xs[i]), atol=1e-12)
