import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ambient.baselines import (
    FistaConfig,
    fista_l1wavelet,
    nrmse_loss,
    operator_norm_sq,
    prox_residual,
    soft_threshold,
    ssdu_loss,
    ssdu_split,
)
from ambient.numerics import haar_inv, max_haar_levels
from ambient.operators import (
    Identity,
    Inpaint,
    MatrixOp,
    MriAcquire,
    gaussian_cs_operator,
    make_coil_maps,
    make_kspace_mask,
    make_pixel_mask,
)


def sparse_haar_signal(n, k, seed):
    rng = np.random.default_rng(seed)
    c = np.zeros(n)
    c[rng.choice(n, k, replace=False)] = rng.standard_normal(k) + np.sign(rng.standard_normal(k))
    return haar_inv(c, max_haar_levels((n,)))


# -- soft threshold --------------------------------------------------------------------

def test_soft_threshold_real_and_complex():
    np.testing.assert_allclose(soft_threshold(np.array([-3.0, -0.5, 0.0, 0.5, 3.0]), 1.0),
                               [-2.0, 0.0, 0.0, 0.0, 2.0])
    z = np.array([3 + 4j, 0.3j])
    np.testing.assert_allclose(soft_threshold(z, 1.0), [2.4 + 3.2j, 0.0])


@given(st.floats(-1e3, 1e3), st.floats(0, 10))
def test_soft_threshold_shrinks(c, tau):
    out = soft_threshold(np.array([c]), tau)[0]
    assert abs(out) <= abs(c) + 1e-12
    assert abs(abs(c) - abs(out) - min(tau, abs(c))) < 1e-9


# -- FISTA ----------------------------------------------------------------------------

def test_operator_norm_matches_svd():
    A = gaussian_cs_operator(32, 12, 3)
    assert operator_norm_sq(A, 200, complex_=False) == pytest.approx(np.linalg.norm(A.matrix, 2) ** 2, rel=1e-6)


def test_fista_monotone_objective():
    A = gaussian_cs_operator(64, 30, 0)
    y = A.apply(sparse_haar_signal(64, 4, 1)) + 0.01 * np.random.default_rng(2).standard_normal(30)
    hist = []
    fista_l1wavelet(y, A, FistaConfig(lam=0.05, iters=200), history=hist)
    assert len(hist) == 200
    assert np.all(np.diff(hist) <= 0)


def test_fista_lambda_zero_identity_is_one_step():
    y = np.random.default_rng(0).standard_normal(16)
    x = fista_l1wavelet(y, Identity(16), FistaConfig(lam=0.0, iters=1))
    np.testing.assert_allclose(x, y, atol=1e-12)


def test_fista_sparse_recovery():
    x = sparse_haar_signal(256, 5, 4)
    A = gaussian_cs_operator(256, 100, 5)
    est = fista_l1wavelet(A.apply(x), A, FistaConfig(lam=0.001, iters=600))
    assert np.linalg.norm(est - x) / np.linalg.norm(x) < 1e-3


def test_fista_fixed_point_residual():
    A = gaussian_cs_operator(64, 30, 0)
    y = A.apply(sparse_haar_signal(64, 4, 1))
    cfg = FistaConfig(lam=0.01, iters=100)
    x10 = fista_l1wavelet(y, A, FistaConfig(lam=cfg.lam, iters=10 * cfg.iters))
    assert prox_residual(x10, y, A, cfg.lam) <= 1e-6


def test_fista_complex_mri_runs():
    shape = (16, 16)
    op = MriAcquire(make_kspace_mask(shape, 2, 4, 0), make_coil_maps(shape, 2, seed=0))
    x = np.zeros(shape, complex)
    x[4:12, 4:12] = 1.0
    hist = []
    est = fista_l1wavelet(op.apply(x), op, FistaConfig(lam=1e-3, iters=50), history=hist)
    assert np.iscomplexobj(est)
    assert np.all(np.diff(hist) <= 0)


def test_fista_errors():
    with pytest.raises(ValueError):
        FistaConfig(lam=-1.0)
    with pytest.raises(ValueError):
        FistaConfig(iters=0)
    with pytest.raises(ValueError):
        fista_l1wavelet(np.zeros(3), MatrixOp(np.zeros((3, 8))), FistaConfig())


# -- SSDU -----------------------------------------------------------------------------

def test_ssdu_split_sizes_and_partition():
    mask = make_kspace_mask((128, 128), 2, 0, 0)
    split = ssdu_split(mask, 0.2, 1)
    theta, lam = split.theta.line_mask(), split.lam.line_mask()
    assert mask.kept_count() == 64
    assert lam.sum() == 13 and theta.sum() == 51
    assert not np.any(theta & lam)
    assert np.array_equal(theta | lam, mask.line_mask())
    assert split.rho == pytest.approx(13 / 64)


def test_ssdu_keeps_acs_in_theta():
    mask = make_kspace_mask((64, 64), 4, 8, 0)
    split = ssdu_split(mask, 0.4, 3)
    assert np.all(split.theta.line_mask()[mask.acs_indices()])
    assert not np.any(split.lam.line_mask()[mask.acs_indices()])


def test_ssdu_measure_preservation():
    # each acquired line lands in the loss set with frequency rho
    mask = make_kspace_mask((128, 128), 2, 0, 0)
    counts = np.zeros(128)
    trials = 10_000
    for s in range(trials):
        counts += ssdu_split(mask, 0.2, s).lam.line_mask()
    freq = counts[mask.line_mask()] / trials
    assert np.all(np.abs(freq - 0.2) <= 0.02)
    assert abs(freq.mean() - 0.2) <= 0.01


def test_ssdu_pixel_mask():
    mask = make_pixel_mask((10, 10), 0.3, 0)
    split = ssdu_split(mask, 0.25, 0)
    assert split.theta.mask.sum() + split.lam.mask.sum() == mask.mask.sum()
    assert np.all(split.theta.mask * split.lam.mask == 0)


def test_ssdu_split_errors():
    mask = make_kspace_mask((16, 16), 4, 4, 0)
    for rho in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            ssdu_split(mask, rho, 0)
    with pytest.raises(ValueError):
        ssdu_split(mask, 0.01, 0)  # rounds to an empty loss set
    with pytest.raises(ValueError):
        ssdu_split(mask, 0.9, 0)  # more loss lines than non-ACS candidates


def test_ssdu_loss_values():
    y = np.array([1.0, 0.0])
    assert ssdu_loss(y, np.zeros(2), Identity(2)) == pytest.approx(2.0)
    rng = np.random.default_rng(0)
    A = Inpaint(np.array([1.0, 0.0, 1.0, 1.0]))
    x_hat = rng.standard_normal(4)
    y = A.apply(rng.standard_normal(4))
    r = y - A.apply(x_hat)
    expected = np.abs(r).sum() / np.abs(y).sum() + np.linalg.norm(r) / np.linalg.norm(y)
    assert ssdu_loss(y, x_hat, A) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(ValueError):
        ssdu_loss(np.zeros(2), np.zeros(2), Identity(2))


def test_nrmse_loss():
    assert nrmse_loss(np.array([3.0, 4.0]), np.zeros(2)) == pytest.approx(1.0)
