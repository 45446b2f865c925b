import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ambient.metrics import (
    PSNR_CAP,
    batch_metrics,
    compute_metrics,
    mse,
    nrmse,
    psnr,
    read_metrics_csv,
    ssim,
    write_metrics_csv,
)

skimage_metrics = pytest.importorskip("skimage.metrics")


def test_identical_inputs():
    x = np.random.default_rng(0).random((16, 16))
    r = compute_metrics(x, x.copy(), 1.0).samples[0]
    assert r.mse == 0 and r.nrmse == 0 and r.psnr == PSNR_CAP
    assert r.ssim == pytest.approx(1.0, abs=1e-12)


def test_known_values():
    assert nrmse(np.array([3.0, 4.0]), np.zeros(2)) == pytest.approx(1.0)
    assert mse(np.array([1.0, 1.0]), np.array([0.0, 2.0])) == 1.0
    assert psnr(np.array([1.0, 1.0]), np.array([0.0, 2.0]), 10.0) == pytest.approx(20.0)


def test_psnr_decreases_with_noise():
    rng = np.random.default_rng(1)
    x = rng.random((16, 16))
    noise = rng.standard_normal(x.shape)
    values = [psnr(x, x + s * noise, 1.0) for s in (0.01, 0.05, 0.1, 0.5)]
    assert np.all(np.diff(values) < 0)


@pytest.mark.parametrize("shape,seed", [((32, 32), 0), ((20, 27), 1), ((7, 7), 2), ((64, 48), 3)])
def test_ssim_matches_skimage(shape, seed):
    rng = np.random.default_rng(seed)
    x = rng.random(shape)
    y = np.clip(x + 0.2 * rng.standard_normal(shape), 0, 1)
    ref = skimage_metrics.structural_similarity(x, y, data_range=1.0, win_size=7, gaussian_weights=False,
                                                use_sample_covariance=True)
    assert ssim(x, y, 1.0) == pytest.approx(ref, abs=1e-10)


@given(arrays(np.float64, (9, 9), elements=st.floats(0, 1)), arrays(np.float64, (9, 9), elements=st.floats(0, 1)))
def test_ssim_symmetric_and_bounded(x, y):
    a, b = ssim(x, y, 1.0), ssim(y, x, 1.0)
    assert a == pytest.approx(b, abs=1e-12)
    assert -1.0 - 1e-12 <= a <= 1.0 + 1e-12


def test_ssim_complex_uses_magnitude():
    rng = np.random.default_rng(4)
    x = rng.random((16, 16))
    y = x + 0.1 * rng.standard_normal(x.shape)
    phase = np.exp(1j * rng.uniform(0, 2 * np.pi, x.shape))
    assert ssim(x * phase, np.abs(y) * phase, 1.0) == pytest.approx(ssim(x, np.abs(y), 1.0))


def test_errors():
    with pytest.raises(ValueError):
        mse(np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError):
        nrmse(np.zeros(3), np.ones(3))
    with pytest.raises(ValueError):
        psnr(np.zeros(3), np.ones(3), 0.0)
    with pytest.raises(ValueError):
        batch_metrics(np.zeros((2, 4, 4)), np.zeros((3, 4, 4)))


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    refs = rng.random((3, 8, 8)) + 0.1
    ests = refs + 0.05 * rng.standard_normal(refs.shape)
    report = batch_metrics(refs, ests, 1.0, ids=["a", "b", "c"])
    path = tmp_path / "m.csv"
    write_metrics_csv(path, report, {"config_hash": "abc"})
    comments, rows = read_metrics_csv(path)
    assert comments == {"config_hash": "abc"}
    assert [r["id"] for r in rows] == ["a", "b", "c", "mean", "std"]
    for s, r in zip(report.samples, rows):
        assert (r["mse"], r["nrmse"], r["psnr"], r["ssim"]) == (s.mse, s.nrmse, s.psnr, s.ssim)
    assert rows[3]["psnr"] == report.psnr
