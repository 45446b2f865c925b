import numpy as np
import pytest

from ambient.models import GaussianMixturePrior, gm_ambient_denoise
from ambient.operators import (
    Identity,
    Inpaint,
    MriAggregate,
    gaussian_cs_operator,
    identity_coils,
    kspace_mask_from_lines,
    make_coil_maps,
)
from ambient.oracles import (
    MAX_OPERATOR_DIM,
    MaskLaw,
    OracleReport,
    aggregate_matrix,
    bruteforce_posterior_mean,
    expected_mask_fullrank,
    expected_operator_fullrank,
    fourier_conjugate,
    law_for,
    theorem1_check,
    theorem1_grid,
    theorem2_reports,
)


def line_law(n, R, acs=0):
    return MaskLaw("kspace_line", (n,), R=R, target_R=R + 1, acs_lines=acs)


@pytest.mark.parametrize("n,R,acs,expected", [(8, 2, 0, 1 / 5), (16, 2, 2, 3 / 11), (16, 4, 2, 1 / 13)])
def test_exact_conditional_values(n, R, acs, expected):
    law = line_law(n, R, acs)
    _, tilde = law.sample_pair(0, 1)
    cond = law.exact_conditional(tilde[0])
    assert cond.min() == pytest.approx(expected)
    assert np.all(cond[tilde[0]] == 1.0)
    if acs:
        assert np.all(cond[law._acs()] == 1.0)


def test_sample_pair_structure():
    law = line_law(16, 2, 2)
    p, t = law.sample_pair(1, 500)
    assert np.all(p.sum(1) == 8) and np.all(t.sum(1) == 5)
    assert np.all(p[t])
    assert np.all(t[:, law._acs()])


def test_mask_conditional_monte_carlo_matches_exact():
    law = line_law(16, 2, 2)
    _, tilde = law.sample_pair(2, 1)
    rep = expected_mask_fullrank(law, tilde[0], trials=50_000, seed=3)
    assert abs(rep.estimate - 3 / 11) < 3 * rep.extra["std_error"]
    assert rep.extra["exact"] == pytest.approx(3 / 11)
    assert rep.passed


def test_delta_half_full_observation_gives_one():
    # if P~ observed everything, P must have too
    law = MaskLaw("pixel", (4,), p=0.2, delta=0.5)
    assert np.all(law.exact_conditional(np.ones(4, bool)) == 1.0)
    rep = expected_mask_fullrank(law, np.ones(4, bool), trials=2000, seed=0)
    assert rep.estimate == 1.0


def test_pixel_rejection_sampler_matches_exact():
    law = MaskLaw("pixel", (4,), p=0.3, delta=0.2)
    tilde = np.array([True, False, True, False])
    samples, proposals = law.sample_conditional(tilde, 5, 20_000)
    assert proposals >= len(samples) == 20_000
    exact = law.exact_conditional(tilde)
    se = np.sqrt(exact * (1 - exact) / len(samples)) + 1e-12
    assert np.all(np.abs(samples.mean(0) - exact) <= 4 * se)


def test_operator_fullrank_single_coil_exact():
    law = line_law(16, 2, 2)
    _, tilde = law.sample_pair(4, 1)
    rep = expected_operator_fullrank(identity_coils((16,)), law, tilde[0], trials=40_000, seed=5)
    assert rep.extra["exact"] == pytest.approx(3 / 11)
    assert abs(rep.estimate - 3 / 11) < 3 * rep.extra["std_error"]


def test_operator_fullrank_image_domain_agrees():
    law = line_law(8, 2)
    _, tilde = law.sample_pair(6, 1)
    coils = make_coil_maps((8,), 2, seed=1)
    a = expected_operator_fullrank(coils, law, tilde[0], trials=4000, seed=7, domain="kspace")
    b = expected_operator_fullrank(coils, law, tilde[0], trials=4000, seed=7, domain="image")
    assert a.estimate == pytest.approx(b.estimate, rel=1e-9)


def test_standard_error_scales_with_trials():
    law = line_law(16, 2, 2)
    _, tilde = law.sample_pair(8, 1)
    coils = make_coil_maps((16,), 2, seed=2)
    se = [expected_operator_fullrank(coils, law, tilde[0], trials=t, seed=9).extra["std_error"]
          for t in (10_000, 20_000)]
    assert se[1] / se[0] == pytest.approx(1 / np.sqrt(2), rel=0.2)


def test_degenerate_case_fails():
    # n=8, R=4 -> 5: both keep 2 lines, so nothing can be re-added
    law = line_law(8, 4)
    _, tilde = law.sample_pair(0, 1)
    rep = expected_operator_fullrank(identity_coils((8,)), law, tilde[0], trials=2000, seed=0)
    assert rep.extra["exact"] == pytest.approx(0.0, abs=1e-12)
    assert not rep.passed


def test_fourier_conjugate_preserves_singular_values():
    d = np.random.default_rng(0).random(16)
    sv = np.linalg.svd(fourier_conjugate(d, (16,)), compute_uv=False)
    np.testing.assert_allclose(np.sort(sv), np.sort(d), atol=1e-12)


def test_aggregate_matrix_matches_operator():
    mask = kspace_mask_from_lines((8,), [1, 0, 1, 1, 0, 0, 1, 0])
    coils = make_coil_maps((8,), 2, seed=3)
    dense = MriAggregate(mask, coils).as_matrix(complex_input=True)
    np.testing.assert_allclose(aggregate_matrix(mask.mask, coils), dense, atol=1e-12)


def test_max_operator_dim():
    law = MaskLaw("kspace_line", (MAX_OPERATOR_DIM + 8,), R=2, target_R=3)
    _, tilde = law.sample_pair(0, 1)
    with pytest.raises(ValueError):
        expected_operator_fullrank(identity_coils((MAX_OPERATOR_DIM + 8,)), law, tilde[0], trials=10)


def test_reports_reproducible():
    a = theorem2_reports(8, (1, 2), 2, trials=2000, seed=3)
    b = theorem2_reports(8, (1, 2), 2, trials=2000, seed=3)
    assert [r.to_text() for r in a] == [r.to_text() for r in b]
    text = a[0].to_text()
    assert "claim = expected_operator_fullrank" in text and "pass = true" in text


def test_law_for_masks():
    mask = kspace_mask_from_lines((8,), [1, 1, 0, 0, 1, 1, 0, 0], R=2, acs_lines=2)
    law = law_for(mask)
    assert (law.R, law.target_R, law.acs_lines) == (2, 3, 2)


# -- brute-force posterior mean -------------------------------------------------------

def test_bruteforce_matches_gm_ambient_in_point_mass_limit():
    rng = np.random.default_rng(1)
    atoms = rng.choice([-1.0, 1.0], size=(4, 6))
    w = np.array([0.1, 0.2, 0.3, 0.4])
    prior = GaussianMixturePrior(w, atoms, np.zeros(4))
    mask = np.array([1.0, 0, 1, 1, 0, 1])
    y = mask * (atoms[2] + 0.5 * rng.standard_normal(6))
    for op in (Inpaint(mask), gaussian_cs_operator(6, 3, 2)):
        yy = op.apply(atoms[2] + 0.5 * rng.standard_normal(6)) if not isinstance(op, Inpaint) else y
        a = bruteforce_posterior_mean(atoms, w, yy, op, 0.5)
        b = gm_ambient_denoise(prior, yy, op, 0.5)
        np.testing.assert_allclose(a, b, atol=1e-6)


def test_bruteforce_complex_mri_matches_gm_ambient():
    rng = np.random.default_rng(2)
    atoms = (rng.standard_normal((3, 8)) + 1j * rng.standard_normal((3, 8))) / np.sqrt(2)
    w = np.full(3, 1 / 3)
    op = MriAggregate(kspace_mask_from_lines((8,), [1, 0, 1, 1, 0, 0, 1, 0]), make_coil_maps((8,), 2, seed=0))
    y = op.apply(atoms[1] + 0.3 * (rng.standard_normal(8) + 1j * rng.standard_normal(8)) / np.sqrt(2))
    a = bruteforce_posterior_mean(atoms, w, y, op, 0.3)
    b = gm_ambient_denoise(GaussianMixturePrior(w, atoms, np.zeros(3)), y, op, 0.3)
    np.testing.assert_allclose(a, b, atol=1e-6)


def test_bruteforce_limits():
    atoms = np.array([[1.0, -1.0], [-1.0, 1.0]])
    w = np.array([0.25, 0.75])
    out = bruteforce_posterior_mean(atoms[:1], np.ones(1), np.zeros(2), Identity(2), 1.0)
    np.testing.assert_allclose(out, atoms[0])
    far = bruteforce_posterior_mean(atoms, w, np.zeros(2), np.ones(2), 1e4)
    np.testing.assert_allclose(far, w @ atoms, atol=1e-6)
    with pytest.raises(ValueError):
        bruteforce_posterior_mean(atoms, w, np.zeros(2), np.ones(2), 0.0)


def test_theorem1_check_oracle_against_itself():
    atoms = np.random.default_rng(0).choice([-1.0, 1.0], size=(4, 8))
    w = np.full(4, 0.25)
    grid = theorem1_grid(atoms, w, 0.2, 0.1, (0.2, 1.0), 50, seed=1)
    oracle = lambda y, m, s: bruteforce_posterior_mean(atoms, w, y, m, s)  # noqa: E731
    rep = theorem1_check(oracle, oracle, grid, seed=0)
    assert rep.estimate == 0.0 and rep.passed and rep.trials == 100
    bad = theorem1_check(lambda y, m, s: np.zeros_like(y), oracle, grid)
    assert bad.estimate == pytest.approx(1.0) and not bad.passed


def test_report_text_format():
    rep = OracleReport("x", 0.5, 0.1, 10, True, None, {"std_error": 0.25, "coils": 2})
    assert rep.to_text() == ("claim = x\nestimate = 0.5\ntolerance = 0.1\ntrials = 10\npass = true\n"
                             "seed = none\nstd_error = 0.25\ncoils = 2\n")
