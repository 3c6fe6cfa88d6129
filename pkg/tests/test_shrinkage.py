import numpy as np
import pytest

from binvar import shrinkage as sh
from binvar.circulant_linalg import CirculantPrecision


def test_tau0_frozen_value():
    # Oracle: direct arithmetic (12/132)/sqrt(257) computed independently.
    want = 12.0 / 132.0 / np.sqrt(257.0)
    got = sh.tau0_from_sparsity(12.0, 12, 12, 257, 1.0)
    assert got == pytest.approx(0.005670753286834594, abs=1e-15)
    assert got == pytest.approx(want, abs=1e-15)


def test_tau0_scales_linearly_in_noise_scale():
    base = sh.tau0_from_sparsity(4.0, 4, 4, 100, 1.0)
    assert sh.tau0_from_sparsity(4.0, 4, 4, 100, 2.5) == pytest.approx(2.5 * base)


def test_tau0_rejects_out_of_range_sparsity():
    with pytest.raises(ValueError):
        sh.tau0_from_sparsity(0.0, 3, 3, 50, 1.0)
    with pytest.raises(ValueError):
        sh.tau0_from_sparsity(9.0, 3, 3, 50, 1.0)
    with pytest.raises(ValueError):
        sh.tau0_from_sparsity(1.0, 3, 3, 0, 1.0)


def test_regularised_local_scale_limits():
    # Small local scales are nearly untouched; huge ones cap at slab/global^2.
    assert sh.regularised_local_scale(1e-6, 0.1, 4.0) == pytest.approx(1e-12, rel=1e-6)
    assert sh.regularised_local_scale(1e9, 0.1, 4.0) == pytest.approx(4.0 / 0.01, rel=1e-6)
    lam, tau, c2 = 1.3, 0.7, 2.0
    want = c2 * lam**2 / (c2 + tau**2 * lam**2)
    assert sh.regularised_local_scale(lam, tau, c2) == pytest.approx(want, rel=1e-14)


def test_shrinkage_factor_matrix_worked_example():
    # Unit local scales with n*s2*tau^2 = 1/3 against the cyclic precision
    # with diagonal 3 and coupling 0.5: the factor is the dense inverse of
    # I + (1/3) P and its eigenvalues are {3/7, 1/2, 1/2, 3/5}.
    prec = CirculantPrecision(3.0, 0.5, 4)
    factor = sh.shrinkage_factor_matrix(prec, np.ones(4), 1.0, 1, s2=1.0 / 3.0)
    want = np.linalg.inv(np.eye(4) + (1.0 / 3.0) * prec.dense())
    np.testing.assert_allclose(factor, want, atol=1e-12)
    eigs = np.sort(np.linalg.eigvalsh(factor))
    np.testing.assert_allclose(eigs, sorted([3.0 / 7.0, 0.5, 0.5, 0.6]), atol=1e-12)


def test_shrinkage_factor_diagonal_closed_form():
    rng = np.random.default_rng(10)
    for _ in range(50):
        lam = np.tan(0.5 * np.pi * rng.uniform(0.05, 0.95, size=5))
        tau = rng.uniform(0.01, 2.0)
        prec_scalar = rng.uniform(0.1, 10.0)
        n = rng.integers(10, 500)
        got = sh.shrinkage_factor_matrix(prec_scalar, lam, tau, n)
        want = np.diag(1.0 / (1.0 + n * tau**2 * lam**2 * prec_scalar))
        np.testing.assert_allclose(got, want, rtol=1e-12)


def test_factor_eigenvalues_strictly_inside_unit_interval():
    rng = np.random.default_rng(11)
    for _ in range(300):
        k = int(rng.choice([4, 6, 12]))
        prec = CirculantPrecision.from_positive(
            rng.uniform(0.1, 10.0), rng.uniform(0.1, 10.0), k
        )
        lam = np.tan(0.5 * np.pi * rng.uniform(0.05, 0.95, size=k))
        tau = rng.uniform(0.05, 5.0)
        factor = sh.shrinkage_factor_matrix(prec, lam, tau, 257)
        eigs = np.linalg.eigvals(factor)
        assert np.max(np.abs(eigs.imag)) < 1e-10
        assert np.all(eigs.real > 1e-12)
        assert np.all(eigs.real < 1.0 - 1e-12)


def test_m_eff_bounds():
    eye = np.eye(3)
    assert sh.m_eff([eye, eye], 2) == pytest.approx(0.0)
    assert sh.m_eff([np.zeros((3, 3))] * 4, 4) == pytest.approx(12.0)
    with pytest.raises(ValueError):
        sh.m_eff([eye], 2)


def _orthogonal_design(rng, n, p, scales):
    raw = rng.normal(size=(n, p))
    q, _ = np.linalg.qr(raw)
    return q * (np.sqrt(n) * np.asarray(scales))


def test_conditional_posterior_mean_routes_agree_on_orthogonal_designs():
    rng = np.random.default_rng(12)
    for _ in range(20):
        n, p, q = 50, 2, 2
        x = _orthogonal_design(rng, n, p, rng.uniform(0.5, 2.0, size=p))
        y = rng.normal(size=(n, q))
        state = sh.ShrinkageState(
            local_scales=np.tan(0.5 * np.pi * rng.uniform(0.05, 0.95, size=(p, q))),
            global_scale=rng.uniform(0.05, 1.0),
            slab_var=4.0,
        )
        cov = np.linalg.inv(CirculantPrecision(2.0, 0.5, 3).dense())[:2, :2]
        cov = 0.5 * (cov + cov.T) + 0.5 * np.eye(2)
        a = sh.conditional_posterior_mean(x, y, state, cov, method="kronecker")
        b = sh.conditional_posterior_mean(x, y, state, cov, method="blockwise")
        np.testing.assert_allclose(a, b, atol=1e-10)
        auto = sh.conditional_posterior_mean(x, y, state, cov)
        np.testing.assert_allclose(auto, b, atol=1e-12)


def test_conditional_posterior_mean_limits():
    rng = np.random.default_rng(13)
    n, p, q = 40, 3, 2
    x = rng.normal(size=(n, p))
    y = rng.normal(size=(n, q))
    cov = np.eye(q)
    ls = np.linalg.solve(x.T @ x, x.T @ y)
    tiny = sh.ShrinkageState(np.ones((p, q)), 1e-8, 4.0)
    np.testing.assert_allclose(
        sh.conditional_posterior_mean(x, y, tiny, cov, method="kronecker"),
        np.zeros((p, q)),
        atol=1e-10,
    )
    huge = sh.ShrinkageState(np.full((p, q), 1e6), 1e3, 4.0)
    np.testing.assert_allclose(
        sh.conditional_posterior_mean(x, y, huge, cov, method="kronecker"), ls, rtol=1e-6
    )


def test_prior_simulation_diagonal_u_shape():
    # At sqrt(n)*tau/sigma = 1 the diagonal factor entries pile up near both
    # 0 and 1, with little mass in the middle.
    summary = sh.simulate_shrinkage_prior(
        1.0, 1.0 / np.sqrt(400.0), 400, 20000, seed=21, n_responses=1
    )
    assert summary["diag_mass_low"] > summary["diag_mass_mid"]
    assert summary["diag_mass_high"] > summary["diag_mass_mid"]
    assert summary["diag_mass_low"] > 0.15
    assert summary["diag_mass_high"] > 0.15


def test_prior_simulation_meff_matches_closed_form_small():
    n, tau, sigma = 257, 0.01, 1.0
    summary = sh.simulate_shrinkage_prior(
        1.0 / sigma**2, tau, n, 40000, seed=22, n_responses=12, n_predictors=12
    )
    a = np.sqrt(n) * tau / sigma
    want = a / (1.0 + a) * 144.0
    assert abs(summary["m_eff_mean"] - want) <= 3.0 * summary["m_eff_se"]


def test_prior_simulation_circulant_path_runs_and_is_deterministic():
    prec = CirculantPrecision.from_positive(2.0, 1.0, 6)
    s1 = sh.simulate_shrinkage_prior(prec, 0.05, 257, 500, seed=5)
    s2 = sh.simulate_shrinkage_prior(prec, 0.05, 257, 500, seed=5)
    assert s1 == s2
    assert 0.0 < s1["m_eff_mean"] < 36.0
    assert s1["diag_quantiles"]["0.5"] > 0.0


def test_horseshoe_config_validation():
    cfg = sh.HorseshoeConfig(12, 12, 257, 12.0)
    assert cfg.tau0(1.0) == pytest.approx(0.005670753286834594, abs=1e-15)
    with pytest.raises(ValueError):
        sh.HorseshoeConfig(3, 3, 50, 9.0)
    with pytest.raises(ValueError):
        sh.HorseshoeConfig(3, 3, 50, 2.0, slab_scale=-1.0)


def test_shrinkage_state_validation():
    with pytest.raises(ValueError):
        sh.ShrinkageState(np.ones(3), 1.0, 1.0)
    with pytest.raises(ValueError):
        sh.ShrinkageState(np.ones((2, 2)), -1.0, 1.0)
    with pytest.raises(ValueError):
        sh.ShrinkageState(np.zeros((2, 2)), 1.0, 1.0)
