import numpy as np
import pytest

from binvar import circulant_linalg as cl


def dense_oracle(prec_diag, prec_offdiag, k):
    out = np.zeros((k, k))
    for i in range(k):
        out[i, i] = prec_diag
        out[i, (i + 1) % k] = prec_offdiag
        out[i, (i - 1) % k] = prec_offdiag
    return out


def sample_pd_pair(rng, k):
    lo = rng.uniform(0.05, 20.0)
    hi = rng.uniform(0.05, 20.0)
    return cl.natural_coords(lo, hi)


def test_dense_matches_oracle():
    rng = np.random.default_rng(1)
    for k in (3, 4, 6, 12):
        d, o = sample_pd_pair(rng, k)
        np.testing.assert_allclose(cl.dense(d, o, k), dense_oracle(d, o, k))


def test_spectrum_matches_dense_eigenvalues():
    rng = np.random.default_rng(2)
    for k in (3, 4, 6, 12, 13):
        for _ in range(50):
            d, o = sample_pd_pair(rng, k)
            ours = np.sort(cl.spectrum(d, o, k))
            theirs = np.sort(np.linalg.eigvalsh(dense_oracle(d, o, k)))
            np.testing.assert_allclose(ours, theirs, atol=1e-10)


def test_log_det_and_quad_form_match_dense():
    rng = np.random.default_rng(3)
    for k in (4, 6, 12):
        for _ in range(50):
            d, o = sample_pd_pair(rng, k)
            mat = dense_oracle(d, o, k)
            assert cl.log_det(d, o, k) == pytest.approx(np.linalg.slogdet(mat)[1], abs=1e-9)
            v = rng.normal(size=k)
            assert cl.quad_form(d, o, v) == pytest.approx(v @ mat @ v, rel=1e-12)


def test_quad_form_batched_rows():
    rng = np.random.default_rng(4)
    d, o = sample_pd_pair(rng, 6)
    mat = dense_oracle(d, o, 6)
    vs = rng.normal(size=(7, 6))
    got = cl.quad_form(d, o, vs)
    want = np.array([v @ mat @ v for v in vs])
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_lag_correlations_match_dense_inverse():
    rng = np.random.default_rng(5)
    for k in (4, 6, 12, 13):
        for _ in range(30):
            d, o = sample_pd_pair(rng, k)
            cov = np.linalg.inv(dense_oracle(d, o, k))
            want = np.array([cov[0, lag] / cov[0, 0] for lag in range(1, k // 2 + 1)])
            np.testing.assert_allclose(cl.lag_correlations(d, o, k), want, atol=1e-10)


def test_small_negative_offdiag_gives_positive_lag_one_correlation():
    # Negative coupling in the precision induces positive correlation.
    rho = cl.lag_correlations(2.0, -0.1, 12)
    assert rho[0] > 0.0


def test_positive_coords_round_trip():
    rng = np.random.default_rng(6)
    for _ in range(200):
        lo, hi = rng.uniform(0.01, 50.0, size=2)
        d, o = cl.natural_coords(lo, hi)
        lo2, hi2 = cl.positive_coords(d, o)
        assert lo2 == pytest.approx(lo, rel=1e-14)
        assert hi2 == pytest.approx(hi, rel=1e-14)


def test_positive_box_is_exactly_pd_for_even_k():
    rng = np.random.default_rng(7)
    k = 6
    for _ in range(200):
        d = rng.uniform(0.05, 5.0)
        o = rng.uniform(-3.0, 3.0)
        lo, hi = cl.positive_coords(d, o)
        inside = lo > 0 and hi > 0
        pd = np.all(np.linalg.eigvalsh(dense_oracle(d, o, k)) > 0)
        assert inside == pd


def test_odd_k_outside_box_can_still_be_pd():
    # The alternating frequency is not on the cosine grid for odd K, so the
    # positive box is conservative there: this pair fails the box test yet
    # the dense matrix is positive definite.
    k = 5
    d, o = 1.0, 0.52
    lo, hi = cl.positive_coords(d, o)
    assert lo > 0 and hi < 0
    assert np.all(np.linalg.eigvalsh(dense_oracle(d, o, k)) > 0)


def test_constructor_rejects_non_pd_pairs():
    with pytest.raises(ValueError):
        cl.CirculantPrecision(1.0, 0.8, 4)
    with pytest.raises(ValueError):
        cl.CirculantPrecision.from_positive(-0.1, 1.0, 4)
    with pytest.raises(ValueError):
        cl.CirculantPrecision(1.0, 0.1, 2)


def test_value_type_methods_agree_with_kernels():
    prec = cl.CirculantPrecision.from_positive(2.0, 1.0, 12)
    lo, hi = prec.positive
    assert lo == pytest.approx(2.0)
    assert hi == pytest.approx(1.0)
    np.testing.assert_allclose(prec.spectrum(), cl.spectrum(prec.prec_diag, prec.prec_offdiag, 12))
    assert prec.log_det() == pytest.approx(np.linalg.slogdet(prec.dense())[1])
    v = np.arange(12.0)
    assert prec.quad_form(v) == pytest.approx(v @ prec.dense() @ v, rel=1e-12)


def test_spectrum_extremes_are_scaled_positive_coords():
    # sqrt(2)*prec_lo at frequency zero; sqrt(2)*prec_hi at the alternating
    # frequency, attained exactly when K is even.
    d, o = cl.natural_coords(3.0, 0.5)
    spec = cl.spectrum(d, o, 8)
    assert spec[0] == pytest.approx(np.sqrt(2.0) * 3.0)
    assert spec[4] == pytest.approx(np.sqrt(2.0) * 0.5)


def test_kernels_accept_jax_tracers():
    import jax

    jax.config.update("jax_enable_x64", True)
    import jax.numpy as jnp

    def f(lohi):
        d, o = cl.natural_coords(lohi[0], lohi[1])
        return cl.log_det(d, o, 6, xp=jnp) + cl.quad_form(d, o, jnp.arange(6.0), xp=jnp)

    val = jax.jit(f)(jnp.array([2.0, 1.0]))
    d, o = cl.natural_coords(2.0, 1.0)
    want = np.linalg.slogdet(dense_oracle(d, o, 6))[1] + np.arange(6.0) @ dense_oracle(d, o, 6) @ np.arange(6.0)
    assert float(val) == pytest.approx(want, rel=1e-12)
    grad = jax.grad(f)(jnp.array([2.0, 1.0]))
    assert np.all(np.isfinite(np.asarray(grad)))
