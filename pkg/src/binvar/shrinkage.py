"""Regularised-horseshoe shrinkage machinery for the VAR coefficient block.

Conventions here follow the multivariate regression view of the lag
structure: X is n x P (lagged predictors), Y is n x Q (responses), and the
coefficient matrix is P x Q with entry (j, k) the effect of predictor j on
response k.  Each coefficient carries its own local scale, all share one
global scale, and a finite slab variance caps how far a large local scale
can escape the shrinkage.

The scalar kernels (`tau0_from_sparsity`, `regularised_local_scale`) are
written with plain arithmetic so the same code serves numpy callers and
traced autodiff callers; the posterior module imports them directly rather
than restating the formulas.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circulant_linalg import CirculantPrecision


def tau0_from_sparsity(expected_nonzero, n_predictors, n_responses, n_obs, noise_scale):
    """Global-scale base giving the target prior count of effective nonzeros.

    Derived from matching the prior expectation of the effective nonzero
    count to ``expected_nonzero`` under unit-variance standardised
    predictors.
    """
    total = n_predictors * n_responses
    if not 0.0 < expected_nonzero < total:
        raise ValueError("expected_nonzero must lie strictly between 0 and P*Q")
    if n_obs <= 0:
        raise ValueError("n_obs must be positive")
    return expected_nonzero / (total - expected_nonzero) * noise_scale / n_obs**0.5


def regularised_local_scale(local_scale, global_scale, slab_var):
    """Squared regularised local scale: slab-capped version of local_scale**2.

    Small local scales pass through nearly untouched; large ones saturate at
    slab_var / global_scale**2 so that unshrunk coefficients see a finite
    slab prior instead of the unbounded tail.
    """
    lam2 = local_scale**2
    return slab_var * lam2 / (slab_var + global_scale**2 * lam2)


def _precision_dense(error_precision, n_responses: int) -> np.ndarray:
    if isinstance(error_precision, CirculantPrecision):
        if error_precision.n_series != n_responses:
            raise ValueError("error precision dimension does not match local scales")
        return error_precision.dense()
    if np.ndim(error_precision) == 0:
        # scalar: isotropic diagonal precision
        return float(error_precision) * np.eye(n_responses)
    mat = np.asarray(error_precision, dtype=float)
    if mat.shape != (n_responses, n_responses):
        raise ValueError("dense error precision has wrong shape")
    return mat


def shrinkage_factor_matrix(error_precision, local_scales, global_scale, n_obs, s2=1.0):
    """Per-predictor shrinkage factor matrix for one predictor column.

    Returns the Q x Q matrix (I + n_obs * s2 * global_scale**2 * L * P)^-1
    where L is diag(local_scales**2) and P the error precision.  Its
    eigenvalues lie strictly inside (0, 1): the identity is the
    no-information limit, and the matrix measures how much of the
    least-squares estimate survives shrinkage.

    ``error_precision`` may be a CirculantPrecision, a scalar (isotropic
    diagonal precision, handled in closed form), or a dense Q x Q matrix.
    """
    lam = np.asarray(local_scales, dtype=float)
    if lam.ndim != 1:
        raise ValueError("local_scales must be 1D")
    q = lam.shape[0]
    scale = n_obs * s2 * global_scale**2
    if np.ndim(error_precision) == 0 and not isinstance(error_precision, CirculantPrecision):
        diag = 1.0 / (1.0 + scale * lam**2 * float(error_precision))
        return np.diag(diag)
    pmat = _precision_dense(error_precision, q)
    mat = np.eye(q) + scale * (lam**2)[:, None] * pmat
    return np.linalg.solve(mat, np.eye(q))


def m_eff(factors, n_predictors: int) -> float:
    """Effective nonzero count: sum over predictors of trace(I - factor)."""
    factors = list(factors)
    if len(factors) != n_predictors:
        raise ValueError("need one shrinkage factor matrix per predictor")
    total = 0.0
    for fac in factors:
        fac = np.asarray(fac, dtype=float)
        total += fac.shape[0] - np.trace(fac)
    return float(total)


@dataclass
class ShrinkageState:
    """Horseshoe block state in regression orientation (P x Q local scales)."""

    local_scales: np.ndarray
    global_scale: float
    slab_var: float

    def __post_init__(self) -> None:
        self.local_scales = np.asarray(self.local_scales, dtype=float)
        if self.local_scales.ndim != 2:
            raise ValueError("local_scales must be P x Q")
        if not (self.global_scale > 0 and self.slab_var > 0):
            raise ValueError("scales must be positive")
        if np.any(self.local_scales <= 0):
            raise ValueError("local scales must be positive")


@dataclass(frozen=True)
class HorseshoeConfig:
    """Dimensions and hyperparameters of the coefficient shrinkage block."""

    n_predictors: int
    n_responses: int
    n_obs: int
    expected_nonzero: float
    slab_shape: float = 2.0
    slab_scale: float = 8.0

    def __post_init__(self) -> None:
        total = self.n_predictors * self.n_responses
        if not 0.0 < self.expected_nonzero < total:
            raise ValueError("expected_nonzero must lie strictly between 0 and P*Q")
        if self.slab_shape <= 0 or self.slab_scale <= 0:
            raise ValueError("slab hyperparameters must be positive")

    def tau0(self, noise_scale: float) -> float:
        return tau0_from_sparsity(
            self.expected_nonzero,
            self.n_predictors,
            self.n_responses,
            self.n_obs,
            noise_scale,
        )


def _ls_estimate(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    xtx = x.T @ x
    return np.linalg.solve(xtx, x.T @ y)


def conditional_posterior_mean(x, y, state: ShrinkageState, error_cov, method: str = "auto"):
    """Posterior mean of the coefficient matrix given scales and error covariance.

    method="kronecker" evaluates the full PQ x PQ normal-form expression;
    method="blockwise" applies the per-predictor shrinkage factor matrices,
    which is exact when the predictors are orthogonal (X'X diagonal).
    method="auto" picks blockwise for numerically diagonal X'X.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    error_cov = np.asarray(error_cov, dtype=float)
    n, p = x.shape
    q = y.shape[1]
    if state.local_scales.shape != (p, q):
        raise ValueError("local scales must be P x Q")
    if error_cov.shape != (q, q):
        raise ValueError("error covariance must be Q x Q")
    xtx = x.T @ x
    ls = _ls_estimate(x, y)

    if method == "auto":
        off = xtx - np.diag(np.diag(xtx))
        diagonal = np.max(np.abs(off)) <= 1e-10 * max(1.0, np.max(np.abs(np.diag(xtx))))
        method = "blockwise" if diagonal else "kronecker"

    tau2 = state.global_scale**2
    if method == "kronecker":
        lam_star = tau2 * (state.local_scales**2).reshape(-1)
        gram = np.diag(lam_star) + np.kron(np.linalg.inv(xtx), error_cov)
        mean = lam_star * np.linalg.solve(gram, ls.reshape(-1))
        return mean.reshape(p, q)
    if method == "blockwise":
        prec = np.linalg.inv(error_cov)
        out = np.empty((p, q))
        for j in range(p):
            s2 = xtx[j, j] / n
            factor = shrinkage_factor_matrix(prec, state.local_scales[j], state.global_scale, n, s2=s2)
            out[j] = (np.eye(q) - factor) @ ls[j]
        return out
    raise ValueError(f"unknown method: {method}")


def simulate_shrinkage_prior(
    error_precision,
    global_scale: float,
    n_obs: int,
    n_draws: int,
    seed: int,
    *,
    s2: float = 1.0,
    n_responses: int | None = None,
    n_predictors: int | None = None,
):
    """Monte Carlo summary of the shrinkage factor matrix under the prior.

    Local scales are drawn as half-Cauchy via the tangent transform of
    uniforms.  Returns quantiles of the diagonal and off-diagonal entries of
    the factor matrix plus the implied effective-nonzero-count moments,
    scaled by ``n_predictors`` (default: the response count, the VAR case).
    ``n_responses`` is required when the precision is passed as a scalar.
    """
    rng = np.random.default_rng(seed)
    scalar_prec = np.ndim(error_precision) == 0 and not isinstance(
        error_precision, CirculantPrecision
    )
    if scalar_prec:
        if n_responses is None:
            raise ValueError("n_responses is required with a scalar precision")
        q = n_responses
    elif isinstance(error_precision, CirculantPrecision):
        q = error_precision.n_series
    else:
        q = np.asarray(error_precision).shape[0]
    n_pred = n_predictors if n_predictors is not None else q

    u = rng.uniform(0.0, 1.0, size=(n_draws, q))
    lam = np.tan(0.5 * np.pi * u)

    if scalar_prec:
        kappa = 1.0 / (1.0 + n_obs * s2 * global_scale**2 * lam**2 * float(error_precision))
        diag_entries = kappa.reshape(-1)
        offdiag_entries = np.zeros(1)
        per_pred_trace = np.sum(1.0 - kappa, axis=1)
    else:
        pmat = _precision_dense(error_precision, q)
        diag_list = np.empty((n_draws, q))
        off_list = []
        per_pred_trace = np.empty(n_draws)
        eye = np.eye(q)
        off_mask = ~np.eye(q, dtype=bool)
        for i in range(n_draws):
            fac = np.linalg.solve(
                eye + n_obs * s2 * global_scale**2 * (lam[i] ** 2)[:, None] * pmat, eye
            )
            diag_list[i] = np.diag(fac)
            off_list.append(fac[off_mask])
            per_pred_trace[i] = q - np.trace(fac)
        diag_entries = diag_list.reshape(-1)
        offdiag_entries = np.concatenate(off_list)

    qs = (0.05, 0.25, 0.5, 0.75, 0.95)
    mean_trace = float(np.mean(per_pred_trace))
    se_trace = float(np.std(per_pred_trace, ddof=1) / np.sqrt(n_draws))
    return {
        "n_draws": int(n_draws),
        "n_responses": int(q),
        "n_predictors": int(n_pred),
        "diag_quantiles": {str(p): float(np.quantile(diag_entries, p)) for p in qs},
        "offdiag_quantiles": {str(p): float(np.quantile(offdiag_entries, p)) for p in qs},
        "diag_mass_low": float(np.mean(diag_entries < 0.1)),
        "diag_mass_mid": float(np.mean((diag_entries > 0.45) & (diag_entries < 0.55))),
        "diag_mass_high": float(np.mean(diag_entries > 0.9)),
        "m_eff_per_predictor_mean": mean_trace,
        "m_eff_per_predictor_se": se_trace,
        "m_eff_mean": n_pred * mean_trace,
        "m_eff_se": n_pred * se_trace,
    }
