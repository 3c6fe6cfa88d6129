"""Joint log-posterior of the seasonal sparse VAR(1) with exact gradients.

The observation model conditions on the first row: for t = 2..N,

    y_t = mu_t + ar_coef (y_{t-1} - mu_{t-1}) + noise,

with circulant-precision Gaussian noise and a time-varying mean mu_t built
from an intercept, lag-one covariate effects, and seasonal harmonics on a
52-week clock (the covariate row feeding t = 1 is all zeros by convention).
Covariates themselves follow a diagonal AR(1) with free Gaussian noise, so
masked cells of both tables become latent coordinates of the posterior.

The VAR coefficients are sampled non-centred: the stored coordinate is a
standard-normal z whose product with the global scale and the slab-capped
local scale gives the coefficient.  All positive parameters are sampled on
the log scale, AR diagonals of the covariate model through a sigmoid, and
the covariate noise covariance through its Cholesky factor with logged
diagonal; the prior includes every change-of-variables term.

This is the only module that imports jax.  Densities are evaluated in
float64; the jitted entry points treat the configuration and the array
shapes as static, so repeated fits of same-shaped problems share one
compilation.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from functools import partial

import jax
import jax.numpy as jnp
import numpy as np
from jax.scipy.linalg import solve_triangular
from jax.scipy.special import gammaln, multigammaln

from .circulant_linalg import log_det as circulant_log_det
from .circulant_linalg import natural_coords
from .circulant_linalg import quad_form as circulant_quad_form
from .shrinkage import regularised_local_scale, tau0_from_sparsity

jax.config.update("jax_enable_x64", True)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ModelConfig:
    """Dimensions and prior hyperparameters; every field JSON-overridable."""

    n_series: int
    n_covariates: int
    n_harmonics: int = 2
    period: float = 52.0
    expected_nonzero: float = 12.0
    slab_shape: float = 2.0
    slab_scale: float = 8.0
    prec_prior_spread: float = 1.0
    noise_log_sd: float = math.sqrt(10.0)
    harmonic_var: float = 100.0
    mean_loc_var: float = 95.0
    mean_var_shape: float = 2.25
    mean_var_scale: float = 6.25
    covar_ar_alpha: float = 2.0
    covar_ar_beta: float = 2.0
    covar_cov_dof: float | None = None

    def __post_init__(self) -> None:
        if self.n_series < 3:
            raise ValueError("need at least 3 series for the circulant noise")
        if self.n_covariates < 0:
            raise ValueError("n_covariates must be non-negative")
        if self.n_harmonics < 1:
            raise ValueError("need at least one harmonic")
        if self.period <= 0:
            raise ValueError("period must be positive")
        total = self.n_series * self.n_series
        if not 0.0 < self.expected_nonzero < total:
            raise ValueError("expected_nonzero must lie in (0, n_series**2)")
        for name in (
            "slab_shape", "slab_scale", "prec_prior_spread", "noise_log_sd",
            "harmonic_var", "mean_loc_var", "mean_var_shape", "mean_var_scale",
            "covar_ar_alpha", "covar_ar_beta",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.covar_cov_dof is not None and not (
            self.covar_cov_dof > self.n_covariates + 1
        ):
            raise ValueError("covar_cov_dof must exceed n_covariates + 1")

    @property
    def covar_dof(self) -> float:
        if self.covar_cov_dof is not None:
            return float(self.covar_cov_dof)
        return float(self.n_covariates + 4)

    def tau0(self, noise_scale: float, n_times: int) -> float:
        return tau0_from_sparsity(
            self.expected_nonzero, self.n_series, self.n_series, n_times,
            noise_scale,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        raw = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValueError(f"unknown config fields: {unknown}")
        return cls(**raw)


@dataclass
class ParamState:
    """Constrained model parameters, one point of the posterior."""

    ar_z: np.ndarray
    local_scales: np.ndarray
    global_scale: float
    slab_var: float
    prec_lo: float
    prec_hi: float
    noise_scale: float
    harmonic_sin: np.ndarray
    harmonic_cos: np.ndarray
    mean_coef: np.ndarray
    mean_coef_loc: np.ndarray
    mean_coef_var: np.ndarray
    covar_ar: np.ndarray
    covar_chol: np.ndarray
    y_missing: np.ndarray
    x_missing: np.ndarray

    def __post_init__(self) -> None:
        for name in (
            "ar_z", "local_scales", "harmonic_sin", "harmonic_cos",
            "mean_coef", "mean_coef_loc", "mean_coef_var", "covar_ar",
            "covar_chol", "y_missing", "x_missing",
        ):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        k = self.ar_z.shape[0]
        if self.ar_z.shape != (k, k) or self.local_scales.shape != (k, k):
            raise ValueError("ar_z and local_scales must be square and matching")
        if self.harmonic_sin.shape != self.harmonic_cos.shape:
            raise ValueError("harmonic blocks must match")
        if self.mean_coef.shape[0] != self.mean_coef_loc.shape[0]:
            raise ValueError("mean_coef rows must match mean_coef_loc")
        if self.mean_coef_loc.shape != self.mean_coef_var.shape:
            raise ValueError("mean hierarchy vectors must match")
        n_cov = self.covar_ar.shape[0]
        if self.covar_chol.shape != (n_cov, n_cov):
            raise ValueError("covar_chol must be square with covar_ar's length")
        if np.any(self.local_scales <= 0):
            raise ValueError("local scales must be positive")
        for name in ("global_scale", "slab_var", "prec_lo", "prec_hi",
                     "noise_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if np.any(self.mean_coef_var <= 0):
            raise ValueError("mean_coef_var must be positive")
        if np.any((self.covar_ar <= 0) | (self.covar_ar >= 1)):
            raise ValueError("covar_ar entries must lie in (0, 1)")
        if n_cov and (np.any(np.diag(self.covar_chol) <= 0)
                      or np.any(np.triu(self.covar_chol, 1) != 0)):
            raise ValueError("covar_chol must be lower-triangular, positive diag")

    @property
    def n_series(self) -> int:
        return self.ar_z.shape[0]

    @property
    def ar_coef(self) -> np.ndarray:
        """Coefficient matrix: row k holds series k's loadings on the lag."""
        lam2 = regularised_local_scale(
            self.local_scales, self.global_scale, self.slab_var
        )
        return self.ar_z * self.global_scale * np.sqrt(lam2)

    @property
    def error_precision(self) -> tuple[float, float]:
        """(diagonal, off-diagonal) entries of the circulant noise precision."""
        d, o = natural_coords(self.prec_lo, self.prec_hi)
        return float(d), float(o)

    @property
    def covar_cov(self) -> np.ndarray:
        return self.covar_chol @ self.covar_chol.T


def _layout(k: int, l: int, j: int, n_my: int, n_mx: int):
    """Block order of the unconstrained vector; shared by both packers."""
    return [
        ("ar_z", (k, k)),
        ("log_local", (k, k)),
        ("log_global", ()),
        ("log_slab", ()),
        ("log_prec_lo", ()),
        ("log_prec_hi", ()),
        ("log_noise", ()),
        ("harmonic_sin", (j, k)),
        ("harmonic_cos", (j, k)),
        ("mean_coef", (l + 1, k)),
        ("mean_coef_loc", (l + 1,)),
        ("log_mean_coef_var", (l + 1,)),
        ("covar_ar_logit", (l,)),
        ("covar_chol_raw", (l * (l + 1) // 2,)),
        ("y_missing", (n_my,)),
        ("x_missing", (n_mx,)),
    ]


class ParamPacker:
    """Bijection between ParamState and the flat unconstrained vector.

    Positive scalars ride on the log scale, covariate AR diagonals through
    a sigmoid, and the covariate noise covariance as the row-major lower
    triangle of its Cholesky factor with logged diagonal.
    """

    def __init__(self, config: ModelConfig, n_missing_y: int, n_missing_x: int):
        self.config = config
        self.n_missing_y = int(n_missing_y)
        self.n_missing_x = int(n_missing_x)
        k, l, j = config.n_series, config.n_covariates, config.n_harmonics
        self._blocks = []
        offset = 0
        for name, shape in _layout(k, l, j, self.n_missing_y, self.n_missing_x):
            size = int(np.prod(shape, dtype=int)) if shape else 1
            self._blocks.append((name, shape, slice(offset, offset + size)))
            offset += size
        self.dim = offset
        self._tril = np.tril_indices(l)

    def block_slice(self, name: str) -> slice:
        for block, _, sl in self._blocks:
            if block == name:
                return sl
        raise KeyError(name)

    def pack(self, state: ParamState) -> np.ndarray:
        l = self.config.n_covariates
        chol = state.covar_chol.copy()
        if l:
            di = np.diag_indices(l)
            chol[di] = np.log(chol[di])
        parts = {
            "ar_z": state.ar_z,
            "log_local": np.log(state.local_scales),
            "log_global": np.log(state.global_scale),
            "log_slab": np.log(state.slab_var),
            "log_prec_lo": np.log(state.prec_lo),
            "log_prec_hi": np.log(state.prec_hi),
            "log_noise": np.log(state.noise_scale),
            "harmonic_sin": state.harmonic_sin,
            "harmonic_cos": state.harmonic_cos,
            "mean_coef": state.mean_coef,
            "mean_coef_loc": state.mean_coef_loc,
            "log_mean_coef_var": np.log(state.mean_coef_var),
            "covar_ar_logit": (
                np.log(state.covar_ar) - np.log1p(-state.covar_ar) if l
                else np.zeros(0)
            ),
            "covar_chol_raw": chol[self._tril] if l else np.zeros(0),
            "y_missing": state.y_missing,
            "x_missing": state.x_missing,
        }
        out = np.empty(self.dim)
        for name, shape, sl in self._blocks:
            out[sl] = np.reshape(np.asarray(parts[name], dtype=float), -1)
        return out

    def unpack(self, u: np.ndarray) -> ParamState:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dim,):
            raise ValueError(f"expected vector of length {self.dim}")
        raw = {}
        for name, shape, sl in self._blocks:
            raw[name] = u[sl].reshape(shape) if shape else float(u[sl][0])
        l = self.config.n_covariates
        chol = np.zeros((l, l))
        if l:
            chol[self._tril] = raw["covar_chol_raw"]
            di = np.diag_indices(l)
            chol[di] = np.exp(chol[di])
        return ParamState(
            ar_z=raw["ar_z"],
            local_scales=np.exp(raw["log_local"]),
            global_scale=math.exp(raw["log_global"]),
            slab_var=math.exp(raw["log_slab"]),
            prec_lo=math.exp(raw["log_prec_lo"]),
            prec_hi=math.exp(raw["log_prec_hi"]),
            noise_scale=math.exp(raw["log_noise"]),
            harmonic_sin=raw["harmonic_sin"],
            harmonic_cos=raw["harmonic_cos"],
            mean_coef=raw["mean_coef"],
            mean_coef_loc=raw["mean_coef_loc"],
            mean_coef_var=np.exp(raw["log_mean_coef_var"]),
            covar_ar=1.0 / (1.0 + np.exp(-raw["covar_ar_logit"])) if l
            else np.zeros(0),
            covar_chol=chol,
            y_missing=raw["y_missing"],
            x_missing=raw["x_missing"],
        )


def mean_at(
    t: int,
    harmonic_sin: np.ndarray,
    harmonic_cos: np.ndarray,
    mean_coef: np.ndarray,
    x_prev: np.ndarray,
    period: float = 52.0,
) -> np.ndarray:
    """Model mean at 1-based time t given the covariate row at t-1.

    At t = 1 the caller passes zeros for ``x_prev``.
    """
    harmonic_sin = np.atleast_2d(harmonic_sin)
    harmonic_cos = np.atleast_2d(harmonic_cos)
    n_harm = harmonic_sin.shape[0]
    angles = 2.0 * np.pi * t * np.arange(1, n_harm + 1) / period
    seasonal = np.sin(angles) @ harmonic_sin + np.cos(angles) @ harmonic_cos
    return mean_coef[0] + np.asarray(x_prev) @ mean_coef[1:] + seasonal


# --- jitted density internals ------------------------------------------------


def _norm_lpdf(x, mean, var):
    return -0.5 * (jnp.log(2.0 * jnp.pi * var) + (x - mean) ** 2 / var)


def _half_cauchy_lpdf(x, scale):
    return jnp.log(2.0 / jnp.pi) + jnp.log(scale) - jnp.log(scale**2 + x**2)


def _inv_gamma_lpdf(x, shape, scale):
    return (shape * jnp.log(scale) - gammaln(shape)
            - (shape + 1.0) * jnp.log(x) - scale / x)


def _gamma_lpdf(x, shape, rate):
    return (shape * jnp.log(rate) - gammaln(shape)
            + (shape - 1.0) * jnp.log(x) - rate * x)


def _beta_lpdf(x, a, b):
    norm = gammaln(a + b) - gammaln(a) - gammaln(b)
    return norm + (a - 1.0) * jnp.log(x) + (b - 1.0) * jnp.log1p(-x)


def _unravel(u, config: ModelConfig, n_my: int, n_mx: int):
    k, l, j = config.n_series, config.n_covariates, config.n_harmonics
    out = {}
    offset = 0
    for name, shape in _layout(k, l, j, n_my, n_mx):
        size = int(np.prod(shape, dtype=int)) if shape else 1
        block = u[offset:offset + size]
        out[name] = block.reshape(shape) if shape else block[0]
        offset += size
    return out


def _chol_from_raw(raw_vec, l: int):
    rows, cols = np.tril_indices(l)
    c = jnp.zeros((l, l)).at[rows, cols].set(raw_vec)
    log_diag = jnp.diag(c)
    c = c - jnp.diag(log_diag) + jnp.diag(jnp.exp(log_diag))
    return c, log_diag


def _terms(config: ModelConfig, n: int, n_my: int, n_mx: int,
           u, y_filled, x_filled, ym_rows, ym_cols, xm_rows, xm_cols):
    """Total log-posterior plus (likelihood, prior, covariate-model) parts."""
    k, l, j = config.n_series, config.n_covariates, config.n_harmonics
    p = _unravel(u, config, n_my, n_mx)

    local = jnp.exp(p["log_local"])
    tau = jnp.exp(p["log_global"])
    slab = jnp.exp(p["log_slab"])
    prec_lo = jnp.exp(p["log_prec_lo"])
    prec_hi = jnp.exp(p["log_prec_hi"])
    sigma = jnp.exp(p["log_noise"])
    mc_var = jnp.exp(p["log_mean_coef_var"])
    phi = jax.nn.sigmoid(p["covar_ar_logit"])

    lam2 = regularised_local_scale(local, tau, slab)
    ar = p["ar_z"] * tau * jnp.sqrt(lam2)

    y_full = y_filled
    if n_my:
        y_full = y_full.at[ym_rows, ym_cols].set(p["y_missing"])
    x_full = x_filled
    if n_mx:
        x_full = x_full.at[xm_rows, xm_cols].set(p["x_missing"])

    # Time-varying mean on the harmonic clock t = 1..n.
    t_grid = jnp.arange(1, n + 1, dtype=jnp.float64)
    harm_idx = jnp.arange(1, j + 1, dtype=jnp.float64)
    angles = 2.0 * jnp.pi * t_grid[:, None] * harm_idx[None, :] / config.period
    mu = jnp.sin(angles) @ p["harmonic_sin"] + jnp.cos(angles) @ p["harmonic_cos"]
    mu = mu + p["mean_coef"][0][None, :]
    if l:
        x_prev = jnp.vstack([jnp.zeros((1, l)), x_full[:-1]])
        mu = mu + x_prev @ p["mean_coef"][1:]

    # VAR(1) likelihood conditioned on the first row.
    prec_d, prec_o = natural_coords(prec_lo, prec_hi)
    centered = y_full - mu
    resid = centered[1:] - centered[:-1] @ ar.T
    quad = jnp.sum(circulant_quad_form(prec_d, prec_o, resid, xp=jnp))
    log_det = circulant_log_det(prec_d, prec_o, k, xp=jnp)
    ll = -0.5 * (n - 1) * k * LOG_2PI + 0.5 * (n - 1) * log_det - 0.5 * quad

    # Covariate AR(1) model, also conditioned on its first row.
    if l:
        chol, log_diag = _chol_from_raw(p["covar_chol_raw"], l)
        ex = x_full[1:] - x_full[:-1] * phi[None, :]
        white = solve_triangular(chol, ex.T, lower=True)
        log_det_x = 2.0 * jnp.sum(log_diag)
        lm = (-0.5 * (n - 1) * (l * LOG_2PI + log_det_x)
              - 0.5 * jnp.sum(white**2))
    else:
        lm = jnp.asarray(0.0)

    # Priors, with change-of-variables terms for every transformed block.
    tau0 = tau0_from_sparsity(
        config.expected_nonzero, k, k, n, sigma
    )
    lp = jnp.sum(_norm_lpdf(p["ar_z"], 0.0, 1.0))
    lp += jnp.sum(_half_cauchy_lpdf(local, 1.0)) + jnp.sum(p["log_local"])
    lp += _half_cauchy_lpdf(tau, tau0) + p["log_global"]
    lp += (_inv_gamma_lpdf(slab, config.slab_shape, config.slab_scale)
           + p["log_slab"])
    spread2 = config.prec_prior_spread**2
    prec_rate = math.sqrt(2.0) * sigma**2 / spread2
    lp += _gamma_lpdf(prec_lo, 1.0 / spread2, prec_rate) + p["log_prec_lo"]
    lp += _gamma_lpdf(prec_hi, 1.0 / spread2, prec_rate) + p["log_prec_hi"]
    lp += _norm_lpdf(p["log_noise"], 0.0, config.noise_log_sd**2)
    lp += jnp.sum(_norm_lpdf(p["harmonic_sin"], 0.0, config.harmonic_var))
    lp += jnp.sum(_norm_lpdf(p["harmonic_cos"], 0.0, config.harmonic_var))
    lp += jnp.sum(_norm_lpdf(
        p["mean_coef"], p["mean_coef_loc"][:, None], mc_var[:, None]
    ))
    lp += jnp.sum(_norm_lpdf(p["mean_coef_loc"], 0.0, config.mean_loc_var))
    lp += jnp.sum(_inv_gamma_lpdf(
        mc_var, config.mean_var_shape, config.mean_var_scale
    )) + jnp.sum(p["log_mean_coef_var"])
    if l:
        lp += jnp.sum(_beta_lpdf(phi, config.covar_ar_alpha,
                                 config.covar_ar_beta))
        lp += jnp.sum(jnp.log(phi) + jnp.log1p(-phi))
        dof = config.covar_dof
        log_det_x = 2.0 * jnp.sum(log_diag)
        inv_chol = solve_triangular(chol, jnp.eye(l), lower=True)
        trace_inv = jnp.sum(inv_chol**2)
        lp += (-0.5 * dof * l * math.log(2.0) - multigammaln(dof / 2.0, l)
               - 0.5 * (dof + l + 1.0) * log_det_x - 0.5 * trace_inv)
        lp += l * math.log(2.0) + jnp.sum(
            (l + 1.0 - jnp.arange(l)) * log_diag
        )

    total = ll + lp + lm
    return total, (ll, lp, lm)


_STATIC = (0, 1, 2, 3)
_terms_jit = jax.jit(_terms, static_argnums=_STATIC)
_value_and_grad_jit = jax.jit(
    jax.value_and_grad(_terms, argnums=4, has_aux=True), static_argnums=_STATIC
)


def _component_vector(*args):
    return jnp.stack(_terms(*args)[1])


_component_jac_jit = jax.jit(
    jax.jacrev(_component_vector, argnums=4), static_argnums=_STATIC
)


class Posterior:
    """Posterior of one model instance bound to one data set.

    Masked cells of the response and covariate tables are latent
    coordinates; their storage order is an internal detail that the density
    does not depend on.
    """

    def __init__(
        self,
        config: ModelConfig,
        y: np.ndarray,
        y_mask: np.ndarray | None = None,
        x: np.ndarray | None = None,
        x_mask: np.ndarray | None = None,
        *,
        latent_order_seed: int | None = None,
    ):
        y = np.asarray(y, dtype=float)
        if y.ndim != 2 or y.shape[1] != config.n_series:
            raise ValueError("y must be n_times x n_series")
        n = y.shape[0]
        if n < 3:
            raise ValueError("need at least 3 time points")
        l = config.n_covariates
        if x is None:
            if l:
                raise ValueError("config declares covariates but x is missing")
            x = np.zeros((n, 0))
        x = np.asarray(x, dtype=float)
        if x.shape != (n, l):
            raise ValueError("x must be n_times x n_covariates")
        y_mask = (np.zeros(y.shape, dtype=bool) if y_mask is None
                  else np.asarray(y_mask, dtype=bool))
        x_mask = (np.zeros(x.shape, dtype=bool) if x_mask is None
                  else np.asarray(x_mask, dtype=bool))
        if y_mask.shape != y.shape or x_mask.shape != x.shape:
            raise ValueError("masks must match their tables")

        self.config = config
        self.n_times = n
        self.y = y
        self.y_mask = y_mask
        self.x = x
        self.x_mask = x_mask

        def filled(values, mask):
            out = values.copy()
            for col in range(values.shape[1]):
                m = mask[:, col]
                out[m, col] = values[~m, col].mean() if (~m).any() else 0.0
            return out

        self._y_filled = filled(y, y_mask)
        self._x_filled = filled(x, x_mask)
        ym = np.nonzero(y_mask)
        xm = np.nonzero(x_mask)
        if latent_order_seed is not None:
            rng = np.random.default_rng(latent_order_seed)
            py = rng.permutation(ym[0].size)
            px = rng.permutation(xm[0].size)
            ym = (ym[0][py], ym[1][py])
            xm = (xm[0][px], xm[1][px])
        self._ym_rows, self._ym_cols = ym
        self._xm_rows, self._xm_cols = xm
        self.packer = ParamPacker(config, self._ym_rows.size, self._xm_rows.size)
        self._static = (config, n, self._ym_rows.size, self._xm_rows.size)

    @classmethod
    def from_binned(cls, config, binned, covariates=None, covariate_mask=None,
                    **kwargs):
        x = covariates
        x_mask = covariate_mask
        if hasattr(covariates, "values"):
            x_mask = covariates.missing_mask
            x = covariates.values
        return cls(config, binned.y, binned.missing_mask, x, x_mask, **kwargs)

    @property
    def dim(self) -> int:
        return self.packer.dim

    def missing_cells(self) -> dict:
        return {
            "y": list(zip(self._ym_rows.tolist(), self._ym_cols.tolist())),
            "x": list(zip(self._xm_rows.tolist(), self._xm_cols.tolist())),
        }

    def _args(self, u):
        return self._static + (
            jnp.asarray(u), jnp.asarray(self._y_filled),
            jnp.asarray(self._x_filled),
            jnp.asarray(self._ym_rows), jnp.asarray(self._ym_cols),
            jnp.asarray(self._xm_rows), jnp.asarray(self._xm_cols),
        )

    def _vector(self, u_or_state) -> np.ndarray:
        if isinstance(u_or_state, ParamState):
            return self.packer.pack(u_or_state)
        return np.asarray(u_or_state, dtype=float)

    def log_posterior_and_grad(self, u) -> tuple[float, np.ndarray]:
        (total, _), grad = _value_and_grad_jit(*self._args(self._vector(u)))
        return float(total), np.asarray(grad)

    def log_posterior(self, u_or_state) -> float:
        total, _ = _terms_jit(*self._args(self._vector(u_or_state)))
        return float(total)

    def components(self, u_or_state) -> dict:
        _, (ll, lp, lm) = _terms_jit(*self._args(self._vector(u_or_state)))
        return {
            "log_likelihood": float(ll),
            "log_prior": float(lp),
            "log_covariate_model": float(lm),
        }

    def log_likelihood(self, u_or_state) -> float:
        return self.components(u_or_state)["log_likelihood"]

    def log_prior(self, u_or_state) -> float:
        return self.components(u_or_state)["log_prior"]

    def log_missing_model(self, u_or_state) -> float:
        return self.components(u_or_state)["log_covariate_model"]

    def component_gradients(self, u) -> np.ndarray:
        """Rows: gradient of likelihood, prior, covariate model (test aid)."""
        return np.asarray(_component_jac_jit(*self._args(self._vector(u))))

    # --- numpy-side views used by analysis and the samplers ---------------

    def filled_series(self, state: ParamState) -> tuple[np.ndarray, np.ndarray]:
        y = self._y_filled.copy()
        if state.y_missing.size:
            y[self._ym_rows, self._ym_cols] = state.y_missing
        x = self._x_filled.copy()
        if state.x_missing.size:
            x[self._xm_rows, self._xm_cols] = state.x_missing
        return y, x

    def mean_matrix(self, state: ParamState) -> np.ndarray:
        _, x = self.filled_series(state)
        l = self.config.n_covariates
        rows = []
        for t in range(1, self.n_times + 1):
            x_prev = x[t - 2] if (t > 1 and l) else np.zeros(l)
            rows.append(mean_at(
                t, state.harmonic_sin, state.harmonic_cos, state.mean_coef,
                x_prev, period=self.config.period,
            ))
        return np.vstack(rows)

    def residual_matrix(self, state: ParamState) -> np.ndarray:
        """One-step residuals for t = 2..N at the given state."""
        y, _ = self.filled_series(state)
        centered = y - self.mean_matrix(state)
        return centered[1:] - centered[:-1] @ state.ar_coef.T

    def initial_state(self) -> ParamState:
        k, l, j = (self.config.n_series, self.config.n_covariates,
                   self.config.n_harmonics)
        col_means = self._y_filled.mean(axis=0)
        x_sd = (self._x_filled.std(axis=0) if l else np.zeros(0))
        x_sd = np.where(x_sd > 0, x_sd, 1.0) if l else x_sd
        mean_coef = np.zeros((l + 1, k))
        mean_coef[0] = col_means
        return ParamState(
            ar_z=np.zeros((k, k)),
            local_scales=np.ones((k, k)),
            global_scale=self.config.tau0(1.0, self.n_times),
            slab_var=self.config.slab_scale / max(self.config.slab_shape - 1.0,
                                                  0.5),
            prec_lo=math.sqrt(2.0) / 2.0,
            prec_hi=math.sqrt(2.0) / 2.0,
            noise_scale=1.0,
            harmonic_sin=np.zeros((j, k)),
            harmonic_cos=np.zeros((j, k)),
            mean_coef=mean_coef,
            mean_coef_loc=np.zeros(l + 1),
            mean_coef_var=np.full(
                l + 1,
                self.config.mean_var_scale / (self.config.mean_var_shape - 1.0)
                if self.config.mean_var_shape > 1 else 5.0,
            ),
            covar_ar=np.full(l, 0.5),
            covar_chol=np.diag(x_sd) if l else np.zeros((0, 0)),
            y_missing=self._y_filled[self._ym_rows, self._ym_cols],
            x_missing=self._x_filled[self._xm_rows, self._xm_cols],
        )

    def initial_vector(self, seed: int, jitter: float = 0.1) -> np.ndarray:
        """Prior-plausible start, jittered on the unconstrained scale."""
        u = self.packer.pack(self.initial_state())
        rng = np.random.default_rng(seed)
        return u + jitter * rng.standard_normal(u.size)
