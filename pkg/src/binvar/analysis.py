"""Post-fit analysis and reporting.

Turns raw sampler output into the quantities a study reports: which lag
coefficients and covariate effects are credibly nonzero (equal-tailed
interval excluding zero), whether the fitted dynamics are stationary
(spectral radius audit), how strongly errors correlate across the seasonal
circle (lag correlations of the circulant precision), how much of the
coefficient matrix the shrinkage prior left alive (effective nonzero
count), and which unused covariates correlate with residuals (screening).

Everything here is read-only over the draws; reports carry their own
consistency invariant so a selection list can never drift from the
summaries it sits next to.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .circulant_linalg import CirculantPrecision, lag_correlations, natural_coords
from .data_io import SeriesTable
from .hmc_sampler import PosteriorDraws, SamplerConfig, rank_ess, run_chains, split_rhat
from .model_posterior import ModelConfig, Posterior
from .shrinkage import m_eff, regularised_local_scale, shrinkage_factor_matrix

DEFAULT_SCREEN_THRESHOLD = 0.1
DEFAULT_LEVEL = 0.95


def equal_tailed_interval(samples: np.ndarray, level: float = DEFAULT_LEVEL):
    """Central interval with (1 - level)/2 mass in each tail."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    tail = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(np.asarray(samples, dtype=float), [tail, 100.0 - tail])
    return float(lo), float(hi)


def _summary(samples: np.ndarray) -> dict:
    flat = np.asarray(samples, dtype=float).ravel()
    return {
        "mean": float(flat.mean()),
        "sd": float(flat.std(ddof=1)) if flat.size > 1 else 0.0,
        "q2.5": float(np.percentile(flat, 2.5)),
        "q50": float(np.percentile(flat, 50.0)),
        "q97.5": float(np.percentile(flat, 97.5)),
    }


# --- selection and audits -------------------------------------------------------


def select_nonzero(ar_draws: np.ndarray, mean_coef_draws: np.ndarray | None = None,
                   level: float = DEFAULT_LEVEL) -> list:
    """Entries whose equal-tailed interval excludes zero.

    ``ar_draws`` has shape (draws, K, K); ``mean_coef_draws``, when given,
    has shape (draws, L + 1, K) with the intercept in row 0.  Intercepts
    are not selection targets.  Returns (name, posterior mean) pairs with
    1-based labels ``a[i,j]`` and ``b[l,k]``.
    """
    ar = np.asarray(ar_draws, dtype=float)
    if ar.ndim != 3 or ar.shape[1] != ar.shape[2]:
        raise ValueError("ar_draws must be (draws, k, k)")
    selected = []
    k = ar.shape[1]
    for i in range(k):
        for j in range(k):
            lo, hi = equal_tailed_interval(ar[:, i, j], level)
            if lo > 0.0 or hi < 0.0:
                selected.append((f"a[{i + 1},{j + 1}]", float(ar[:, i, j].mean())))
    if mean_coef_draws is not None:
        mc = np.asarray(mean_coef_draws, dtype=float)
        if mc.ndim != 3 or mc.shape[2] != k:
            raise ValueError("mean_coef_draws must be (draws, rows, k)")
        for l in range(1, mc.shape[1]):
            for col in range(k):
                lo, hi = equal_tailed_interval(mc[:, l, col], level)
                if lo > 0.0 or hi < 0.0:
                    selected.append((f"b[{l},{col + 1}]", float(mc[:, l, col].mean())))
    return selected


def sign_probabilities(ar_draws: np.ndarray,
                       mean_coef_draws: np.ndarray | None = None) -> dict:
    """Posterior probability of a positive sign per selectable entry.

    Supplementary evidence for entries whose interval straddles zero but
    whose mass leans one way.
    """
    ar = np.asarray(ar_draws, dtype=float)
    out = {}
    k = ar.shape[1]
    for i in range(k):
        for j in range(k):
            out[f"a[{i + 1},{j + 1}]"] = float((ar[:, i, j] > 0.0).mean())
    if mean_coef_draws is not None:
        mc = np.asarray(mean_coef_draws, dtype=float)
        for l in range(1, mc.shape[1]):
            for col in range(k):
                out[f"b[{l},{col + 1}]"] = float((mc[:, l, col] > 0.0).mean())
    return out


def spectral_radius_audit(ar_draws: np.ndarray) -> dict:
    """Fraction of draws with spectral radius below one, plus quantiles."""
    ar = np.asarray(ar_draws, dtype=float)
    if ar.ndim != 3 or ar.shape[1] != ar.shape[2]:
        raise ValueError("ar_draws must be (draws, k, k)")
    radii = np.abs(np.linalg.eigvals(ar)).max(axis=1)
    return {
        "fraction_stationary": float((radii < 1.0).mean()),
        "radii": radii,
        "summary": _summary(radii),
    }


def error_correlation_report(prec_pairs: np.ndarray, n_series: int) -> dict:
    """Summaries of the lag-k error correlations, k = 1..floor(K/2).

    ``prec_pairs`` holds per-draw positive precision coordinates
    (draws, 2).  Each draw maps through the circulant inverse to its
    correlation sequence before summarising.
    """
    pairs = np.asarray(prec_pairs, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ValueError("prec_pairs must be (draws, 2)")
    rows = []
    for lo, hi in pairs:
        diag, off = natural_coords(lo, hi)
        rows.append(lag_correlations(diag, off, n_series))
    rho = np.asarray(rows)
    return {f"rho[{k + 1}]": _summary(rho[:, k]) for k in range(rho.shape[1])}


def effective_nonzero_draws(states: list, n_times: int) -> np.ndarray:
    """Per-draw effective nonzero count of the lag coefficient matrix.

    Uses the slab-regularised local scales, the draw's own error
    precision, and unit predictor scale (series are standardised).
    """
    values = np.empty(len(states))
    for s, state in enumerate(states):
        k = state.n_series
        lam = np.sqrt(
            regularised_local_scale(
                state.local_scales, state.global_scale, state.slab_var
            )
        )
        prec = CirculantPrecision.from_positive(state.prec_lo, state.prec_hi, k)
        factors = [
            shrinkage_factor_matrix(prec, lam[:, j], state.global_scale, n_times)
            for j in range(k)
        ]
        values[s] = m_eff(factors, k)
    return values


# --- residual screening ---------------------------------------------------------


def residual_means(posterior: Posterior, draws: PosteriorDraws) -> np.ndarray:
    """Posterior mean one-step-ahead residuals, one row per time 2..N.

    Rows touching a masked series cell (at the residual's time or the one
    before) are excluded as NaN: their value would reflect imputations,
    not data.
    """
    total = None
    count = 0
    for chain in range(draws.n_chains):
        for r in range(draws.n_retained):
            state = posterior.packer.unpack(draws.draws[chain, r])
            resid = posterior.residual_matrix(state)
            total = resid if total is None else total + resid
            count += 1
    mean = total / count
    row_has_mask = np.zeros(posterior.n_times, dtype=bool)
    for row, _ in posterior.missing_cells()["y"]:
        row_has_mask[row] = True
    excluded = row_has_mask[1:] | row_has_mask[:-1]
    mean[excluded] = np.nan
    return mean


def screen_covariates(residuals: np.ndarray, covariates: SeriesTable,
                      threshold: float = DEFAULT_SCREEN_THRESHOLD) -> list:
    """Rank candidate covariates by lag-one correlation with residuals.

    ``residuals`` has one row per time 2..N (as from ``residual_means``);
    row t pairs with the covariate at time t - 1.  A covariate is flagged
    when its largest absolute per-series correlation clears ``threshold``.
    Returns one record per covariate, strongest first.
    """
    resid = np.asarray(residuals, dtype=float)
    n_resid = resid.shape[0]
    if covariates.n_rows not in (n_resid, n_resid + 1):
        raise ValueError(
            f"covariate rows {covariates.n_rows} do not align with "
            f"{n_resid} residual rows"
        )
    x = covariates.values[:n_resid]
    x_mask = covariates.missing_mask[:n_resid]

    records = []
    for col, name in enumerate(covariates.columns):
        corrs = []
        for series in range(resid.shape[1]):
            keep = ~(np.isnan(resid[:, series]) | x_mask[:, col])
            if keep.sum() < 3:
                corrs.append(0.0)
                continue
            xv = x[keep, col]
            rv = resid[keep, series]
            if xv.std() == 0.0 or rv.std() == 0.0:
                corrs.append(0.0)
                continue
            corrs.append(float(np.corrcoef(xv, rv)[0, 1]))
        max_abs = float(np.max(np.abs(corrs))) if corrs else 0.0
        records.append(
            {
                "name": name,
                "max_abs_correlation": max_abs,
                "correlations": corrs,
                "flagged": max_abs > threshold,
            }
        )
    records.sort(key=lambda rec: rec["max_abs_correlation"], reverse=True)
    return records


# --- fitting front door ---------------------------------------------------------


@dataclass
class FitResult:
    """A posterior plus its draws, with cached constrained-scale views."""

    posterior: Posterior
    draws: PosteriorDraws
    _states: list = field(default=None, repr=False)
    _report_matrix: np.ndarray = field(default=None, repr=False)

    @property
    def states(self) -> list:
        if self._states is None:
            unpack = self.posterior.packer.unpack
            self._states = [
                unpack(self.draws.draws[c, r])
                for c in range(self.draws.n_chains)
                for r in range(self.draws.n_retained)
            ]
        return self._states

    @property
    def config(self) -> ModelConfig:
        return self.posterior.config

    def ar_draws(self) -> np.ndarray:
        return np.asarray([s.ar_coef for s in self.states])

    def mean_coef_draws(self) -> np.ndarray:
        return np.asarray([s.mean_coef for s in self.states])

    def precision_pairs(self) -> np.ndarray:
        return np.asarray([(s.prec_lo, s.prec_hi) for s in self.states])

    def effective_nonzero(self) -> np.ndarray:
        return effective_nonzero_draws(self.states, self.posterior.n_times)

    def report_names(self) -> list:
        """Constrained-scale column labels, in report order.

        Latent imputations are deliberately absent: they are draws of
        missing data, not parameters anyone reports.
        """
        cfg = self.config
        k, l, j = cfg.n_series, cfg.n_covariates, cfg.n_harmonics
        names = [f"a[{i + 1},{jj + 1}]" for i in range(k) for jj in range(k)]
        names += [
            f"reg_local_scale[{i + 1},{jj + 1}]" for i in range(k) for jj in range(k)
        ]
        names += ["global_scale", "slab_var", "prec_lo", "prec_hi",
                  "prec_diag", "prec_offdiag", "noise_scale"]
        names += [f"hsin[{h + 1},{col + 1}]" for h in range(j) for col in range(k)]
        names += [f"hcos[{h + 1},{col + 1}]" for h in range(j) for col in range(k)]
        names += [f"intercept[{col + 1}]" for col in range(k)]
        names += [f"b[{row},{col + 1}]" for row in range(1, l + 1) for col in range(k)]
        names += [f"mcoef_loc[{row + 1}]" for row in range(l + 1)]
        names += [f"mcoef_var[{row + 1}]" for row in range(l + 1)]
        names += [f"covar_ar[{row + 1}]" for row in range(l)]
        names += [
            f"covar_cov[{i + 1},{jj + 1}]" for i in range(l) for jj in range(i + 1)
        ]
        names += [f"rho[{h + 1}]" for h in range(k // 2)]
        names += ["m_eff", "spec_radius", "lp"]
        return names

    def report_matrix(self) -> np.ndarray:
        """Rows of constrained-scale report values, one per retained draw."""
        if self._report_matrix is not None:
            return self._report_matrix
        states = self.states
        n_times = self.posterior.n_times
        meff = self.effective_nonzero()
        lp = self.draws.log_posteriors.ravel()
        rows = []
        for idx, state in enumerate(states):
            k, l = state.n_series, state.covar_ar.shape[0]
            diag, off = state.error_precision
            lam = np.sqrt(
                regularised_local_scale(
                    state.local_scales, state.global_scale, state.slab_var
                )
            )
            parts = [
                state.ar_coef.ravel(),
                lam.ravel(),
                [state.global_scale, state.slab_var, state.prec_lo, state.prec_hi,
                 diag, off, state.noise_scale],
                state.harmonic_sin.ravel(),
                state.harmonic_cos.ravel(),
                state.mean_coef[0],
                state.mean_coef[1:].ravel(),
                state.mean_coef_loc,
                state.mean_coef_var,
                state.covar_ar,
                state.covar_cov[np.tril_indices(l)] if l else np.zeros(0),
                lag_correlations(diag, off, k),
                [meff[idx], np.abs(np.linalg.eigvals(state.ar_coef)).max(), lp[idx]],
            ]
            rows.append(np.concatenate([np.atleast_1d(np.asarray(p, dtype=float)) for p in parts]))
        self._report_matrix = np.asarray(rows)
        return self._report_matrix

    def report_series(self) -> np.ndarray:
        """report_matrix reshaped to (chains, retained, columns)."""
        mat = self.report_matrix()
        c, r = self.draws.n_chains, self.draws.n_retained
        return mat.reshape(c, r, -1)

    def parameter_summaries(self) -> dict:
        names = self.report_names()
        series = self.report_series()
        table = {}
        for idx, name in enumerate(names):
            block = series[:, :, idx]
            entry = _summary(block)
            entry["rhat"] = split_rhat(block)
            entry["ess"] = rank_ess(block)
            table[name] = entry
        return table


def fit_model(config: ModelConfig, binned, covariates=None,
              sampler: SamplerConfig | None = None, *,
              covariate_mask=None, init_jitter: float = 0.1) -> FitResult:
    """Build the posterior for a binned dataset and sample it."""
    sampler = sampler or SamplerConfig()
    posterior = Posterior.from_binned(
        config, binned, covariates=covariates, covariate_mask=covariate_mask
    )

    def init(chain: int, rng) -> np.ndarray:
        return posterior.initial_vector(
            seed=int(rng.integers(2**31)), jitter=init_jitter
        )

    draws = run_chains(sampler, init, posterior.log_posterior_and_grad)
    return FitResult(posterior=posterior, draws=draws)


# --- report assembly ------------------------------------------------------------


@dataclass
class FitReport:
    """Human-facing summary of one fit.

    The constructor enforces the consistency invariant: every selected
    name must have a summary interval excluding zero, and every
    selectable summary excluding zero must be selected.
    """

    parameters: dict
    selected: list
    sign_probs: dict
    stationarity: dict
    error_correlations: dict
    effective_nonzero: dict
    covariate_effects: list
    level: float
    sampler_info: dict

    def __post_init__(self) -> None:
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        selected_names = {name for name, _ in self.selected}
        for name, entry in self.parameters.items():
            if not (name.startswith("a[") or name.startswith("b[")):
                continue
            excludes = entry["q2.5"] > 0.0 or entry["q97.5"] < 0.0
            if self.level == DEFAULT_LEVEL and excludes != (name in selected_names):
                raise ValueError(f"selection inconsistent with summaries at {name}")

    def to_json(self) -> str:
        def clean(obj):
            if isinstance(obj, dict):
                return {key: clean(value) for key, value in obj.items()}
            if isinstance(obj, (list, tuple)):
                return [clean(value) for value in obj]
            if isinstance(obj, np.ndarray):
                return clean(obj.tolist())
            if isinstance(obj, (np.floating, np.integer)):
                obj = obj.item()
            if isinstance(obj, float) and math.isnan(obj):
                return None
            return obj

        payload = {
            "level": self.level,
            "selected": [{"name": n, "mean": m} for n, m in self.selected],
            "parameters": self.parameters,
            "sign_probabilities": self.sign_probs,
            "stationarity": {
                "fraction_stationary": self.stationarity["fraction_stationary"],
                "summary": self.stationarity["summary"],
            },
            "error_correlations": self.error_correlations,
            "effective_nonzero": self.effective_nonzero,
            "covariate_effects": self.covariate_effects,
            "sampler": self.sampler_info,
        }
        return json.dumps(clean(payload), indent=2)

    def to_markdown(self) -> str:
        lines = ["# Fit report", ""]
        lines.append(f"Selection rule: {int(self.level * 100)}% equal-tailed "
                     "interval excludes zero.")
        lines.append("")
        lines.append("## Selected coefficients")
        lines.append("")
        if self.selected:
            lines.append("| coefficient | mean | 2.5% | 97.5% | P(>0) |")
            lines.append("|---|---|---|---|---|")
            for name, mean in self.selected:
                entry = self.parameters[name]
                lines.append(
                    f"| {name} | {mean:.4f} | {entry['q2.5']:.4f} | "
                    f"{entry['q97.5']:.4f} | {self.sign_probs[name]:.3f} |"
                )
        else:
            lines.append("Nothing selected at this level.")
        lines.append("")
        lines.append("## Stationarity")
        lines.append("")
        frac = self.stationarity["fraction_stationary"]
        summ = self.stationarity["summary"]
        lines.append(
            f"Fraction of draws with spectral radius < 1: {frac:.4f} "
            f"(median radius {summ['q50']:.3f}, "
            f"95% interval [{summ['q2.5']:.3f}, {summ['q97.5']:.3f}])."
        )
        lines.append("")
        lines.append("## Error correlations around the seasonal circle")
        lines.append("")
        lines.append("| lag | mean | 2.5% | 97.5% |")
        lines.append("|---|---|---|---|")
        for name, entry in self.error_correlations.items():
            lines.append(
                f"| {name} | {entry['mean']:.4f} | {entry['q2.5']:.4f} | "
                f"{entry['q97.5']:.4f} |"
            )
        lines.append("")
        lines.append("## Effective nonzero count")
        lines.append("")
        en = self.effective_nonzero
        lines.append(
            f"Posterior mean {en['mean']:.2f} "
            f"(95% interval [{en['q2.5']:.2f}, {en['q97.5']:.2f}])."
        )
        lines.append("")
        if self.covariate_effects:
            lines.append("## Covariate effects")
            lines.append("")
            lines.append("| coefficient | mean | 2.5% | 97.5% | P(>0) |")
            lines.append("|---|---|---|---|---|")
            for rec in self.covariate_effects:
                lines.append(
                    f"| {rec['name']} | {rec['mean']:.4f} | {rec['q2.5']:.4f} | "
                    f"{rec['q97.5']:.4f} | {rec['sign_prob']:.3f} |"
                )
            lines.append("")
        info = self.sampler_info
        lines.append("## Sampler")
        lines.append("")
        lines.append(
            f"{info['chains']} chains, {info['retained_per_chain']} retained "
            f"draws each; divergent transitions: {info['divergences']}; "
            f"mean acceptance {info['mean_accept']:.3f}."
        )
        lines.append("")
        return "\n".join(lines)


def build_report(result: FitResult, level: float = DEFAULT_LEVEL) -> FitReport:
    parameters = result.parameter_summaries()
    ar = result.ar_draws()
    mc = result.mean_coef_draws()
    has_covariates = result.config.n_covariates > 0
    selected = select_nonzero(ar, mc if has_covariates else None, level)
    signs = sign_probabilities(ar, mc if has_covariates else None)
    audit = spectral_radius_audit(ar)
    rho = error_correlation_report(result.precision_pairs(), result.config.n_series)
    meff = _summary(result.effective_nonzero())

    covariate_effects = []
    if has_covariates:
        k = result.config.n_series
        for row in range(1, result.config.n_covariates + 1):
            for col in range(k):
                name = f"b[{row},{col + 1}]"
                entry = parameters[name]
                covariate_effects.append(
                    {
                        "name": name,
                        "mean": entry["mean"],
                        "q2.5": entry["q2.5"],
                        "q97.5": entry["q97.5"],
                        "sign_prob": signs[name],
                    }
                )

    draws = result.draws
    sampler_info = {
        "chains": draws.n_chains,
        "retained_per_chain": draws.n_retained,
        "divergences": int(draws.divergences.sum()),
        "divergence_fraction": draws.divergence_fraction,
        "mean_accept": float(draws.accept_rates.mean()),
        "step_sizes": draws.step_sizes.tolist(),
        "seed": draws.config.seed,
    }
    return FitReport(
        parameters=parameters,
        selected=selected,
        sign_probs=signs,
        stationarity=audit,
        error_correlations=rho,
        effective_nonzero=meff,
        covariate_effects=covariate_effects,
        level=level,
        sampler_info=sampler_info,
    )
