"""Hamiltonian Monte Carlo engine with adaptive warmup.

Plain HMC over a differentiable log density on R^d.  Each transition draws
a jittered leapfrog length uniformly from [1, max_leapfrog_steps], which
avoids resonant trajectories without a termination criterion.  Warmup
adapts the step size by dual averaging toward a target acceptance rate and
estimates a diagonal mass matrix in two stages: the second quarter of
warmup seeds a preliminary estimate (with the step-size adaptation restarted
under it), and the second half produces the final estimate, both shrunk
toward unity on short windows.  After warmup every tuning quantity is
frozen.

A transition whose trajectory gains more than 1000 units of energy, or
goes non-finite, counts as a divergence and is rejected outright.  Chains
use independent counter-based random streams spawned from the master seed,
so runs are reproducible and chain order is immaterial.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

DIVERGENCE_ENERGY = 1000.0


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    iterations: int = 10000
    warmup: int = 3000
    thin: int | None = None
    target_accept: float = 0.8
    max_leapfrog_steps: int = 32
    step_size: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.chains < 1:
            raise ValueError("need at least one chain")
        if not 0 <= self.warmup < self.iterations:
            raise ValueError("warmup must satisfy 0 <= warmup < iterations")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.max_leapfrog_steps < 1:
            raise ValueError("max_leapfrog_steps must be positive")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be positive")
        post = self.iterations - self.warmup
        if self.thin is None:
            thin = post // 1000 if post >= 1000 else 1
            if thin < 1 or post % thin:
                thin = 1
            object.__setattr__(self, "thin", thin)
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if post % self.thin:
            raise ValueError(
                f"thin {self.thin} must divide post-warmup count {post}"
            )

    @property
    def retained(self) -> int:
        return (self.iterations - self.warmup) // self.thin


@dataclass
class PosteriorDraws:
    """Retained draws with per-chain tuning and divergence bookkeeping."""

    draws: np.ndarray = field(repr=False)          # (chains, retained, dim)
    log_posteriors: np.ndarray = field(repr=False)  # (chains, retained)
    accept_rates: np.ndarray                        # post-warmup mean alpha
    warmup_accept_rates: np.ndarray                 # late-warmup mean alpha
    divergences: np.ndarray                         # post-warmup counts
    warmup_divergences: np.ndarray
    step_sizes: np.ndarray
    mass_diag: np.ndarray = field(repr=False)       # (chains, dim)
    config: SamplerConfig

    def __post_init__(self) -> None:
        c, r, d = self.draws.shape
        if self.log_posteriors.shape != (c, r):
            raise ValueError("log_posteriors shape mismatch")
        if not np.all(np.isfinite(self.log_posteriors)):
            raise ValueError("every retained state must have finite density")
        if self.mass_diag.shape != (c, d):
            raise ValueError("mass_diag shape mismatch")

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_retained(self) -> int:
        return self.draws.shape[1]

    @property
    def dim(self) -> int:
        return self.draws.shape[2]

    @property
    def divergence_fraction(self) -> float:
        post = self.config.iterations - self.config.warmup
        return float(self.divergences.sum()) / (post * self.n_chains)

    def flat(self) -> np.ndarray:
        return self.draws.reshape(-1, self.dim)


def leapfrog(position, momentum, step, n_steps, grad_fn, inv_mass=None):
    """Standard leapfrog integration of Hamilton's equations.

    ``grad_fn`` returns the gradient of the log density; ``inv_mass`` is the
    diagonal of the inverse mass matrix (identity when omitted).  Zero steps
    returns the inputs unchanged.
    """
    q = np.asarray(position, dtype=float).copy()
    p = np.asarray(momentum, dtype=float).copy()
    if inv_mass is None:
        inv_mass = np.ones_like(q)
    if n_steps == 0:
        return q, p
    grad = grad_fn(q)
    p = p + 0.5 * step * grad
    for i in range(n_steps):
        q = q + step * inv_mass * p
        grad = grad_fn(q)
        if i + 1 < n_steps:
            p = p + step * grad
    p = p + 0.5 * step * grad
    return q, p


class _DualAveraging:
    """Step-size adaptation toward a target acceptance statistic."""

    GAMMA = 0.05
    T0 = 10.0
    KAPPA = 0.75

    def __init__(self, initial_step: float, target_accept: float,
                 anchor_factor: float = 10.0):
        # The anchor pulls early iterates toward anchor_factor times the
        # initial step; 10 suits a cold start from a rough guess, 1 suits
        # re-tuning an already-adapted step after a mass update.
        self.mu = math.log(anchor_factor * initial_step)
        self.target = target_accept
        self.log_step = math.log(initial_step)
        self.log_step_bar = 0.0
        self.h_bar = 0.0
        self.m = 0

    def update(self, accept_prob: float) -> float:
        self.m += 1
        frac = 1.0 / (self.m + self.T0)
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (
            self.target - accept_prob
        )
        self.log_step = self.mu - math.sqrt(self.m) / self.GAMMA * self.h_bar
        eta = self.m ** (-self.KAPPA)
        self.log_step_bar = eta * self.log_step + (1.0 - eta) * self.log_step_bar
        return math.exp(self.log_step)

    @property
    def step(self) -> float:
        return math.exp(self.log_step)

    @property
    def averaged_step(self) -> float:
        return math.exp(self.log_step_bar)


def _hamiltonian(neg_log_post, momentum, inv_mass):
    return neg_log_post + 0.5 * float(np.sum(momentum**2 * inv_mass))


def find_reasonable_step_size(target, position, rng, inv_mass) -> float:
    """Double or halve an initial step until one leapfrog step crosses 1/2
    acceptance, starting from step 1."""
    step = 1.0
    val0, grad0 = target(position)

    def accept_prob(eps):
        p0 = rng.standard_normal(position.size) / np.sqrt(inv_mass)
        h0 = _hamiltonian(-val0, p0, inv_mass)
        q, p = leapfrog(position, p0, eps, 1, lambda u: target(u)[1], inv_mass)
        val1, _ = target(q)
        if not np.isfinite(val1):
            return 0.0
        h1 = _hamiltonian(-val1, p, inv_mass)
        return min(1.0, math.exp(min(h0 - h1, 0.0)))

    a0 = accept_prob(step)
    direction = 1.0 if a0 > 0.5 else -1.0
    for _ in range(100):
        step *= 2.0**direction
        a = accept_prob(step)
        if (direction > 0 and a <= 0.5) or (direction < 0 and a >= 0.5):
            break
    return step


def _regularised_variance(samples: np.ndarray) -> np.ndarray:
    """Diagonal mass estimate shrunk toward unity on short windows."""
    n = samples.shape[0]
    var = samples.var(axis=0, ddof=1) if n > 1 else np.ones(samples.shape[1])
    return (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))


def run_chain(config: SamplerConfig, init: np.ndarray, target, rng,
              chain_index: int = 0):
    """One chain; ``target`` maps a vector to (log density, gradient)."""
    u = np.asarray(init, dtype=float).copy()
    d = u.size
    val, grad = target(u)
    if not np.isfinite(val):
        raise ValueError(f"chain {chain_index}: target not finite at init")

    inv_mass = np.ones(d)
    adapt_step = config.step_size is None
    step = config.step_size or find_reasonable_step_size(target, u, rng, inv_mass)
    dual = _DualAveraging(step, config.target_accept) if adapt_step else None

    w = config.warmup
    stage1_end = w // 2
    prelim_lo = w // 4
    stage2_end = (9 * w) // 10
    post = config.iterations - config.warmup
    retained = config.retained
    draws = np.empty((retained, d))
    log_posts = np.empty(retained)
    stage_samples: list[np.ndarray] = []
    kept = 0
    post_div = 0
    warm_div = 0
    alpha_sum = 0.0
    late_warm_alpha = 0.0

    def refresh_mass_and_reset(window, anchor_factor):
        nonlocal inv_mass, dual
        if window.shape[0] >= 10:
            inv_mass = _regularised_variance(window)
            if adapt_step:
                dual = _DualAveraging(
                    max(dual.averaged_step, 1e-10), config.target_accept,
                    anchor_factor=anchor_factor,
                )

    for i in range(config.iterations):
        if w and i == stage1_end and stage1_end > prelim_lo:
            refresh_mass_and_reset(np.asarray(stage_samples), 10.0)
            stage_samples = []
        if w and i == stage2_end and stage2_end > stage1_end:
            # Final mass estimate; the warmup tail re-adapts the step
            # under it so the frozen step matches the frozen metric.
            refresh_mass_and_reset(np.asarray(stage_samples), 1.0)
            stage_samples = []
        if w and i == w and adapt_step:
            step = dual.averaged_step

        n_steps = int(rng.integers(1, config.max_leapfrog_steps + 1))
        p0 = rng.standard_normal(d) / np.sqrt(inv_mass)
        h0 = _hamiltonian(-val, p0, inv_mass)

        q, p = leapfrog(u, p0, step, n_steps, lambda v: target(v)[1], inv_mass)
        new_val, new_grad = target(q)
        h1 = (_hamiltonian(-new_val, p, inv_mass)
              if np.isfinite(new_val) else np.inf)
        energy_error = h1 - h0

        divergent = not np.isfinite(energy_error) or energy_error > DIVERGENCE_ENERGY
        if divergent:
            alpha = 0.0
            if i >= w:
                post_div += 1
            else:
                warm_div += 1
        else:
            alpha = min(1.0, math.exp(min(-energy_error, 0.0)))
            if rng.random() < alpha:
                u, val, grad = q, new_val, new_grad

        if i < w:
            if adapt_step:
                step = dual.update(alpha)
            if prelim_lo <= i < stage2_end:
                stage_samples.append(u.copy())
            if i >= stage1_end:
                late_warm_alpha += alpha
        else:
            alpha_sum += alpha
            j = i - w
            if (j + 1) % config.thin == 0:
                draws[kept] = u
                log_posts[kept] = val
                kept += 1

    if post_div == post:
        raise RuntimeError(f"chain {chain_index}: every transition diverged")
    late_count = w - stage1_end
    return {
        "draws": draws,
        "log_posteriors": log_posts,
        "accept_rate": alpha_sum / post,
        "warmup_accept_rate": late_warm_alpha / late_count if late_count else float("nan"),
        "divergences": post_div,
        "warmup_divergences": warm_div,
        "step_size": step,
        "mass_diag": inv_mass.copy(),
    }


def run_chains(config: SamplerConfig, init_strategy, target) -> PosteriorDraws:
    """Run all chains from independently seeded streams and merge.

    ``init_strategy`` maps (chain_index, rng) to an initial vector, so
    initialisations are overdispersed but reproducible.
    """
    master = np.random.SeedSequence(config.seed)
    children = master.spawn(config.chains)
    results = []
    for c, child in enumerate(children):
        rng = np.random.Generator(np.random.Philox(child))
        init = np.asarray(init_strategy(c, rng), dtype=float)
        try:
            results.append(run_chain(config, init, target, rng, chain_index=c))
        except (RuntimeError, ValueError) as exc:
            raise RuntimeError(f"chain {c} failed: {exc}") from exc

    draws = PosteriorDraws(
        draws=np.stack([r["draws"] for r in results]),
        log_posteriors=np.stack([r["log_posteriors"] for r in results]),
        accept_rates=np.array([r["accept_rate"] for r in results]),
        warmup_accept_rates=np.array([r["warmup_accept_rate"] for r in results]),
        divergences=np.array([r["divergences"] for r in results]),
        warmup_divergences=np.array([r["warmup_divergences"] for r in results]),
        step_sizes=np.array([r["step_size"] for r in results]),
        mass_diag=np.stack([r["mass_diag"] for r in results]),
        config=config,
    )
    if draws.divergence_fraction > 0.10:
        warnings.warn(
            f"{draws.divergence_fraction:.1%} of post-warmup transitions "
            "diverged; treat results with suspicion",
            RuntimeWarning,
            stacklevel=2,
        )
    return draws


# --- convergence diagnostics --------------------------------------------------


def split_rhat(chains: np.ndarray) -> float:
    """Potential scale reduction over split half-chains.

    Defined as sqrt((W + B_over_n) / W) with W the mean within-half
    variance and B_over_n the variance of half means, so chains whose two
    halves agree exactly give 1 exactly.
    """
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2:
        raise ValueError("expected (chains, draws)")
    half = chains.shape[1] // 2
    if half < 2:
        return float("nan")
    halves = np.vstack([chains[:, :half], chains[:, -half:]])
    within = halves.var(axis=1, ddof=1).mean()
    between = halves.mean(axis=1).var(ddof=1)
    if within == 0.0:
        return 1.0 if between == 0.0 else float("inf")
    return float(math.sqrt((within + between) / within))


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.size
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    return np.fft.irfft(f * np.conj(f), size)[:n].real / n


def rank_ess(chains: np.ndarray) -> float:
    """Bulk effective sample size on rank-normalised draws.

    Ranks are pooled across chains, mapped through the normal quantile
    function, then run through the standard initial-positive-sequence
    autocorrelation truncation with monotone pair sums.
    """
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2:
        raise ValueError("expected (chains, draws)")
    m, n = chains.shape
    if n < 4:
        return float("nan")
    ranks = stats.rankdata(chains.ravel(), method="average").reshape(m, n)
    z = stats.norm.ppf((ranks - 0.5) / (m * n))

    acov = np.vstack([_autocov(z[c]) for c in range(m)])
    within = acov[:, 0].mean() * n / (n - 1)
    var_plus = within * (n - 1) / n
    if m > 1:
        var_plus += z.mean(axis=1).var(ddof=1)
    if var_plus == 0.0:
        return float("nan")

    # Geyer pair sums: keep while positive, then force non-increasing.
    rho = 1.0 - (within - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    max_pairs = (n - 1) // 2
    pair_sums = []
    for k in range(max_pairs):
        s = rho[2 * k] + rho[2 * k + 1]
        if s <= 0.0:
            break
        pair_sums.append(s)
    if not pair_sums:
        return float(m)
    for k in range(1, len(pair_sums)):
        pair_sums[k] = min(pair_sums[k], pair_sums[k - 1])
    tau = -1.0 + 2.0 * float(np.sum(pair_sums))
    tau = max(tau, 1.0 / math.log10(m * n + 10.0))
    return float(m * n / tau)


def diagnostics(draws: PosteriorDraws, transform=None, names=None) -> dict:
    """Per-parameter summary table on the reported (constrained) scale.

    ``transform`` maps an unconstrained draw vector to the vector of
    reported scalars (identity when omitted); ``names`` labels them.
    """
    if transform is None:
        mapped = draws.draws
    else:
        c, r, _ = draws.draws.shape
        rows = [
            np.asarray(transform(draws.draws[i, j]), dtype=float)
            for i in range(c) for j in range(r)
        ]
        mapped = np.asarray(rows).reshape(c, r, -1)
    n_par = mapped.shape[2]
    if names is None:
        names = [f"x[{i}]" for i in range(n_par)]
    if len(names) != n_par:
        raise ValueError("names must match the transformed dimension")

    table = {}
    for i, name in enumerate(names):
        series = mapped[:, :, i]
        flat = series.ravel()
        table[name] = {
            "mean": float(flat.mean()),
            "sd": float(flat.std(ddof=1)) if flat.size > 1 else 0.0,
            "rhat": split_rhat(series),
            "ess": rank_ess(series),
            "q2.5": float(np.percentile(flat, 2.5)),
            "q50": float(np.percentile(flat, 50.0)),
            "q97.5": float(np.percentile(flat, 97.5)),
        }
    return summary_envelope(table, draws.divergence_fraction)


def summary_envelope(table: dict, divergence_fraction: float) -> dict:
    """Wrap a per-parameter summary table with run-level health fields.

    Accepts any table whose entries carry ``rhat`` and ``ess`` keys, so
    summaries computed on derived quantities get the same warning rules as
    ``diagnostics``.
    """
    rhats = [v["rhat"] for v in table.values() if np.isfinite(v["rhat"])]
    esses = [v["ess"] for v in table.values() if np.isfinite(v["ess"])]
    warnings_list = []
    frac = float(divergence_fraction)
    if frac > 0.10:
        warnings_list.append(
            f"divergence fraction {frac:.3f} exceeds 0.10"
        )
    if rhats and max(rhats) > 1.05:
        warnings_list.append(f"max split rhat {max(rhats):.3f} exceeds 1.05")
    return {
        "parameters": table,
        "divergence_fraction": frac,
        "max_rhat": max(rhats) if rhats else float("nan"),
        "min_ess": min(esses) if esses else float("nan"),
        "warnings": warnings_list,
    }
