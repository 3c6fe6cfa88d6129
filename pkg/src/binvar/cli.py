"""Command line front door for the seasonal sparse VAR pipeline.

Subcommands mirror the stages of an end-to-end study:

    cluster        group count series into phase bins and emit the scaled table
    shrinkage-sim  Monte Carlo summary of the shrinkage prior's factor matrix
    simulate       draw a synthetic dataset from a ground-truth description
    fit            sample the posterior on a binned table, archive the draws
    summarize      build the selection/stationarity/correlation report
    screen         rank unused covariates by residual correlation
    diagnose       re-emit the convergence table of an archived fit

``fit`` writes three human-facing files (draws.csv, summary.json,
sampler.json) plus ``fit.npz``, a self-contained archive of the raw draw
vectors and the data they were fitted to; the downstream subcommands
rebuild the posterior from that archive alone.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .analysis import (
    FitResult,
    build_report,
    fit_model,
    residual_means,
    screen_covariates,
)
from .circulant_linalg import CirculantPrecision
from .data_io import SeriesTable, load_counts, load_covariates, write_table
from .hmc_sampler import PosteriorDraws, SamplerConfig, summary_envelope
from .model_posterior import ModelConfig, Posterior
from .phase_binning import BinnedSeries, cluster
from .shrinkage import simulate_shrinkage_prior
from .synthgen import TruthSpec, simulate_var


def _json_ready(obj):
    if isinstance(obj, dict):
        return {key: _json_ready(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(value) for value in obj]
    if isinstance(obj, np.ndarray):
        return _json_ready(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return obj


def _write_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(_json_ready(payload), indent=2) + "\n")


def _bins_to_table(binned: BinnedSeries) -> SeriesTable:
    return SeriesTable(
        timestamps=list(binned.timestamps),
        columns=[f"bin_{j + 1}" for j in range(binned.n_bins)],
        values=binned.y,
        missing_mask=binned.missing_mask,
    )


def _table_to_binned(table: SeriesTable) -> BinnedSeries:
    # A loaded table carries no aggregation history; neutral bookkeeping
    # values keep the container valid without implying any rescaling.
    return BinnedSeries(
        y=table.values,
        missing_mask=table.missing_mask,
        bin_of={},
        s_bar=1.0,
        bin_totals=np.where(table.missing_mask, np.nan, np.exp(table.values)),
        n_bins=table.n_cols,
        timestamps=list(table.timestamps),
        bin_sds=np.ones(table.n_cols),
        pseudocount=False,
    )


# --- fit archive ----------------------------------------------------------------


def _save_fit_archive(path: Path, result: FitResult) -> None:
    posterior = result.posterior
    draws = result.draws
    np.savez_compressed(
        path,
        draws=draws.draws,
        log_posteriors=draws.log_posteriors,
        accept_rates=draws.accept_rates,
        warmup_accept_rates=draws.warmup_accept_rates,
        divergences=draws.divergences,
        warmup_divergences=draws.warmup_divergences,
        step_sizes=draws.step_sizes,
        mass_diag=draws.mass_diag,
        y=posterior.y,
        y_mask=posterior.y_mask,
        x=posterior.x,
        x_mask=posterior.x_mask,
        model_config=np.array(result.config.to_json()),
        sampler_config=np.array(json.dumps(asdict(draws.config))),
    )


def _resolve_fit_path(raw: str) -> Path:
    path = Path(raw)
    if path.is_dir():
        path = path / "fit.npz"
    if not path.exists():
        raise FileNotFoundError(f"no fit archive at {path}")
    return path


def _load_fit_archive(raw: str) -> FitResult:
    path = _resolve_fit_path(raw)
    with np.load(path, allow_pickle=False) as z:
        config = ModelConfig.from_json(str(z["model_config"].item()))
        sampler = SamplerConfig(**json.loads(str(z["sampler_config"].item())))
        posterior = Posterior(
            config,
            z["y"],
            y_mask=z["y_mask"],
            x=z["x"],
            x_mask=z["x_mask"],
        )
        if z["draws"].shape[2] != posterior.packer.dim:
            raise ValueError(
                f"archive {path} is inconsistent: draw dimension "
                f"{z['draws'].shape[2]} does not match the rebuilt "
                f"posterior's {posterior.packer.dim}"
            )
        draws = PosteriorDraws(
            draws=z["draws"],
            log_posteriors=z["log_posteriors"],
            accept_rates=z["accept_rates"],
            warmup_accept_rates=z["warmup_accept_rates"],
            divergences=z["divergences"],
            warmup_divergences=z["warmup_divergences"],
            step_sizes=z["step_sizes"],
            mass_diag=z["mass_diag"],
            config=sampler,
        )
    return FitResult(posterior=posterior, draws=draws)


# --- subcommands ----------------------------------------------------------------


def _cmd_cluster(args) -> int:
    counts = load_counts(args.otu)
    binned, profiles = cluster(counts, args.bins)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_table(_bins_to_table(binned), out)

    with open(out.parent / "assignment.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["otu_id", "bin", "phase", "amplitude"])
        for profile in profiles:
            writer.writerow(
                [
                    profile.otu_id,
                    binned.bin_of[profile.otu_id],
                    repr(float(profile.phase)),
                    repr(float(profile.amplitude)),
                ]
            )
    _write_json(
        {
            "bin_sds": [float(s) for s in binned.bin_sds],
            "s_bar": float(binned.s_bar),
            "pseudocount": bool(binned.pseudocount),
        },
        out.parent / "scaling.json",
    )
    print(
        f"clustered {counts.n_cols} series into {args.bins} bins over "
        f"{binned.n_times} weeks -> {out}"
    )
    return 0


def _cmd_shrinkage_sim(args) -> int:
    precision = CirculantPrecision.from_positive(
        args.prec_lo, args.prec_hi, args.series
    )
    summary = simulate_shrinkage_prior(
        precision, args.tau, args.n_obs, args.draws, args.seed, s2=args.s2
    )
    if args.out:
        _write_json(summary, Path(args.out))
        print(f"wrote {args.out}")
    else:
        print(json.dumps(_json_ready(summary), indent=2))
    return 0


def _cmd_simulate(args) -> int:
    spec = TruthSpec.from_json(Path(args.spec).read_text())
    binned, covariates, _ = simulate_var(spec)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_table(_bins_to_table(binned), outdir / "bins.csv")
    if covariates is None:
        covariates = SeriesTable(
            timestamps=list(binned.timestamps),
            columns=[],
            values=np.zeros((binned.n_times, 0)),
            missing_mask=np.zeros((binned.n_times, 0), dtype=bool),
        )
    write_table(covariates, outdir / "covariates.csv")
    (outdir / "truth.json").write_text(spec.to_json() + "\n")
    print(
        f"simulated {spec.n_times} weeks of {spec.n_series} series "
        f"({spec.n_covariates} covariates) -> {outdir}"
    )
    return 0


def _cmd_fit(args) -> int:
    bins_table = load_covariates(args.bins)
    covariates = load_covariates(args.covariates) if args.covariates else None
    n_cov = covariates.n_cols if covariates is not None else 0

    if args.config:
        config = ModelConfig.from_json(Path(args.config).read_text())
    else:
        # Without an explicit config, guess one credible driver per series.
        config = ModelConfig(
            n_series=bins_table.n_cols,
            n_covariates=n_cov,
            expected_nonzero=float(bins_table.n_cols),
        )
    if config.n_series != bins_table.n_cols:
        raise ValueError(
            f"config expects {config.n_series} series but the bin table "
            f"has {bins_table.n_cols}"
        )
    if config.n_covariates != n_cov:
        raise ValueError(
            f"config expects {config.n_covariates} covariates but "
            f"{n_cov} were supplied"
        )

    sampler = SamplerConfig(
        chains=args.chains,
        iterations=args.iter,
        warmup=args.warmup,
        thin=args.thin,
        target_accept=args.target_accept,
        max_leapfrog_steps=args.max_leapfrog_steps,
        step_size=args.step_size,
        seed=args.seed,
    )
    binned = _table_to_binned(bins_table)
    print(
        f"sampling {sampler.chains} chains x {sampler.iterations} iterations "
        f"({bins_table.n_rows} weeks, {config.n_series} series, "
        f"{config.n_covariates} covariates)"
    )
    result = fit_model(config, binned, covariates, sampler)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    names = result.report_names()
    series = result.report_series()
    with open(outdir / "draws.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chain", "iter"] + names)
        for c in range(series.shape[0]):
            for r in range(series.shape[1]):
                writer.writerow(
                    [c + 1, r + 1] + [repr(float(v)) for v in series[c, r]]
                )

    summary = summary_envelope(
        result.parameter_summaries(), result.draws.divergence_fraction
    )
    _write_json(summary, outdir / "summary.json")

    draws = result.draws
    _write_json(
        {
            "chains": draws.n_chains,
            "iterations": sampler.iterations,
            "warmup": sampler.warmup,
            "thin": sampler.thin,
            "retained_per_chain": draws.n_retained,
            "seed": sampler.seed,
            "step_sizes": draws.step_sizes.tolist(),
            "accept_rates": draws.accept_rates.tolist(),
            "warmup_accept_rates": draws.warmup_accept_rates.tolist(),
            "divergences": draws.divergences.tolist(),
            "warmup_divergences": draws.warmup_divergences.tolist(),
            "divergence_fraction": draws.divergence_fraction,
        },
        outdir / "sampler.json",
    )
    _save_fit_archive(outdir / "fit.npz", result)

    print(
        f"retained {draws.n_retained} draws per chain; mean acceptance "
        f"{float(draws.accept_rates.mean()):.3f}; divergences "
        f"{int(draws.divergences.sum())} -> {outdir}"
    )
    for message in summary["warnings"]:
        print(f"warning: {message}", file=sys.stderr)
    return 0


def _cmd_summarize(args) -> int:
    result = _load_fit_archive(args.fit)
    report = build_report(result, level=args.level)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.json").write_text(report.to_json() + "\n")
    (outdir / "report.md").write_text(report.to_markdown())
    print(
        f"{len(report.selected)} coefficients selected at the "
        f"{int(args.level * 100)}% level -> {outdir}"
    )
    return 0


def _cmd_screen(args) -> int:
    result = _load_fit_archive(args.fit)
    if result.config.n_covariates:
        print(
            "note: screening is calibrated for intercept-only fits; this "
            f"fit already used {result.config.n_covariates} covariates",
            file=sys.stderr,
        )
    covariates = load_covariates(args.covariates)
    residuals = residual_means(result.posterior, result.draws)
    records = screen_covariates(residuals, covariates, args.threshold)
    payload = {"threshold": args.threshold, "covariates": records}
    if args.out:
        _write_json(payload, Path(args.out))
    flagged = sum(1 for rec in records if rec["flagged"])
    print(f"screened {len(records)} covariates, {flagged} flagged")
    for rec in records:
        marker = "*" if rec["flagged"] else " "
        print(f"  {marker} {rec['name']}: {rec['max_abs_correlation']:.3f}")
    return 0


def _cmd_diagnose(args) -> int:
    result = _load_fit_archive(args.fit)
    summary = summary_envelope(
        result.parameter_summaries(), result.draws.divergence_fraction
    )
    if args.out:
        _write_json(summary, Path(args.out))
    print(f"{'parameter':<22} {'mean':>10} {'sd':>10} {'rhat':>8} {'ess':>8}")
    for name, entry in summary["parameters"].items():
        rhat = entry["rhat"]
        ess = entry["ess"]
        print(
            f"{name:<22} {entry['mean']:>10.4f} {entry['sd']:>10.4f} "
            f"{rhat:>8.3f} {ess:>8.0f}"
            if np.isfinite(rhat) and np.isfinite(ess)
            else f"{name:<22} {entry['mean']:>10.4f} {entry['sd']:>10.4f} "
            f"{'n/a':>8} {'n/a':>8}"
        )
    print(
        f"max rhat {summary['max_rhat']:.3f}; min ess "
        f"{summary['min_ess']:.0f}; divergence fraction "
        f"{summary['divergence_fraction']:.4f}"
    )
    for message in summary["warnings"]:
        print(f"warning: {message}", file=sys.stderr)
    return 0


# --- parser ---------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="binvar",
        description="Seasonal sparse VAR pipeline for weekly count series",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cluster", help="assign series to phase bins")
    p.add_argument("--otu", required=True, help="weekly count CSV")
    p.add_argument("--bins", required=True, type=int, help="number of bins")
    p.add_argument("--out", required=True, help="output CSV of scaled bins")
    p.set_defaults(handler=_cmd_cluster)

    p = sub.add_parser(
        "shrinkage-sim", help="Monte Carlo summary of the shrinkage prior"
    )
    p.add_argument("--prec-lo", required=True, type=float)
    p.add_argument("--prec-hi", required=True, type=float)
    p.add_argument("--series", required=True, type=int)
    p.add_argument("--tau", required=True, type=float, help="global scale")
    p.add_argument("--n-obs", required=True, type=int)
    p.add_argument("--draws", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--s2", type=float, default=1.0, help="predictor scale^2")
    p.add_argument("--out", help="JSON output path (default: stdout)")
    p.set_defaults(handler=_cmd_shrinkage_sim)

    p = sub.add_parser("simulate", help="draw a synthetic dataset")
    p.add_argument("--spec", required=True, help="ground-truth JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("fit", help="sample the posterior")
    p.add_argument("--bins", required=True, help="scaled bin CSV")
    p.add_argument("--covariates", help="covariate CSV (optional)")
    p.add_argument("--config", help="model configuration JSON")
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--iter", type=int, default=10_000)
    p.add_argument("--warmup", type=int, default=3_000)
    p.add_argument("--thin", type=int, default=None)
    p.add_argument("--target-accept", type=float, default=0.8)
    p.add_argument("--max-leapfrog-steps", type=int, default=32)
    p.add_argument("--step-size", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=_cmd_fit)

    p = sub.add_parser("summarize", help="build the fit report")
    p.add_argument("--fit", required=True, help="fit directory or fit.npz")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=_cmd_summarize)

    p = sub.add_parser("screen", help="rank covariates by residual correlation")
    p.add_argument("--fit", required=True, help="fit directory or fit.npz")
    p.add_argument("--covariates", required=True, help="candidate CSV")
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--out", help="JSON output path (optional)")
    p.set_defaults(handler=_cmd_screen)

    p = sub.add_parser("diagnose", help="re-emit the convergence table")
    p.add_argument("--fit", required=True, help="fit directory or fit.npz")
    p.add_argument("--out", help="JSON output path (optional)")
    p.set_defaults(handler=_cmd_diagnose)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
