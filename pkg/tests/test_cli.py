"""End-to-end checks of every subcommand through the argparse front door."""

import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from binvar.cli import _load_fit_archive, main
from binvar.data_io import load_covariates
from binvar.synthgen import TruthSpec, simulate_var, weekly_timestamps


def write_counts_csv(path, n_weeks=104, n_otus=8, seed=0):
    rng = np.random.default_rng(seed)
    stamps = weekly_timestamps(n_weeks)
    phases = rng.uniform(-math.pi, math.pi, n_otus)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"] + [f"otu_{i + 1}" for i in range(n_otus)])
        for t, stamp in enumerate(stamps):
            row = [stamp.isoformat()]
            for i in range(n_otus):
                level = 100.0 + 60.0 * math.sin(
                    2.0 * math.pi * t / 52.0 + phases[i]
                )
                row.append(str(max(1, int(round(level + rng.normal(0, 3))))))
            writer.writerow(row)
    return path


def truth_spec(n_times=250, seed=13):
    ar = np.diag([0.5, 0.35, 0.3])
    ar[0, 2] = 0.25
    return TruthSpec(
        n_series=3, n_covariates=2, n_harmonics=1, n_times=n_times,
        ar_coef=ar,
        harmonic_sin=[[0.6, -0.4, 0.2]],
        harmonic_cos=[[0.1, 0.3, -0.5]],
        mean_coef=[[1.0, 0.0, -0.5], [0.8, 0.0, 0.0], [0.0, 0.0, 0.0]],
        prec_lo=math.sqrt(2.0) * 1.25 / 2.0,
        prec_hi=math.sqrt(2.0) * 0.75 / 2.0,
        covar_ar=[0.5, 0.5],
        covar_cov=(np.eye(2) * 0.6).tolist(),
        seed=seed,
    )


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def sim_dir(workdir):
    spec_path = workdir / "spec.json"
    spec_path.write_text(truth_spec().to_json())
    out = workdir / "sim"
    assert main(["simulate", "--spec", str(spec_path), "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def fit_dir(workdir, sim_dir):
    # Intercept-only fit: covariates withheld so `screen` has work to do.
    out = workdir / "fit"
    rc = main(
        [
            "fit",
            "--bins", str(sim_dir / "bins.csv"),
            "--chains", "1",
            "--iter", "500",
            "--warmup", "250",
            "--seed", "11",
            "--out", str(out),
        ]
    )
    assert rc == 0
    return out


class TestCluster:
    def test_outputs(self, workdir):
        counts = write_counts_csv(workdir / "otu.csv")
        out = workdir / "clustered" / "bins.csv"
        rc = main(["cluster", "--otu", str(counts), "--bins", "4",
                   "--out", str(out)])
        assert rc == 0

        table = load_covariates(out)
        assert table.columns == ["bin_1", "bin_2", "bin_3", "bin_4"]
        assert table.n_rows == 104

        with open(out.parent / "assignment.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert {row["otu_id"] for row in rows} == {f"otu_{i + 1}" for i in range(8)}
        for row in rows:
            assert 1 <= int(row["bin"]) <= 4
            assert -math.pi <= float(row["phase"]) <= math.pi
            assert float(row["amplitude"]) >= 0.0

        scaling = json.loads((out.parent / "scaling.json").read_text())
        assert len(scaling["bin_sds"]) == 4
        assert scaling["s_bar"] > 0
        # The emitted table is the log totals divided by the mean sd
        # (population convention), so output per-bin sds average to one.
        mean_sd = np.mean([
            np.std(table.values[:, j][~table.missing_mask[:, j]])
            for j in range(4)
        ])
        assert abs(mean_sd - 1.0) < 1e-9

    def test_single_bin_rejected(self, workdir, capsys):
        counts = workdir / "otu.csv"
        rc = main(["cluster", "--otu", str(counts), "--bins", "1",
                   "--out", str(workdir / "nope.csv")])
        assert rc == 2
        assert "error:" in capsys.readouterr().err


class TestShrinkageSim:
    def test_json_file_output(self, workdir):
        out = workdir / "shrink.json"
        rc = main(
            [
                "shrinkage-sim",
                "--prec-lo", "0.7071", "--prec-hi", "0.7071",
                "--series", "6", "--tau", "0.1", "--n-obs", "100",
                "--draws", "2000", "--seed", "3",
                "--out", str(out),
            ]
        )
        assert rc == 0
        payload = json.loads(out.read_text())
        assert payload["n_draws"] == 2000
        assert 0.0 < payload["m_eff_mean"] < 36.0
        assert set(payload["diag_quantiles"]) == {"0.05", "0.25", "0.5", "0.75", "0.95"}
        # Equal positive coordinates mean a diagonal precision, so the
        # factor matrices are diagonal too.
        assert abs(payload["offdiag_quantiles"]["0.95"]) < 1e-12

    def test_stdout_mode(self, capsys):
        rc = main(
            [
                "shrinkage-sim",
                "--prec-lo", "1.0", "--prec-hi", "0.5",
                "--series", "4", "--tau", "0.05", "--n-obs", "200",
                "--draws", "500", "--seed", "1",
            ]
        )
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["n_responses"] == 4


class TestSimulate:
    def test_outputs_match_direct_call(self, sim_dir):
        spec = truth_spec()
        binned, covariates, _ = simulate_var(spec)

        bins = load_covariates(sim_dir / "bins.csv")
        assert bins.columns == ["bin_1", "bin_2", "bin_3"]
        np.testing.assert_allclose(bins.values, binned.y, atol=0)
        assert not bins.missing_mask.any()

        cov = load_covariates(sim_dir / "covariates.csv")
        assert cov.columns == ["cov_1", "cov_2"]
        np.testing.assert_allclose(cov.values, covariates.values, atol=0)

        echo = TruthSpec.from_json((sim_dir / "truth.json").read_text())
        assert echo.to_json() == spec.to_json()

    def test_bad_spec_rejected(self, workdir, capsys):
        bad = workdir / "bad_spec.json"
        payload = json.loads(truth_spec().to_json())
        payload["not_a_field"] = 1
        bad.write_text(json.dumps(payload))
        rc = main(["simulate", "--spec", str(bad), "--out", str(workdir / "x")])
        assert rc == 2
        assert "not_a_field" in capsys.readouterr().err


class TestFit:
    def test_draws_csv_layout(self, fit_dir):
        with open(fit_dir / "draws.csv") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        assert header[:2] == ["chain", "iter"]
        assert "a[1,1]" in header
        assert "rho[1]" in header
        assert "lp" in header
        assert len(rows) == 250
        assert rows[0][0] == "1" and rows[0][1] == "1"
        assert rows[-1][1] == "250"
        for cell in rows[0][2:]:
            float(cell)

    def test_summary_json(self, fit_dir):
        payload = json.loads((fit_dir / "summary.json").read_text())
        assert set(payload) == {
            "parameters", "divergence_fraction", "max_rhat", "min_ess",
            "warnings",
        }
        entry = payload["parameters"]["a[1,1]"]
        assert {"mean", "sd", "rhat", "ess", "q2.5", "q50", "q97.5"} <= set(entry)

    def test_sampler_json(self, fit_dir):
        payload = json.loads((fit_dir / "sampler.json").read_text())
        assert payload["chains"] == 1
        assert payload["iterations"] == 500
        assert payload["warmup"] == 250
        assert payload["retained_per_chain"] == 250
        assert len(payload["step_sizes"]) == 1
        assert payload["step_sizes"][0] > 0
        assert payload["divergence_fraction"] <= 1.0

    def test_archive_round_trip(self, fit_dir):
        result = _load_fit_archive(str(fit_dir))
        assert result.draws.n_chains == 1
        assert result.draws.n_retained == 250
        assert result.config.n_series == 3
        assert result.config.n_covariates == 0

        with open(fit_dir / "draws.csv") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            first = next(reader)
        names = result.report_names()
        assert header[2:] == names
        np.testing.assert_allclose(
            [float(v) for v in first[2:]], result.report_matrix()[0], rtol=0,
            atol=0,
        )

    def test_dimension_mismatch_rejected(self, workdir, sim_dir, capsys):
        config = workdir / "wrong_config.json"
        config.write_text(json.dumps({"n_series": 5, "n_covariates": 0}))
        rc = main(
            [
                "fit",
                "--bins", str(sim_dir / "bins.csv"),
                "--config", str(config),
                "--out", str(workdir / "nope"),
            ]
        )
        assert rc == 2
        assert "5 series" in capsys.readouterr().err

    def test_missing_file_rejected(self, workdir, capsys):
        rc = main(["fit", "--bins", str(workdir / "absent.csv"),
                   "--out", str(workdir / "nope")])
        assert rc == 2
        assert "error:" in capsys.readouterr().err


class TestSummarize:
    def test_report_files(self, workdir, fit_dir):
        out = workdir / "report"
        rc = main(["summarize", "--fit", str(fit_dir), "--out", str(out)])
        assert rc == 0
        payload = json.loads((out / "report.json").read_text())
        assert payload["level"] == 0.95
        selected = {rec["name"] for rec in payload["selected"]}
        assert "a[1,1]" in selected  # strong diagonal lag in the truth
        markdown = (out / "report.md").read_text()
        assert "## Selected coefficients" in markdown
        assert "## Sampler" in markdown

    def test_missing_archive_rejected(self, workdir, capsys):
        rc = main(["summarize", "--fit", str(workdir / "ghost"),
                   "--out", str(workdir / "r")])
        assert rc == 2
        assert "no fit archive" in capsys.readouterr().err


class TestScreen:
    def test_injected_covariate_flagged_first(self, workdir, fit_dir, sim_dir,
                                              capsys):
        out = workdir / "screen.json"
        rc = main(
            [
                "screen",
                "--fit", str(fit_dir),
                "--covariates", str(sim_dir / "covariates.csv"),
                "--out", str(out),
            ]
        )
        assert rc == 0
        payload = json.loads(out.read_text())
        records = payload["covariates"]
        assert len(records) == 2
        # cov_1 drives series 1 in the truth; cov_2 is inert.
        assert records[0]["name"] == "cov_1"
        assert records[0]["flagged"]
        assert records[0]["max_abs_correlation"] > records[1]["max_abs_correlation"]
        assert "cov_1" in capsys.readouterr().out


class TestDiagnose:
    def test_table_and_json(self, workdir, fit_dir, capsys):
        out = workdir / "diag.json"
        rc = main(["diagnose", "--fit", str(fit_dir), "--out", str(out)])
        assert rc == 0
        stdout = capsys.readouterr().out
        assert "parameter" in stdout
        assert "max rhat" in stdout
        payload = json.loads(out.read_text())
        assert payload["max_rhat"] is None or payload["max_rhat"] > 0.9
        assert "a[1,1]" in payload["parameters"]


class TestConsoleScript:
    def test_help_via_module(self):
        proc = subprocess.run(
            [sys.executable, "-m", "binvar.cli", "--help"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "cluster" in proc.stdout
        assert "shrinkage-sim" in proc.stdout
