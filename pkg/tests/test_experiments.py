import math
import subprocess
import sys

import numpy as np
import pytest

from cbi2.cli import main as cli_main
from cbi2.experiments import (
    ConfigParseError,
    build_experiment,
    emit_plotdata,
    load_experiment,
    parse_config_text,
    qq_coordinates,
    run_experiment,
)

DIAGONAL_KV = {
    "kind": "simulate",
    "model.a1": "1", "model.a2": "1", "model.b11": "1", "model.b12": "0",
    "model.b21": "0", "model.b22": "1", "model.sigma1": "1", "model.sigma2": "1",
}


def make_exp(tmp_path, **overrides):
    kv = dict(DIAGONAL_KV)
    kv["out_dir"] = str(tmp_path / "out")
    kv.update({k: str(v) for k, v in overrides.items()})
    return build_experiment(kv)


class TestConfigParsing:
    def test_comments_and_dotted_keys(self):
        text = """
        # a comment line
        kind = simulate
        model.a1 = 2.5   # trailing comment
        sim.euler_dt = 1e-3
        """
        kv = parse_config_text(text)
        assert kv["kind"] == "simulate"
        assert kv["model.a1"] == "2.5"

    def test_malformed_line(self):
        with pytest.raises(ConfigParseError):
            parse_config_text("kind simulate")

    def test_unknown_key_rejected(self, tmp_path):
        with pytest.raises(ConfigParseError):
            make_exp(tmp_path, **{"model.a3": "1.0"})

    def test_kind_required(self):
        with pytest.raises(ConfigParseError):
            build_experiment({"model.a1": "1"})

    def test_n_grid_must_increase(self, tmp_path):
        with pytest.raises(ConfigParseError):
            make_exp(tmp_path, kind="mc_consistency", n_grid="1000,500")

    def test_defaults_resolved(self, tmp_path):
        exp = make_exp(tmp_path)
        assert exp.delta == 1.0
        assert exp.euler_dt == 1e-3
        assert exp.weight == "constant"
        assert exp.burn_in == pytest.approx(50.0)  # 50 / xi_min, xi_min = 1
        assert exp.covariance is False

    def test_overrides_win(self, tmp_path):
        kv = dict(DIAGONAL_KV, out_dir=str(tmp_path))
        exp = build_experiment(kv, {"seed": "77", "sim.n_obs": "5"})
        assert exp.seed == 77
        assert exp.n_obs == 5

    def test_config_file_roundtrip(self, tmp_path):
        exp = make_exp(tmp_path, seed=9)
        cfg_path = tmp_path / "exp.cfg"
        cfg_path.write_text(exp.to_text())
        again = load_experiment(cfg_path)
        assert again == exp


class TestSimulateKind:
    def test_series_has_right_shape_and_sign(self, tmp_path):
        exp = make_exp(tmp_path, **{"sim.n_obs": 100, "sim.sampler": "exact", "seed": 5})
        artifacts = run_experiment(exp)
        series = (exp.out_dir / "series.csv").read_text().splitlines()
        assert series[0] == "t,x1,x2"
        assert len(series) == 102  # header + n+1 observations
        data = np.array([[float(v) for v in line.split(",")] for line in series[1:]])
        assert data[:, 1:].min() >= 0.0
        resolved = (exp.out_dir / "resolved_config.txt").read_text()
        assert "sim.burn_in = 50" in resolved  # defaults are echoed
        assert any(p.name == "resolved_config.txt" for p in artifacts)

    def test_rerun_is_byte_identical(self, tmp_path):
        exp = make_exp(tmp_path, **{"sim.n_obs": 40, "seed": 12})
        run_experiment(exp)
        first = (exp.out_dir / "series.csv").read_bytes()
        run_experiment(exp)
        assert (exp.out_dir / "series.csv").read_bytes() == first


class TestEstimateKind:
    def test_external_data(self, tmp_path):
        sim = make_exp(tmp_path, **{"sim.n_obs": 400, "sim.sampler": "exact", "seed": 3})
        run_experiment(sim)
        est = make_exp(
            tmp_path, kind="estimate", data=str(sim.out_dir / "series.csv"),
        )
        run_experiment(est)
        text = (est.out_dir / "estimate.txt").read_text()
        kv = dict(
            line.split(" = ") for line in text.strip().splitlines()
        )
        assert kv["admissible"] == "true"
        assert kv["n"] == "400"
        header = (est.out_dir / "estimates.csv").read_text().splitlines()[0]
        assert header.startswith("rho1,rho2,gamma11")

    def test_estimator_failure_exit_code(self, tmp_path):
        flat = tmp_path / "flat.csv"
        flat.write_text("t,x1,x2\n" + "".join(f"{k},1,2\n" for k in range(6)))
        rc = cli_main(
            ["estimate", "--data", str(flat), "--out", str(tmp_path / "o")]
        )
        assert rc == 4

    def test_inadmissible_gamma_exit_code(self, tmp_path):
        # explosive zero-noise recursion: fitted slope has an eigenvalue > 1
        x = np.array([1.0, 1.0])
        rows = ["t,x1,x2"]
        for k in range(8):
            rows.append(f"{k},{x[0]:.17g},{x[1]:.17g}")
            x = np.array([0.1, 0.1]) + np.array([[1.2, 0.0], [0.0, 0.5]]) @ x
        data = tmp_path / "explosive.csv"
        data.write_text("\n".join(rows) + "\n")
        out = tmp_path / "o2"
        rc = cli_main(["estimate", "--data", str(data), "--out", str(out)])
        assert rc == 4
        # the regression pair is still written for inspection
        assert "admissible = false" in (out / "estimate.txt").read_text()


class TestLaplaceKind:
    def test_summary_and_plotdata_schema(self, tmp_path):
        exp = make_exp(
            tmp_path, kind="laplace_check", n_paths=5000,
            **{"sim.sampler": "exact", "lambda1": 0.5, "lambda2": 0.2},
        )
        run_experiment(exp)
        summary = dict(
            line.split(" = ")
            for line in (exp.out_dir / "summary.txt").read_text().strip().splitlines()
        )
        assert {"formula", "empirical", "mc_se", "z"} <= set(summary)
        assert abs(float(summary["z"])) < 5.0
        plot = (exp.out_dir / "plotdata_laplace.csv").read_text().splitlines()
        assert plot[0] == "scale,formula,empirical,mc_se,z"
        assert len(plot) == 22  # header + 21 scale points


def read_rows(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    return header, [dict(zip(header, line.split(","))) for line in lines[1:]]


def read_summary(path):
    return dict(
        line.split(" = ") for line in path.read_text().strip().splitlines()
    )


@pytest.fixture(scope="module")
def consistency_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("mc")
    kv = dict(DIAGONAL_KV, kind="mc_consistency", out_dir=str(out))
    exp = build_experiment(
        kv,
        {"n_grid": "200,400", "replicates": "4", "sim.sampler": "exact",
         "seed": "21"},
    )
    run_experiment(exp)
    return exp


@pytest.fixture(scope="module")
def clt_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("clt")
    kv = dict(DIAGONAL_KV, kind="mc_clt", out_dir=str(out))
    exp = build_experiment(
        kv,
        {"replicates": "40", "sim.n_obs": "400", "sim.sampler": "exact",
         "seed": "33"},
    )
    run_experiment(exp)
    return exp


class TestMcConsistencyKind:
    def test_row_count(self, consistency_run):
        header, rows = read_rows(consistency_run.out_dir / "estimates.csv")
        assert len(rows) == 2 * 4
        assert header[:3] == ["n", "replicate", "seed"]

    def test_summary_recomputable_from_rows(self, consistency_run):
        header, rows = read_rows(consistency_run.out_dir / "estimates.csv")
        summary = read_summary(consistency_run.out_dir / "summary.txt")
        true = consistency_run.true_values()
        drift_names = ["rho1", "rho2", "gamma11", "gamma12", "gamma21", "gamma22"]
        for n in (200, 400):
            errs = [
                max(abs(float(r[name]) - true[name]) for name in drift_names)
                for r in rows
                if r["n"] == str(n)
            ]
            assert float(summary[f"median_maxerr_drift_n{n}"]) == pytest.approx(
                float(np.median(errs)), abs=1e-12
            )
            assert float(summary[f"rmse_maxerr_drift_n{n}"]) == pytest.approx(
                math.sqrt(np.mean(np.square(errs))), abs=1e-12
            )
            bias = np.mean(
                [float(r["sigma1_sq"]) - true["sigma1_sq"] for r in rows if r["n"] == str(n)]
            )
            assert float(summary[f"bias_sigma1_sq_n{n}"]) == pytest.approx(bias, abs=1e-12)

    def test_plotdata_rows_match_grid(self, consistency_run):
        plot = (consistency_run.out_dir / "plotdata_consistency_median_maxerr_drift.csv")
        lines = plot.read_text().splitlines()
        assert lines[0] == "n,error"
        assert len(lines) == 1 + len(consistency_run.n_grid)

    def test_jobs_do_not_change_artifacts(self, consistency_run, tmp_path):
        kv = dict(DIAGONAL_KV, kind="mc_consistency", out_dir=str(tmp_path / "par"))
        exp = build_experiment(
            kv,
            {"n_grid": "200,400", "replicates": "4", "sim.sampler": "exact",
             "seed": "21", "jobs": "2"},
        )
        run_experiment(exp)
        for name in ("estimates.csv", "summary.txt"):
            assert (exp.out_dir / name).read_bytes() == (
                consistency_run.out_dir / name
            ).read_bytes()


class TestMcCltKind:
    def test_rows_and_summary(self, clt_run):
        header, rows = read_rows(clt_run.out_dir / "estimates.csv")
        assert len(rows) == 40
        assert header[-1] == "gamma11_asvar"
        summary = read_summary(clt_run.out_dir / "summary.txt")
        for name in ("a1", "b12", "sigma2"):
            assert f"ks_p_{name}" in summary
        assert "gamma11_var_empirical" in summary
        assert "gamma11_var_sandwich_mean" in summary

    def test_summary_recomputable(self, clt_run):
        header, rows = read_rows(clt_run.out_dir / "estimates.csv")
        summary = read_summary(clt_run.out_dir / "summary.txt")
        sqrt_n = math.sqrt(400)
        errs = [sqrt_n * (float(r["a1"]) - 1.0) for r in rows]
        assert float(summary["mean_err_a1"]) == pytest.approx(np.mean(errs), abs=1e-10)
        assert float(summary["sd_err_a1"]) == pytest.approx(
            np.std(errs, ddof=1), abs=1e-10
        )

    def test_qq_files(self, clt_run):
        for name in ("a1", "sigma1"):
            lines = (clt_run.out_dir / f"plotdata_qq_{name}.csv").read_text().splitlines()
            assert lines[0] == "normal_quantile,sample_quantile"
            assert len(lines) == 1 + 40


class TestQqCoordinates:
    def test_standard_normal_hugs_diagonal(self):
        rng = np.random.default_rng(2024)
        q, z = qq_coordinates(rng.standard_normal(300))
        central = slice(15, 285)  # central 90% of the order statistics
        assert np.max(np.abs(q[central] - z[central])) < 0.35


class TestCli:
    def test_simulate_roundtrip_exit_zero(self, tmp_path):
        rc = cli_main(
            ["simulate", "--sim.n_obs", "30", "--sim.sampler", "exact",
             "--seed", "4", "--out", str(tmp_path / "cli_out"), "--jobs", "1"]
        )
        assert rc == 0
        assert (tmp_path / "cli_out" / "series.csv").exists()

    def test_run_command_with_config_file(self, tmp_path):
        cfg = tmp_path / "sim.cfg"
        cfg.write_text(
            "kind = simulate\nsim.n_obs = 10\nsim.sampler = exact\n"
            f"out_dir = {tmp_path / 'run_out'}\nseed = 8\n"
        )
        assert cli_main(["run", str(cfg)]) == 0
        assert (tmp_path / "run_out" / "series.csv").exists()

    def test_bad_config_exit_two(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("kind = nonsense\n")
        assert cli_main(["run", str(cfg)]) == 2
        assert cli_main(["simulate", "--bogus.key", "1"]) == 2

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "cbi2.cli", "simulate", "--sim.n_obs", "10",
             "--sim.sampler", "exact", "--out", str(tmp_path / "sub")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert "series.csv" in proc.stdout
