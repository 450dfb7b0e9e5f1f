"""Declarative experiment harness: configs, runners and artifact emission.

A run is described by a flat ``key = value`` text file with ``#`` comments
and dotted keys (``model.a1``, ``sim.euler_dt``).  Five kinds are supported:

    simulate        one observation series -> series.csv
    estimate        fit one series (simulated or external) -> estimate.txt
    laplace_check   Riccati formula vs Monte Carlo cloud -> summary + curve
    mc_consistency  replicate estimates over a grid of sample sizes
    mc_clt          replicate estimates at fixed n with sandwich covariance

Every runner echoes the fully resolved configuration (defaults included) to
``resolved_config.txt`` and writes CSV artifacts with 17-significant-digit
values, so a rerun under the same config and seed is byte-identical.
Replicates are sharded across a process pool when ``jobs > 1``; per-replicate
seed streams make the artifacts independent of the shard layout.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy import stats as sps

from .estimate import (
    EstimateReport,
    EstimationError,
    WeightFn,
    full_estimate,
    gamma_asymptotic_variance,
)
from .mat2 import Vec2
from .model import ModelParams, mean_coefficients
from .simulate import (
    ObservationSeries,
    SimConfig,
    laplace_check,
    simulate_exact_diagonal,
    simulate_many,
    simulate_path,
    terminal_states,
)

__all__ = [
    "ExperimentConfig",
    "McReport",
    "ConfigParseError",
    "EstimationHalted",
    "parse_config_text",
    "build_experiment",
    "load_experiment",
    "run_experiment",
    "emit_plotdata",
    "qq_coordinates",
    "DEFAULT_MODEL",
]

KINDS = ("simulate", "estimate", "laplace_check", "mc_consistency", "mc_clt")

DEFAULT_MODEL = ModelParams(1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0)

PARAM_NAMES = ("a1", "a2", "b11", "b12", "b21", "b22", "sigma1", "sigma2")


class ConfigParseError(ValueError):
    """Experiment configuration file or overrides could not be parsed."""


def _fmt(x: float) -> str:
    return f"{x:.17g}"


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved description of one experiment run."""

    kind: str
    model: ModelParams
    out_dir: Path
    euler_dt: float = 1e-3
    delta: float = 1.0
    n_obs: int = 1000
    burn_in: float = -1.0  # resolved to 50/xi_min in build_experiment
    x0: Vec2 = field(default_factory=lambda: Vec2(1.0, 1.0))
    sampler: str = "euler"
    weight: str = "constant"
    rho_convention: str = "divide"
    covariance: bool = False
    replicates: int = 100
    n_grid: tuple[int, ...] = ()
    seed: int = 1
    jobs: int = 1
    lam: Vec2 = field(default_factory=lambda: Vec2(0.5, 0.0))
    t: float = 1.0
    n_paths: int = 100_000
    data: Optional[str] = None

    def sim_config(self, n_obs: Optional[int] = None) -> SimConfig:
        return SimConfig(
            params=self.model,
            euler_dt=self.euler_dt,
            delta=self.delta,
            n_obs=self.n_obs if n_obs is None else n_obs,
            burn_in=self.burn_in,
            x0=self.x0,
            seed=self.seed,
        )

    def weight_fn(self) -> WeightFn:
        return WeightFn.from_tag(self.weight)

    def true_values(self) -> dict[str, float]:
        """Reference parameter values implied by the configured model."""
        rho, gamma = mean_coefficients(
            self.model.drift_vector(), self.model.reversion_matrix(), self.delta
        )
        return {
            "rho1": rho.v1, "rho2": rho.v2,
            "gamma11": gamma.m11, "gamma12": gamma.m12,
            "gamma21": gamma.m21, "gamma22": gamma.m22,
            "a1": self.model.a1, "a2": self.model.a2,
            "b11": self.model.b11, "b12": self.model.b12,
            "b21": self.model.b21, "b22": self.model.b22,
            "sigma1_sq": self.model.sigma1**2, "sigma2_sq": self.model.sigma2**2,
        }

    def to_text(self) -> str:
        lines = [
            f"kind = {self.kind}",
            *(f"model.{n} = {_fmt(getattr(self.model, n))}" for n in PARAM_NAMES),
            f"sim.euler_dt = {_fmt(self.euler_dt)}",
            f"sim.delta = {_fmt(self.delta)}",
            f"sim.n_obs = {self.n_obs}",
            f"sim.burn_in = {_fmt(self.burn_in)}",
            f"sim.x0_1 = {_fmt(self.x0.v1)}",
            f"sim.x0_2 = {_fmt(self.x0.v2)}",
            f"sim.sampler = {self.sampler}",
            f"weight = {self.weight}",
            f"rho_convention = {self.rho_convention}",
            f"covariance = {'true' if self.covariance else 'false'}",
            f"replicates = {self.replicates}",
            f"n_grid = {','.join(str(n) for n in self.n_grid)}",
            f"seed = {self.seed}",
            f"jobs = {self.jobs}",
            f"lambda1 = {_fmt(self.lam.v1)}",
            f"lambda2 = {_fmt(self.lam.v2)}",
            f"t = {_fmt(self.t)}",
            f"n_paths = {self.n_paths}",
            f"data = {self.data or ''}",
            f"out_dir = {self.out_dir}",
        ]
        return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigParseError(f"line {lineno}: expected 'key = value', got {raw!r}")
        out[key.strip()] = value.strip()
    return out


_KNOWN_KEYS = (
    {"kind", "weight", "rho_convention", "covariance", "replicates", "n_grid",
     "seed", "jobs", "lambda1", "lambda2", "t", "n_paths", "data", "out_dir",
     "sim.euler_dt", "sim.delta", "sim.n_obs", "sim.burn_in", "sim.x0_1",
     "sim.x0_2", "sim.sampler"}
    | {f"model.{n}" for n in PARAM_NAMES}
)


def _get(kv: dict[str, str], key: str, default: str) -> str:
    value = kv.get(key, "")
    return value if value != "" else default


def build_experiment(
    kv: dict[str, str], overrides: Optional[dict[str, str]] = None
) -> ExperimentConfig:
    """Resolve raw key-value pairs (plus overrides) into an ExperimentConfig."""
    merged = dict(kv)
    merged.update(overrides or {})
    unknown = set(merged) - _KNOWN_KEYS
    if unknown:
        raise ConfigParseError(f"unknown config keys: {sorted(unknown)}")
    kind = merged.get("kind", "")
    if kind not in KINDS:
        raise ConfigParseError(f"kind must be one of {KINDS}, got {kind!r}")

    def as_float(key: str, default: str) -> float:
        raw = _get(merged, key, default)
        try:
            return float(raw)
        except ValueError:
            raise ConfigParseError(f"{key}: expected a number, got {raw!r}") from None

    def as_int(key: str, default: str) -> int:
        raw = _get(merged, key, default)
        try:
            return int(raw)
        except ValueError:
            raise ConfigParseError(f"{key}: expected an integer, got {raw!r}") from None

    try:
        model = ModelParams(
            *(as_float(f"model.{n}", _fmt(getattr(DEFAULT_MODEL, n)))
              for n in PARAM_NAMES)
        )
    except ValueError as exc:
        raise ConfigParseError(f"invalid model parameters: {exc}") from None

    burn_default = 50.0 / model.reversion_rates()[0] if model.is_ergodic else 0.0
    covariance_default = "true" if kind in ("estimate", "mc_clt") else "false"
    cov_raw = _get(merged, "covariance", covariance_default).lower()
    if cov_raw not in ("true", "false"):
        raise ConfigParseError(f"covariance: expected true/false, got {cov_raw!r}")
    sampler = _get(merged, "sim.sampler", "euler")
    if sampler not in ("euler", "exact"):
        raise ConfigParseError(f"sim.sampler: expected euler/exact, got {sampler!r}")
    weight = _get(merged, "weight", "constant")
    if weight not in ("constant", "inverse_norm"):
        raise ConfigParseError(f"weight: expected constant/inverse_norm, got {weight!r}")
    rho_convention = _get(merged, "rho_convention", "divide")
    if rho_convention not in ("divide", "multiply"):
        raise ConfigParseError(
            f"rho_convention: expected divide/multiply, got {rho_convention!r}"
        )

    n_grid_raw = _get(merged, "n_grid", "")
    n_grid: tuple[int, ...] = ()
    if n_grid_raw:
        try:
            n_grid = tuple(int(tok) for tok in n_grid_raw.split(","))
        except ValueError:
            raise ConfigParseError("n_grid: expected comma-separated integers") from None
        if any(b <= a for a, b in zip(n_grid, n_grid[1:])) or any(n < 3 for n in n_grid):
            raise ConfigParseError(f"n_grid must be strictly increasing and >= 3, got {n_grid}")
    if kind == "mc_consistency" and not n_grid:
        raise ConfigParseError("mc_consistency requires n_grid")

    exp = ExperimentConfig(
        kind=kind,
        model=model,
        out_dir=Path(_get(merged, "out_dir", "out")),
        euler_dt=as_float("sim.euler_dt", "1e-3"),
        delta=as_float("sim.delta", "1"),
        n_obs=as_int("sim.n_obs", "1000"),
        burn_in=as_float("sim.burn_in", _fmt(burn_default)),
        x0=Vec2(as_float("sim.x0_1", "1"), as_float("sim.x0_2", "1")),
        sampler=sampler,
        weight=weight,
        rho_convention=rho_convention,
        covariance=cov_raw == "true",
        replicates=as_int("replicates", "100"),
        n_grid=n_grid,
        seed=as_int("seed", "1"),
        jobs=max(1, as_int("jobs", "1")),
        lam=Vec2(as_float("lambda1", "0.5"), as_float("lambda2", "0")),
        t=as_float("t", "1"),
        n_paths=as_int("n_paths", "100000"),
        data=_get(merged, "data", "") or None,
    )
    if exp.replicates < 1:
        raise ConfigParseError(f"replicates must be >= 1, got {exp.replicates}")
    exp.sim_config()  # validate the simulation block early
    return exp


def load_experiment(
    path: Union[str, Path], overrides: Optional[dict[str, str]] = None
) -> ExperimentConfig:
    return build_experiment(parse_config_text(Path(path).read_text()), overrides)


class EstimationHalted(EstimationError):
    """A run hit an estimate that is unusable (e.g. inadmissible gamma)."""


@dataclass
class McReport:
    """Replicate-level rows plus the flat summary computed from them."""

    kind: str
    columns: list[str]
    rows: list[list[str]]
    summary: dict[str, str]
    n_grid: tuple[int, ...] = ()
    truth: dict[str, float] = field(default_factory=dict)

    def write_rows(self, path: Path) -> None:
        lines = [",".join(self.columns)]
        lines += [",".join(row) for row in self.rows]
        path.write_text("\n".join(lines) + "\n")

    def write_summary(self, path: Path) -> None:
        lines = [f"{k} = {v}" for k, v in self.summary.items()]
        path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# replicate execution


def _estimate_rows(
    exp: ExperimentConfig, n_obs: int, stream_start: int, count: int
) -> list[dict]:
    """Simulate and estimate replicates stream_start .. stream_start+count-1."""
    cfg = exp.sim_config(n_obs=n_obs)
    series_list = simulate_many(cfg, count, exp.sampler, first_index=stream_start)
    g = exp.weight_fn()
    rows = []
    for i, series in enumerate(series_list):
        report = full_estimate(
            series, g,
            with_covariance=exp.covariance,
            rho_convention=exp.rho_convention,
        )
        if not report.admissible:
            raise EstimationHalted(
                f"replicate {stream_start + i} (seed {series.meta.seed}) produced "
                f"an inadmissible gamma estimate; sample too short for this model"
            )
        row = {
            "stream_index": stream_start + i,
            "seed": series.meta.seed,
            "n": n_obs,
            "report": report,
        }
        if exp.covariance:
            theta = _theta_from_report(report)
            row["gamma11_asvar"] = float(
                gamma_asymptotic_variance(
                    report.covariance * report.n, theta, exp.delta
                )[0, 0]
            )
        rows.append(row)
    return rows


def _theta_from_report(report: EstimateReport) -> np.ndarray:
    b = report.b_hat
    return np.array(
        [
            report.a_hat.v1, report.a_hat.v2,
            b.m11, -b.m12, -b.m21, b.m22,
            math.sqrt(max(report.sigma1_sq, 0.0)),
            math.sqrt(max(report.sigma2_sq, 0.0)),
        ]
    )


def _shard_task(args: tuple) -> list[dict]:
    exp, n_obs, stream_start, count = args
    return _estimate_rows(exp, n_obs, stream_start, count)


def _run_replicates(
    exp: ExperimentConfig, n_obs: int, block_start: int
) -> list[dict]:
    """All replicates for one n, sharded over exp.jobs processes."""
    total = exp.replicates
    if exp.jobs <= 1 or total < 4:
        return _estimate_rows(exp, n_obs, block_start, total)
    shards = []
    base = 0
    for j in range(exp.jobs):
        size = total // exp.jobs + (1 if j < total % exp.jobs else 0)
        if size:
            shards.append((exp, n_obs, block_start + base, size))
            base += size
    with ProcessPoolExecutor(max_workers=exp.jobs) as pool:
        results = list(pool.map(_shard_task, shards))
    return [row for shard in results for row in shard]


# ---------------------------------------------------------------------------
# runners


_ROW_PREFIX = ["n", "replicate", "seed"]


def _report_row(prefix: list, report: EstimateReport, extra: list) -> list[str]:
    return [str(v) for v in prefix] + report.to_csv_row().split(",") + [
        _fmt(v) for v in extra
    ]


def _median(values: list[float]) -> float:
    return float(np.median(np.array(values)))


def _run_simulate(exp: ExperimentConfig) -> list[Path]:
    cfg = exp.sim_config()
    series = (
        simulate_exact_diagonal(cfg) if exp.sampler == "exact" else simulate_path(cfg)
    )
    out = exp.out_dir / "series.csv"
    series.to_csv(out)
    return [out]


def _run_estimate(exp: ExperimentConfig) -> list[Path]:
    artifacts = []
    if exp.data:
        series = ObservationSeries.from_csv(exp.data)
    else:
        cfg = exp.sim_config()
        series = (
            simulate_exact_diagonal(cfg)
            if exp.sampler == "exact"
            else simulate_path(cfg)
        )
        series_path = exp.out_dir / "series.csv"
        series.to_csv(series_path)
        artifacts.append(series_path)
    report = full_estimate(
        series, exp.weight_fn(),
        with_covariance=exp.covariance,
        rho_convention=exp.rho_convention,
    )
    kv_path = exp.out_dir / "estimate.txt"
    kv_path.write_text(report.to_kv_text())
    csv_path = exp.out_dir / "estimates.csv"
    csv_path.write_text(
        ",".join(EstimateReport.csv_header()) + "\n" + report.to_csv_row() + "\n"
    )
    if not report.admissible:
        # rho/gamma are on disk for inspection; (A, B) could not be recovered
        raise EstimationHalted(
            "gamma estimate is inadmissible; drift matrix withheld"
        )
    return artifacts + [kv_path, csv_path]


_LAPLACE_SCALES = [0.1 * k for k in range(21)]


def _run_laplace_check(exp: ExperimentConfig) -> tuple[McReport, list[Path]]:
    cfg = exp.sim_config()
    states = terminal_states(cfg, exp.t, exp.n_paths, exp.sampler)
    columns = ["scale", "lambda1", "lambda2", "formula", "empirical", "mc_se", "z"]
    rows = []
    base = laplace_check(cfg, exp.lam, exp.t, exp.n_paths, exp.sampler, states=states)
    for s in _LAPLACE_SCALES:
        lam = Vec2(s * exp.lam.v1, s * exp.lam.v2)
        rep = laplace_check(cfg, lam, exp.t, exp.n_paths, exp.sampler, states=states)
        rows.append([_fmt(s), _fmt(lam.v1), _fmt(lam.v2), _fmt(rep.formula),
                     _fmt(rep.empirical), _fmt(rep.mc_se), _fmt(rep.z_score)])
    summary = {
        "lambda1": _fmt(exp.lam.v1),
        "lambda2": _fmt(exp.lam.v2),
        "t": _fmt(exp.t),
        "n_paths": str(exp.n_paths),
        "method": exp.sampler,
        "formula": _fmt(base.formula),
        "empirical": _fmt(base.empirical),
        "mc_se": _fmt(base.mc_se),
        "z": _fmt(base.z_score),
    }
    report = McReport(kind=exp.kind, columns=columns, rows=rows, summary=summary)
    paths = [exp.out_dir / "summary.txt"]
    report.write_summary(paths[0])
    return report, paths


def _run_mc_consistency(exp: ExperimentConfig) -> tuple[McReport, list[Path]]:
    true = exp.true_values()
    columns = _ROW_PREFIX + EstimateReport.csv_header()
    rows = []
    summary: dict[str, str] = {}
    drift_names = ("rho1", "rho2", "gamma11", "gamma12", "gamma21", "gamma22")
    for gi, n_obs in enumerate(exp.n_grid):
        raw = _run_replicates(exp, n_obs, gi * exp.replicates)
        drift_errs = []
        sig_errs = {"sigma1_sq": [], "sigma2_sq": []}
        bias_acc = {name: [] for name in true}
        for row in raw:
            report: EstimateReport = row["report"]
            replicate = row["stream_index"] - gi * exp.replicates
            rows.append(_report_row([n_obs, replicate, row["seed"]], report, []))
            values = dict(
                zip(EstimateReport._SCALAR_FIELDS, report._scalar_values())
            )
            drift_errs.append(
                max(abs(values[name] - true[name]) for name in drift_names)
            )
            for name in sig_errs:
                sig_errs[name].append(abs(values[name] - true[name]))
            for name in bias_acc:
                bias_acc[name].append(values[name] - true[name])
        tag = f"n{n_obs}"
        drift_arr = np.array(drift_errs)
        summary[f"median_maxerr_drift_{tag}"] = _fmt(_median(drift_errs))
        summary[f"rmse_maxerr_drift_{tag}"] = _fmt(
            math.sqrt(float(np.mean(drift_arr**2)))
        )
        for name in sig_errs:
            summary[f"median_abs_err_{name}_{tag}"] = _fmt(_median(sig_errs[name]))
        for name in bias_acc:
            summary[f"bias_{name}_{tag}"] = _fmt(float(np.mean(bias_acc[name])))
    report = McReport(
        kind=exp.kind, columns=columns, rows=rows, summary=summary, n_grid=exp.n_grid
    )
    est_path = exp.out_dir / "estimates.csv"
    sum_path = exp.out_dir / "summary.txt"
    report.write_rows(est_path)
    report.write_summary(sum_path)
    return report, [est_path, sum_path]


def _run_mc_clt(exp: ExperimentConfig) -> tuple[McReport, list[Path]]:
    true = exp.true_values()
    theta_true = {
        name: true[name] for name in
        ("a1", "a2", "b11", "b12", "b21", "b22")
    }
    theta_true["sigma1"] = exp.model.sigma1
    theta_true["sigma2"] = exp.model.sigma2
    columns = _ROW_PREFIX + EstimateReport.csv_header() + ["gamma11_asvar"]
    raw = _run_replicates(exp, exp.n_obs, 0)
    rows = []
    errors: dict[str, list[float]] = {name: [] for name in PARAM_NAMES}
    gamma11_errs = []
    gamma11_asvars = []
    sqrt_n = math.sqrt(exp.n_obs)
    for row in raw:
        report: EstimateReport = row["report"]
        asvar = row.get("gamma11_asvar", math.nan)
        rows.append(
            _report_row([exp.n_obs, row["stream_index"], row["seed"]], report, [asvar])
        )
        theta = _theta_from_report(report)
        for i, name in enumerate(PARAM_NAMES):
            errors[name].append(sqrt_n * (theta[i] - theta_true[name]))
        gamma11_errs.append(sqrt_n * (report.gamma_hat.m11 - true["gamma11"]))
        if not math.isnan(asvar):
            gamma11_asvars.append(asvar)
    summary: dict[str, str] = {
        "replicates": str(exp.replicates),
        "n": str(exp.n_obs),
    }
    for name in PARAM_NAMES:
        err = np.array(errors[name])
        mean = float(err.mean())
        sd = float(err.std(ddof=1))
        standardized = (err - mean) / sd
        ks = sps.kstest(standardized, "norm")
        summary[f"mean_err_{name}"] = _fmt(mean)
        summary[f"sd_err_{name}"] = _fmt(sd)
        summary[f"bias_{name}"] = _fmt(mean / sqrt_n)
        summary[f"rmse_{name}"] = _fmt(float(np.sqrt((err**2).mean())) / sqrt_n)
        summary[f"ks_stat_{name}"] = _fmt(float(ks.statistic))
        summary[f"ks_p_{name}"] = _fmt(float(ks.pvalue))
    err_cov = np.cov(np.array([errors[name] for name in PARAM_NAMES]))
    for i in range(8):
        for j in range(i, 8):
            summary[f"cov_err_{i + 1}{j + 1}"] = _fmt(float(err_cov[i, j]))
    g_err = np.array(gamma11_errs)
    summary["gamma11_var_empirical"] = _fmt(float(g_err.var(ddof=1)))
    if gamma11_asvars:
        summary["gamma11_var_sandwich_mean"] = _fmt(float(np.mean(gamma11_asvars)))
    report = McReport(
        kind=exp.kind, columns=columns, rows=rows, summary=summary,
        truth=_clt_truth_table(exp),
    )
    est_path = exp.out_dir / "estimates.csv"
    sum_path = exp.out_dir / "summary.txt"
    report.write_rows(est_path)
    report.write_summary(sum_path)
    return report, [est_path, sum_path]


def qq_coordinates(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Standard-normal QQ coordinates of a sample after studentization.

    Returns (theoretical quantiles at midpoint positions, sorted standardized
    sample); a normal sample hugs the diagonal.
    """
    values = np.asarray(values, dtype=float)
    z = np.sort((values - values.mean()) / values.std(ddof=1))
    m = len(z)
    quantiles = sps.norm.ppf((np.arange(1, m + 1) - 0.5) / m)
    return quantiles, z


def emit_plotdata(report: McReport, out_dir: Union[str, Path]) -> list[Path]:
    """Write plain two-column (or labelled multi-column) CSVs for plotting.

    mc_consistency: error-vs-n (one row per grid point, log-log ready);
    mc_clt: QQ coordinates of each standardized marginal against the standard
    normal; laplace_check: formula/empirical comparison curve with z-scores.
    """
    out_dir = Path(out_dir)
    paths: list[Path] = []

    def write(name: str, header: list[str], rows: list[list[str]]) -> None:
        path = out_dir / name
        path.write_text("\n".join([",".join(header)] + [",".join(r) for r in rows]) + "\n")
        paths.append(path)

    if report.kind == "mc_consistency":
        for stat in ("median_maxerr_drift", "rmse_maxerr_drift"):
            rows = [
                [str(n), report.summary[f"{stat}_n{n}"]] for n in report.n_grid
            ]
            write(f"plotdata_consistency_{stat}.csv", ["n", "error"], rows)
    elif report.kind == "mc_clt":
        col = {name: i for i, name in enumerate(report.columns)}
        n_obs = float(report.rows[0][col["n"]])
        sqrt_n = math.sqrt(n_obs)
        for name in PARAM_NAMES:
            estimates = np.array(
                [_clt_theta_entry(row, col, name) for row in report.rows]
            )
            err = sqrt_n * (estimates - _clt_true_entry(report, name))
            quantiles, z = qq_coordinates(err)
            rows = [[_fmt(q), _fmt(v)] for q, v in zip(quantiles, z)]
            write(f"plotdata_qq_{name}.csv", ["normal_quantile", "sample_quantile"], rows)
    elif report.kind == "laplace_check":
        write(
            "plotdata_laplace.csv",
            ["scale", "formula", "empirical", "mc_se", "z"],
            [[r[0], r[3], r[4], r[5], r[6]] for r in report.rows],
        )
    return paths


def _clt_theta_entry(row: list[str], col: dict[str, int], name: str) -> float:
    if name in ("sigma1", "sigma2"):
        return math.sqrt(max(float(row[col[f"{name}_sq"]]), 0.0))
    return float(row[col[name]])


def _clt_true_entry(report: McReport, name: str) -> float:
    return float(report.truth[name])


def run_experiment(exp: ExperimentConfig) -> list[Path]:
    """Execute the experiment, returning the artifact paths that were written."""
    exp.out_dir.mkdir(parents=True, exist_ok=True)
    resolved = exp.out_dir / "resolved_config.txt"
    resolved.write_text(exp.to_text())
    artifacts = [resolved]
    if exp.kind == "simulate":
        artifacts += _run_simulate(exp)
    elif exp.kind == "estimate":
        artifacts += _run_estimate(exp)
    elif exp.kind == "laplace_check":
        report, paths = _run_laplace_check(exp)
        artifacts += paths
        artifacts += emit_plotdata(report, exp.out_dir)
    elif exp.kind == "mc_consistency":
        report, paths = _run_mc_consistency(exp)
        artifacts += paths
        artifacts += emit_plotdata(report, exp.out_dir)
    elif exp.kind == "mc_clt":
        report, paths = _run_mc_clt(exp)
        artifacts += paths
        artifacts += emit_plotdata(report, exp.out_dir)
    else:  # pragma: no cover - guarded by build_experiment
        raise ConfigParseError(f"unknown kind {exp.kind!r}")
    return artifacts


def _clt_truth_table(exp: ExperimentConfig) -> dict[str, float]:
    true = exp.true_values()
    return {
        **{name: true[name] for name in ("a1", "a2", "b11", "b12", "b21", "b22")},
        "sigma1": exp.model.sigma1,
        "sigma2": exp.model.sigma2,
    }
