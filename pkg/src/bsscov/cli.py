"""Command-line interface: simulation, estimation, limit-constant
computation, and the Monte Carlo verification experiments.

Every experiment command reads a TOML config, applies ``--seed``,
``--threads``, and ``--out`` overrides, writes a versioned JSON summary
(with the config hash) plus a per-replicate CSV into the output directory,
prints one line per report row, and exits nonzero if any gated assertion
row failed.
"""

from __future__ import annotations

import json
import os
import sys

import click

from . import __version__
from .asymptotics import beta_bivariate, beta_univariate, beta_report_json
from .bss import BssAssembler, write_bss_csv
from .estimators import (
    generalised_covariation,
    realised_semivariance,
    realised_semivariance_downside,
    semicovariance_components,
    write_series_csv,
)
from .gaussian_sim import IncrementSimulator, write_core_path_csv
from .harness import (
    ExperimentConfig,
    MCReport,
    run_experiment,
)
from .hermite import TestFunction, expansion_coefficients
from .kernels import BivariateKernelSpec, CovarianceModel

_CONFIG_OPT = click.option(
    "--config", "config_path", required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="TOML experiment configuration.")
_SEED_OPT = click.option("--seed", type=int, default=None,
                         help="Override the config seed.")
_THREADS_OPT = click.option(
    "--threads", type=int, default=None,
    help="Worker threads (default: BSSCOV_THREADS or 1).")
_OUT_OPT = click.option(
    "--out", "out_dir", type=click.Path(file_okay=False), default=".",
    show_default=True, help="Output directory for reports.")


@click.group()
@click.version_option(version=__version__, prog_name="bsscov")
def main() -> None:
    """Simulation and limit-theorem verification for sign-gated power
    covariations of volatility-modulated moving-average processes."""


def _load_config(config_path: str, seed: int | None, threads: int | None,
                 experiment: str | None = None) -> ExperimentConfig:
    config = ExperimentConfig.from_toml(config_path)
    if experiment is not None and config.experiment != experiment:
        config.experiment = experiment
    if seed is not None:
        config.seed = int(seed)
    if threads is not None and threads > 0:
        config.threads = int(threads)
    return config


def _emit(report: MCReport, out_dir: str, stem: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, f"{stem}.json")
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    report.write_json(json_path)
    report.write_samples_csv(csv_path)
    for row in report.rows:
        status = "PASS" if row.passed else "FAIL"
        gate = "gated" if row.gated else "info"
        z = f" z={row.z:+.3f}" if row.z is not None else ""
        oracle = f" oracle={row.oracle:.6g}" if row.oracle is not None else ""
        n = f" n={row.n}" if row.n is not None else ""
        click.echo(f"[{status}|{gate}] {row.name}{n} "
                   f"estimate={row.estimate:.6g}{oracle}{z}")
    click.echo(f"report: {json_path}")
    click.echo(f"samples: {csv_path}")
    click.echo(f"config hash: {report.config_hash}")
    verdict = "PASSED" if report.passed else "FAILED"
    click.echo(f"{report.experiment}: {verdict} "
               f"({report.wall_clock_s:.2f}s)")
    if not report.passed:
        sys.exit(1)


def _run_and_emit(config_path: str, seed: int | None, threads: int | None,
                  out_dir: str, experiment: str | None = None) -> None:
    config = _load_config(config_path, seed, threads, experiment)
    report = run_experiment(config)
    _emit(report, out_dir, config.experiment)


@main.command()
@_CONFIG_OPT
@_SEED_OPT
@_OUT_OPT
@click.option("--mode", type=click.Choice(["core", "bss"]), default="bss",
              show_default=True, help="Path family to simulate.")
@click.option("--replicate", type=int, default=0, show_default=True,
              help="Replicate index within the seed's stream family.")
def simulate(config_path: str, seed: int | None, out_dir: str, mode: str,
             replicate: int) -> None:
    """Simulate one path at the largest configured n and write it as CSV."""
    config = _load_config(config_path, seed, None)
    n = max(config.n_grid)
    os.makedirs(out_dir, exist_ok=True)
    if mode == "core":
        model = (CovarianceModel(config.kernels[0])
                 if len(config.kernels) == 1 else
                 BivariateKernelSpec(config.kernels[0], config.kernels[1],
                                     rho=config.rho))
        sim = IncrementSimulator(model, n, config.horizon)
        path = sim.sample(config.seed, replicate)
        out = os.path.join(out_dir, "core_path.csv")
        write_core_path_csv(path, out)
    else:
        asm = BssAssembler(
            config.kernels if len(config.kernels) > 1 else config.kernels[0],
            (list(config.volatilities) if len(config.kernels) > 1
             else config.volatilities[0]),
            n, config.horizon, driver_correlation=config.rho,
            refine=config.refine,
            truncation_horizon=config.truncation_horizon)
        path = asm.sample(config.seed, replicate)
        out = os.path.join(out_dir, "bss_path.csv")
        write_bss_csv(path, out)
    click.echo(f"wrote {out} (n={n}, dimension={path.dimension}, "
               f"seed={config.seed}, replicate={replicate})")


@main.command()
@_CONFIG_OPT
@_SEED_OPT
@_OUT_OPT
@click.option("--mode", type=click.Choice(["core", "bss"]), default="bss",
              show_default=True, help="Path family to estimate on.")
@click.option("--replicate", type=int, default=0, show_default=True)
@click.option("--unscaled", is_flag=True,
              help="Skip the per-increment rescaling by tau_n.")
def estimate(config_path: str, seed: int | None, out_dir: str, mode: str,
             replicate: int, unscaled: bool) -> None:
    """Simulate one path and write estimator series as CSV files."""
    config = _load_config(config_path, seed, None)
    n = max(config.n_grid)
    scaled = not unscaled
    os.makedirs(out_dir, exist_ok=True)
    univariate = len(config.kernels) == 1
    if mode == "core":
        model = (CovarianceModel(config.kernels[0]) if univariate else
                 BivariateKernelSpec(config.kernels[0], config.kernels[1],
                                     rho=config.rho))
        sim = IncrementSimulator(model, n, config.horizon)
        path = sim.sample(config.seed, replicate)
        increments = path.tau[:, None] * path.increments
        taus = path.tau
    else:
        asm = BssAssembler(
            config.kernels if len(config.kernels) > 1 else config.kernels[0],
            (list(config.volatilities) if len(config.kernels) > 1
             else config.volatilities[0]),
            n, config.horizon, driver_correlation=config.rho,
            refine=config.refine,
            truncation_horizon=config.truncation_horizon)
        path = asm.sample(config.seed, replicate)
        increments = path.increments()
        taus = path.tau
    written = []
    if univariate:
        x = increments[0]
        series = {
            "semivariance_upside": realised_semivariance(
                x, taus[0], n, scaled=scaled),
            "semivariance_downside": realised_semivariance_downside(
                x, taus[0], n, scaled=scaled),
        }
        for name, s in series.items():
            out = os.path.join(out_dir, f"{name}.csv")
            write_series_csv(s, out)
            written.append(out)
    else:
        comps = semicovariance_components(
            increments[0], increments[1], taus[0], taus[1], n,
            scaled=scaled)
        for name, s in comps.items():
            out = os.path.join(out_dir, f"semicovariance_{name}.csv")
            write_series_csv(s, out)
            written.append(out)
        gen = generalised_covariation(
            increments[0], increments[1], taus[0], taus[1], n,
            config.func1, config.func2, scaled=scaled)
        out = os.path.join(out_dir, "generalised_covariation.csv")
        write_series_csv(gen, out)
        written.append(out)
    for out in written:
        click.echo(f"wrote {out}")


@main.command("compute-beta")
@_CONFIG_OPT
@_OUT_OPT
def compute_beta(config_path: str, out_dir: str) -> None:
    """Evaluate the long-run variance constant for the configured model."""
    config = _load_config(config_path, None, None)
    os.makedirs(out_dir, exist_ok=True)
    if len(config.kernels) == 1 and not config.duplicate_series:
        alpha = config.kernels[0].alpha
        expansion = expansion_coefficients(
            TestFunction.squared_positive_part(), config.beta_truncation)
        result = beta_univariate(expansion, alpha,
                                 lag_count=config.beta_lag_count)
        blob = beta_report_json(result, alpha=alpha)
    else:
        if config.duplicate_series:
            spec = BivariateKernelSpec(config.kernels[0], config.kernels[0],
                                       rho=1.0)
        else:
            spec = BivariateKernelSpec(config.kernels[0], config.kernels[1],
                                       rho=config.rho)
        result = beta_bivariate(
            spec, config.func1, config.func2,
            lag_count=config.bivariate_lag_count,
            n_ref=config.bivariate_n_ref)
        blob = beta_report_json(result, spec=spec)
    out = os.path.join(out_dir, "beta.json")
    with open(out, "w") as fh:
        fh.write(blob + "\n")
    click.echo(blob)
    click.echo(f"wrote {out}")


@main.command("verify-clt")
@_CONFIG_OPT
@_SEED_OPT
@_THREADS_OPT
@_OUT_OPT
def verify_clt(config_path: str, seed: int | None, threads: int | None,
               out_dir: str) -> None:
    """Run a CLT experiment (univariate, bivariate, or generalised,
    per the config's experiment field)."""
    config = _load_config(config_path, seed, threads)
    if config.experiment not in ("univariate_clt", "bivariate_clt",
                                 "generalised_clt"):
        fallback = ("univariate_clt" if len(config.kernels) == 1
                    and not config.duplicate_series else "bivariate_clt")
        config.experiment = fallback
    report = run_experiment(config)
    _emit(report, out_dir, config.experiment)


@main.command("verify-wlln")
@_CONFIG_OPT
@_SEED_OPT
@_THREADS_OPT
@_OUT_OPT
def verify_wlln(config_path: str, seed: int | None, threads: int | None,
                out_dir: str) -> None:
    """Run the weak-law experiment: mean of V_1^n against its target."""
    _run_and_emit(config_path, seed, threads, out_dir, "wlln")


@main.command("diagnose-independence")
@_CONFIG_OPT
@_SEED_OPT
@_THREADS_OPT
@_OUT_OPT
def diagnose_independence(config_path: str, seed: int | None,
                          threads: int | None, out_dir: str) -> None:
    """Check the covariance between the core increment over (0,1] and the
    t=1 statistic against its closed form, per n."""
    _run_and_emit(config_path, seed, threads, out_dir,
                  "independence_diagnostic")


@main.command("audit-assumptions")
@_CONFIG_OPT
@_SEED_OPT
@_THREADS_OPT
@_OUT_OPT
def audit_assumptions(config_path: str, seed: int | None,
                      threads: int | None, out_dir: str) -> None:
    """Fit the scaling exponents behind the limit theorems and check the
    admissibility ranges of the configured model."""
    _run_and_emit(config_path, seed, threads, out_dir, "assumption_audit")


if __name__ == "__main__":
    main()
