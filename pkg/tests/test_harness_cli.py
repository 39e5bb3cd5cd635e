"""Experiment harness and command-line interface.

Focus areas: config parsing and hashing, bit-reproducibility across
thread counts, the bitwise equivalence of the power-1 generalised run
with the semicovariance run, report serialization, and CLI exit codes.
"""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from bsscov import (
    ConstantVol,
    ExperimentConfig,
    KernelSpec,
    SinusoidalVol,
    SmoothFractionalVol,
    TestFunction,
    Indicator,
    run_experiment,
    run_independence_diagnostic,
    run_univariate_clt,
    run_wlln,
)
from bsscov.cli import main as cli_main
from bsscov.harness import default_thread_count

KERNEL = KernelSpec("gamma", -0.25, 1.0)
SEED = 4242

TINY_WLLN = """
experiment = "wlln"
n_grid = [64, 128]
replicates = 64
seed = 4242
label = "tiny"

[[kernel]]
family = "gamma"
alpha = -0.25
decay = 1.0

[[volatility]]
model = "sinusoidal"
base = 1.0
amplitude = 0.5
angular_frequency = 6.283185307179586

[estimator]
power = 1.0
indicator = "nonnegative"

[discretization]
refine = 4
"""


def tiny_config(**overrides):
    base = dict(
        experiment="wlln",
        kernels=[KERNEL],
        volatilities=[ConstantVol(1.0)],
        n_grid=[64, 128],
        replicates=64,
        seed=SEED,
        threads=1,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


# --- configuration ----------------------------------------------------------

def test_config_validation_errors():
    with pytest.raises(ValueError):
        tiny_config(experiment="nonsense")
    with pytest.raises(ValueError):
        tiny_config(kernels=[])
    with pytest.raises(ValueError):
        tiny_config(kernels=[KERNEL] * 3)
    with pytest.raises(ValueError):
        tiny_config(replicates=1)
    with pytest.raises(ValueError):
        tiny_config(rho=1.5)
    with pytest.raises(ValueError):
        tiny_config(path_mode="exact")
    with pytest.raises(ValueError):
        tiny_config(n_grid=[])
    with pytest.raises(ValueError):
        tiny_config(kernels=[KERNEL],
                    volatilities=[ConstantVol(1.0)] * 2)


def test_single_volatility_broadcasts_to_two_kernels():
    config = tiny_config(kernels=[KERNEL, KernelSpec("gamma", -0.25, 2.0)],
                         volatilities=[ConstantVol(1.0)])
    assert len(config.volatilities) == 2


def test_from_toml_round_trip(tmp_path):
    path = tmp_path / "config.toml"
    path.write_text(TINY_WLLN)
    config = ExperimentConfig.from_toml(path)
    assert config.experiment == "wlln"
    assert config.n_grid == [64, 128]
    assert config.replicates == 64
    assert config.seed == SEED
    assert config.label == "tiny"
    assert isinstance(config.volatilities[0], SinusoidalVol)
    assert config.volatilities[0].amplitude == 0.5
    assert config.refine == 4
    assert config.func1.power == 1.0
    assert config.func1.indicator is Indicator.NONNEGATIVE
    again = ExperimentConfig.from_toml(path)
    assert config.config_hash() == again.config_hash()


def test_config_hash_ignores_threads_but_not_seed():
    a = tiny_config(threads=1)
    b = tiny_config(threads=3)
    assert a.config_hash() == b.config_hash()
    c = tiny_config(seed=SEED + 1)
    assert a.config_hash() != c.config_hash()
    d = tiny_config(replicates=65)
    assert a.config_hash() != d.config_hash()


# --- weak law runner --------------------------------------------------------

def test_wlln_report_structure():
    report = run_wlln(tiny_config())
    assert report.experiment == "wlln"
    names = [(r.name, r.n) for r in report.rows]
    assert ("wlln_mean", 64) in names
    assert ("wlln_mean", 128) in names
    assert ("wlln_bias_decreasing", None) in names
    top = report.row("wlln_mean", 128)
    low = report.row("wlln_mean", 64)
    assert top.gated and not low.gated
    assert top.oracle == pytest.approx(0.5, rel=1e-12)  # half the sigma^2 mass
    assert ("V1", 64) in report.samples
    assert report.samples[("V1", 64)].shape == (64,)
    assert report.passed
    with pytest.raises(KeyError):
        report.row("wlln_mean", 999)


def test_wlln_flags_degenerate_replicate_count():
    report = run_wlln(tiny_config(replicates=2, n_grid=[64]))
    assert report.row("wlln_mean", 64).extra["wide_interval"] is True


def test_wlln_stochastic_volatility_centers_per_replicate():
    config = tiny_config(
        volatilities=[SmoothFractionalVol(1.0, 0.3, 0.75)],
        n_grid=[64], replicates=48)
    report = run_wlln(config)
    assert report.row("wlln_centered_mean", 64).oracle == 0.0
    assert report.passed


def test_riemann_mode_requires_deterministic_volatility():
    config = tiny_config(
        volatilities=[SmoothFractionalVol(1.0, 0.3, 0.75)],
        path_mode="riemann", n_grid=[64], replicates=8)
    with pytest.raises(ValueError):
        run_wlln(config)


def test_thread_count_does_not_change_results():
    reports = [
        run_wlln(tiny_config(threads=t, n_grid=[128], replicates=96))
        for t in (1, 3)
    ]
    a, b = reports
    np.testing.assert_array_equal(a.samples[("V1", 128)],
                                  b.samples[("V1", 128)])
    assert a.row("wlln_mean", 128).estimate == \
        b.row("wlln_mean", 128).estimate
    assert a.config_hash == b.config_hash


def test_default_thread_count_env(monkeypatch):
    monkeypatch.setenv("BSSCOV_THREADS", "5")
    assert default_thread_count() == 5
    monkeypatch.delenv("BSSCOV_THREADS")
    assert default_thread_count() == 1


# --- distribution runners ---------------------------------------------------

def test_univariate_clt_validation():
    with pytest.raises(ValueError):
        run_univariate_clt(tiny_config(
            experiment="univariate_clt",
            kernels=[KernelSpec("gamma", 0.25, 1.0)]))
    with pytest.raises(ValueError):
        run_univariate_clt(tiny_config(
            experiment="univariate_clt",
            kernels=[KERNEL, KERNEL],
            volatilities=[ConstantVol(1.0)] * 2))
    with pytest.raises(ValueError):
        run_univariate_clt(tiny_config(experiment="univariate_clt",
                                       path_mode="riemann"))


# the deliberately small lag count trades beta accuracy for runtime; the
# tail warning it triggers is the subject of its own test elsewhere
@pytest.mark.filterwarnings("ignore::bsscov.SeriesTailWarning")
def test_univariate_clt_row_layout():
    config = tiny_config(experiment="univariate_clt", n_grid=[256],
                         replicates=128, beta_lag_count=10_000)
    report = run_univariate_clt(config)
    names = {r.name for r in report.rows}
    assert {"clt_mean_t0.25", "clt_mean_t0.5", "clt_mean_t1",
            "clt_variance_t1", "clt_ks_normal_t1",
            "disjoint_increment_corr"} <= names
    gated = {r.name for r in report.rows if r.gated}
    assert "clt_mean_t0.25" not in gated
    assert "clt_mean_t1" in gated
    assert report.samples[("statistic_t1", 256)].shape == (128,)


@pytest.mark.filterwarnings("ignore::bsscov.SeriesTailWarning")
def test_generalised_power_one_matches_bivariate_bitwise():
    shared = dict(
        kernels=[KERNEL, KernelSpec("gamma", -0.25, 2.0)],
        volatilities=[ConstantVol(1.0)],
        rho=0.5, n_grid=[128], replicates=24, seed=SEED, threads=1,
        bivariate_lag_count=64, bivariate_n_ref=256,
    )
    biv = run_experiment(ExperimentConfig(experiment="bivariate_clt",
                                          **shared))
    gen = run_experiment(ExperimentConfig(experiment="generalised_clt",
                                          **shared))
    np.testing.assert_array_equal(gen.samples[("statistic", 128)],
                                  biv.samples[("statistic", 128)])
    assert gen.row("clt_mean", 128).estimate == \
        biv.row("clt_mean", 128).estimate


@pytest.mark.filterwarnings("ignore::bsscov.SeriesTailWarning")
def test_duplicate_series_quadratic_centering():
    config = ExperimentConfig(
        experiment="generalised_clt",
        kernels=[KERNEL],
        volatilities=[ConstantVol(1.0)],
        duplicate_series=True,
        func1=TestFunction(2.0, Indicator.ALL),
        n_grid=[128], replicates=32, seed=SEED, threads=1,
        bivariate_lag_count=64, bivariate_n_ref=256,
    )
    report = run_experiment(config)
    row = report.row("clt_mean", 128)
    assert row.extra["mu"] == pytest.approx(3.0, abs=1e-6)
    assert row.extra["rho_eff"] == 1.0


def test_independence_diagnostic_rows():
    config = tiny_config(experiment="independence_diagnostic",
                         n_grid=[64, 128], replicates=600)
    report = run_independence_diagnostic(config)
    names = {(r.name, r.n) for r in report.rows}
    assert ("core_statistic_cov", 64) in names
    assert ("shuffled_control_cov", 128) in names
    assert ("covariance_decreasing", None) in names
    oracles = [report.row("core_statistic_cov", n).oracle for n in (64, 128)]
    assert oracles[0] > oracles[1] > 0
    assert report.passed


def test_assumption_audit_accepts_and_rejects():
    good = tiny_config(experiment="assumption_audit")
    good_report = run_experiment(good)
    assert good_report.passed
    assert good_report.row("clt_mode_admissible", None).estimate == 1.0
    bad = tiny_config(experiment="assumption_audit",
                      kernels=[KernelSpec("gamma", 0.25, 1.0)])
    bad_report = run_experiment(bad)
    assert not bad_report.passed
    assert bad_report.row("clt_mode_admissible", None).estimate == 0.0
    assert not bad_report.row("energy_tail_slope", None).passed


# --- report serialization ---------------------------------------------------

def test_report_json_and_csv(tmp_path):
    report = run_wlln(tiny_config(n_grid=[64], replicates=16))
    json_path = tmp_path / "report.json"
    report.write_json(json_path)
    doc = json.loads(json_path.read_text())
    assert doc["schema"] == "bsscov-report/1"
    assert doc["experiment"] == "wlln"
    assert doc["config_hash"] == report.config_hash
    assert doc["passed"] is True
    row = next(r for r in doc["rows"] if r["name"] == "wlln_mean")
    assert set(row) >= {"name", "n", "estimate", "oracle", "se", "z",
                        "passed", "gated"}
    csv_path = tmp_path / "samples.csv"
    report.write_samples_csv(csv_path)
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "name,replicate,n,statistic,target"
    assert len(lines) == 1 + 16


# --- command line -----------------------------------------------------------

@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def tiny_toml(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY_WLLN)
    return str(path)


def test_cli_verify_wlln(runner, tiny_toml, tmp_path):
    out = tmp_path / "out"
    result = runner.invoke(cli_main, ["verify-wlln", "--config", tiny_toml,
                                      "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "wlln: PASSED" in result.output
    assert (out / "wlln.json").exists()
    assert (out / "wlln.csv").exists()


def test_cli_audit_pass_and_fail(runner, tiny_toml, tmp_path):
    result = runner.invoke(cli_main, [
        "audit-assumptions", "--config", tiny_toml,
        "--out", str(tmp_path / "good")])
    assert result.exit_code == 0, result.output
    assert "assumption_audit: PASSED" in result.output

    bad = tmp_path / "bad.toml"
    bad.write_text(TINY_WLLN.replace("alpha = -0.25", "alpha = 0.25"))
    result = runner.invoke(cli_main, [
        "audit-assumptions", "--config", str(bad),
        "--out", str(tmp_path / "bad")])
    assert result.exit_code == 1
    assert "FAILED" in result.output


def test_cli_seed_override_changes_hash(runner, tiny_toml, tmp_path):
    outputs = []
    for seed, sub in ((None, "a"), (999, "b")):
        args = ["verify-wlln", "--config", tiny_toml,
                "--out", str(tmp_path / sub)]
        if seed is not None:
            args += ["--seed", str(seed)]
        result = runner.invoke(cli_main, args)
        assert result.exit_code == 0, result.output
        doc = json.loads((tmp_path / sub / "wlln.json").read_text())
        outputs.append(doc)
    assert outputs[0]["config_hash"] != outputs[1]["config_hash"]
    assert outputs[1]["seed"] == 999


def test_cli_simulate_core_and_bss(runner, tiny_toml, tmp_path):
    out = tmp_path / "sim"
    result = runner.invoke(cli_main, ["simulate", "--config", tiny_toml,
                                      "--mode", "core", "--out", str(out)])
    assert result.exit_code == 0, result.output
    core_files = list(out.glob("*.csv"))
    assert core_files
    result = runner.invoke(cli_main, ["simulate", "--config", tiny_toml,
                                      "--mode", "bss", "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert len(list(out.glob("*.csv"))) >= 2


def test_cli_estimate_univariate(runner, tiny_toml, tmp_path):
    out = tmp_path / "est"
    result = runner.invoke(cli_main, ["estimate", "--config", tiny_toml,
                                      "--mode", "core", "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert (out / "semivariance_upside.csv").exists()
    assert (out / "semivariance_downside.csv").exists()


def test_cli_estimate_bivariate(runner, tmp_path):
    toml = tmp_path / "pair.toml"
    toml.write_text("""
experiment = "bivariate_clt"
n_grid = [64]
replicates = 8
seed = 4242

[[kernel]]
family = "gamma"
alpha = -0.25
decay = 1.0

[[kernel]]
family = "gamma"
alpha = -0.25
decay = 2.0

[[volatility]]
model = "constant"
level = 1.0

[bivariate]
rho = 0.5
""")
    out = tmp_path / "est2"
    result = runner.invoke(cli_main, ["estimate", "--config", str(toml),
                                      "--mode", "core", "--out", str(out)])
    assert result.exit_code == 0, result.output
    for name in ("semicovariance_pp.csv", "semicovariance_nn.csv",
                 "semicovariance_pn.csv", "semicovariance_np.csv",
                 "generalised_covariation.csv"):
        assert (out / name).exists(), name


def test_cli_compute_beta(runner, tiny_toml, tmp_path):
    out = tmp_path / "beta"
    result = runner.invoke(cli_main, ["compute-beta", "--config", tiny_toml,
                                      "--out", str(out)])
    assert result.exit_code == 0, result.output
    doc = json.loads((out / "beta.json").read_text())
    assert doc["kind"] == "univariate"
    assert doc["alpha"] == -0.25
    assert doc["beta"] == pytest.approx(0.6976757852968387, abs=1e-6)


def test_cli_missing_config_fails(runner):
    result = runner.invoke(cli_main, ["verify-wlln", "--config",
                                      "/nonexistent.toml"])
    assert result.exit_code != 0
