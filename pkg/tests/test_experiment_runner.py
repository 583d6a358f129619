import math
from pathlib import Path

import pandas as pd
import pytest
from pydantic import ValidationError

import cb
from data.models import ExperimentConfig, MechanismSpec, Variant
from engines.limits import FbarNorming, PowerNorming
from engines.mechanism import ReciprocalSum, Stable
from experiment_runner import EXPERIMENTS, ExperimentContext, linear_limit, run, strictly_decreasing
from tools.tables import TransformTable

EXPECTED = {
    "flow-check", "theorem32", "theorem42", "example1", "example2", "example3", "example4",
    "example5", "regvar", "mc-feller", "mc-stable", "invert-check",
}


def config(name, tmp_path, **kwargs):
    return ExperimentConfig(experiment=name, output_dir=str(tmp_path), **kwargs)


def test_registry_names():
    assert set(EXPERIMENTS) == EXPECTED


def test_strictly_decreasing():
    assert strictly_decreasing([3, 2, 1])
    assert not strictly_decreasing([3, 3, 1])
    assert strictly_decreasing([])


def test_flow_check_writes_table_and_plot(tmp_path):
    result = run(config("flow-check", tmp_path))
    assert result.verdict.passed, result.verdict.summary
    assert result.exit_status == 0
    names = sorted(path.name for path in result.files)
    assert names == ["flow-check.csv", "flow-check.error-vs-t.dat"]
    table = TransformTable.read_csv(tmp_path / "flow-check.csv")
    assert set(table.rows["quantity"]) == {"u_vs_ode", "semigroup"}
    assert len(table.metadata["config_hash"]) == 64


def test_theorem32_default(tmp_path):
    result = run(config("theorem32", tmp_path))
    assert result.verdict.passed, result.verdict.summary
    by_t = result.table.max_error_by_t("lt")
    assert list(by_t.index) == [1e2, 1e4, 1e6]


def test_example1_limit_at_alpha_one_is_exponential(tmp_path):
    mechanism = MechanismSpec(variant=Variant.STABLE, alpha=1.0)
    result = run(config("example1", tmp_path, mechanism=mechanism))
    assert result.verdict.passed, result.verdict.summary
    rows = result.table.select("lt")
    expected = 1.0 / (1.0 + rows["probe"])
    pd.testing.assert_series_equal(rows["limit_value"], expected, check_names=False, rtol=1e-12)


def test_example1_default_stable(tmp_path):
    assert run(config("example1", tmp_path)).verdict.passed


@pytest.mark.parametrize("name", ["example3", "example4"])
def test_fbar_constant_examples(name, tmp_path):
    result = run(config(name, tmp_path))
    assert result.verdict.passed, result.verdict.summary
    assert result.table.select("fbar_constant")["t"].max() == 1e8


def test_invert_check_and_overlay(tmp_path):
    result = run(config("invert-check", tmp_path))
    assert result.verdict.passed, result.verdict.summary
    overlay = tmp_path / "invert-check.cdf-overlay.dat"
    assert overlay in result.files
    data = [line.split() for line in overlay.read_text().splitlines() if not line.startswith("#")]
    assert len(data) == 50
    assert all(abs(float(a) - float(b)) <= 1e-6 for _, a, b in data)


def test_regvar_default(tmp_path):
    result = run(config("regvar", tmp_path))
    assert result.verdict.passed, result.verdict.summary
    index = result.table.select("fbar_index")
    assert index["limit_value"].iloc[0] == -2.0


def test_threshold_override_fails_the_run(tmp_path):
    result = run(config("theorem32", tmp_path, threshold=1e-300))
    assert not result.verdict.passed
    assert result.exit_status == 1


def test_unknown_experiment(tmp_path):
    with pytest.raises(ValueError):
        run(config("theorem99", tmp_path))


def test_theorem32_rejects_index_zero(tmp_path):
    mechanism = MechanismSpec(variant=Variant.LOG_BERNSTEIN, beta=1.0)
    with pytest.raises(ValueError):
        run(config("theorem32", tmp_path, mechanism=mechanism))


def test_linear_limit_constants():
    assert linear_limit(Stable(c=2.0, alpha=0.5), 0.5, FbarNorming()).c == 1.0
    power = linear_limit(Stable(c=2.0, alpha=0.5), 0.5, PowerNorming(2.0))
    assert power.c == pytest.approx(1.0)
    assert linear_limit(Stable(c=3.0, alpha=1.0), 1.0, PowerNorming(1.0)).c == pytest.approx(3.0)
    with pytest.raises(ValueError):
        linear_limit(ReciprocalSum(alpha=0.8, beta=0.2), 0.8, PowerNorming(1.25))
    with pytest.raises(ValueError):
        linear_limit(Stable(c=1.0, alpha=0.5), 0.5, PowerNorming(1.0))


def test_paths_default_only_when_unset():
    ctx = ExperimentContext(config=ExperimentConfig(experiment="mc-feller"), mech=None, flow=None,
                            table=None, out_dir=None)
    assert ctx.paths(1234) == 1234
    ctx.config = ExperimentConfig(experiment="mc-feller", paths=99)
    assert ctx.paths(1234) == 99


def test_cli_list(capsys):
    assert cb.main(["--list"]) == cb.EXIT_PASS
    out = capsys.readouterr().out
    assert all(name in out for name in EXPECTED)


def test_cli_requires_an_experiment(capsys):
    assert cb.main([]) == cb.EXIT_CONFIG
    assert "--list" in capsys.readouterr().err


def test_cli_config_errors(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("experiment = theorem32\nt_grid = 1e4, 1e2\n", encoding="utf-8")
    assert cb.main(["--config", str(path)]) == cb.EXIT_CONFIG
    assert "t_grid" in capsys.readouterr().err
    assert cb.main(["theorem99", "--out", str(tmp_path)]) == cb.EXIT_CONFIG
    assert cb.main(["flow-check", "--seed", "-1", "--out", str(tmp_path)]) == cb.EXIT_CONFIG


def test_cli_run_prints_written_files(tmp_path, capsys):
    assert cb.main(["invert-check", "--out", str(tmp_path), "--seed", "5"]) == cb.EXIT_PASS
    out = capsys.readouterr().out
    assert out.startswith("invert-check: PASS")
    assert "invert-check.csv" in out
    table = TransformTable.read_csv(tmp_path / "invert-check.csv")
    assert table.metadata["seed"] == "5"


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("CB_OUTPUT_DIR", str(tmp_path / "env"))
    result = run(ExperimentConfig(experiment="invert-check", output_dir=str(tmp_path / "ignored")))
    assert all(path.parent == tmp_path / "env" for path in result.files)


@pytest.mark.slow
def test_theorem42_run(tmp_path):
    result = run(config("theorem42", tmp_path))
    assert result.verdict.passed, result.verdict.summary


@pytest.mark.slow
def test_example5_run(tmp_path):
    result = run(config("example5", tmp_path))
    assert result.verdict.passed, result.verdict.summary
    lt = result.table.select("fbar_normed_lt")["finite_t_value"]
    assert lt.iloc[-1] > lt.iloc[0]


@pytest.mark.slow
def test_mc_feller_run(tmp_path):
    result = run(config("mc-feller", tmp_path, dump_samples=True))
    assert result.verdict.passed, result.verdict.summary
    assert (tmp_path / "mc-feller.samples.tsv").exists()
    survival = result.table.select("survival")
    assert survival["limit_value"].iloc[0] == pytest.approx(-math.expm1(-1.0 / 50.0))


def test_cli_takes_the_experiment_name_from_the_file(tmp_path, capsys):
    path = tmp_path / "invert.cfg"
    path.write_text("experiment = invert-check\n", encoding="utf-8")
    assert cb.main(["--config", str(path), "--out", str(tmp_path)]) == cb.EXIT_PASS
    assert capsys.readouterr().out.startswith("invert-check: PASS")


def test_cli_config_without_an_experiment_name(tmp_path, capsys):
    path = tmp_path / "nameless.cfg"
    path.write_text("x = 2\n", encoding="utf-8")
    assert cb.main(["--config", str(path)]) == cb.EXIT_CONFIG
    assert "experiment" in capsys.readouterr().err


def test_seed_is_bounded_by_the_philox_key_width(tmp_path, capsys):
    too_large = str(2 ** 64)
    assert cb.main(["invert-check", "--seed", too_large, "--out", str(tmp_path)]) == cb.EXIT_CONFIG
    assert "seed" in capsys.readouterr().err
    assert cb.main(["invert-check", "--seed", str(2 ** 64 - 1), "--out", str(tmp_path)]) == cb.EXIT_PASS
    with pytest.raises(ValidationError):
        ExperimentConfig(experiment="mc-feller", seed=2 ** 64)


def test_regvar_on_a_pure_jump_levy_mechanism(tmp_path, capsys):
    # Pareto jumps only: ψ grows linearly, so only the Lévy tail indices are checked
    shipped = Path(__file__).parent.parent / "configs" / "regvar-levy.cfg"
    status = cb.main(["regvar", "--config", str(shipped), "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert status == cb.EXIT_PASS, out
    assert "index of U" in out
    table = TransformTable.read_csv(tmp_path / "regvar.csv")
    consistency = table.select("tail_consistency")
    assert consistency["finite_t_value"].iloc[0] == pytest.approx(2.0, abs=0.05)
    assert table.select("fbar_index").empty


@pytest.mark.slow
def test_mc_stable_reports_the_step_halving_bias(tmp_path):
    result = run(config("mc-stable", tmp_path))
    assert result.verdict.passed, result.verdict.summary
    assert "bias bound" in result.verdict.summary
    halving = result.table.select("survival_step_halving")
    assert halving["t"].iloc[0] == 20.0
    assert 0.0 < halving["limit_value"].iloc[0] < 0.05
