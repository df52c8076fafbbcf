# cli_test.py
import numpy as np
import pandas as pd
import pytest

from cli import CSV_COLUMNS, EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, emit_csv, main
from errors import OutputError
from harness import aggregate_curves

CONFIG = """
experiments:
  - id: tiny
    T: 40
    n_runs: 2
    base_seed: 3
    instance: {kind: mixed, d: 6, beta: 0.1, s0: 2}
    policies:
      - {name: netc, lambda: 0.02, T1: 12}
      - {name: nse_fs, threshold_constant: 1.0}
"""


@pytest.fixture
def config_file(tmp_path):
    p = tmp_path / "tiny.yaml"
    p.write_text(CONFIG, encoding="utf-8")
    return p


def test_emit_empty_is_header_only(tmp_path):
    out = emit_csv([], tmp_path / "empty.csv")
    assert out.read_text(encoding="utf-8") == ",".join(CSV_COLUMNS) + "\n"


def test_emit_round_trip_and_series(tmp_path):
    rng = np.random.default_rng(0)
    curves = np.cumsum(rng.random((3, 7)) / 3.0, axis=1)
    agg = aggregate_curves("exp", "nse", curves, np.array([3, 3, 3]))
    path = emit_csv([agg], tmp_path / "out.csv", replicates=True)
    df = pd.read_csv(path, dtype={"series": str})
    assert list(df.columns) == CSV_COLUMNS
    mean = df[df.series == "mean"]
    std = df[df.series == "std"]
    assert len(mean) == len(std) == 7
    assert mean.t.tolist() == list(range(1, 8))
    np.testing.assert_allclose(mean.cum_regret.to_numpy(), agg.mean, rtol=0, atol=1e-12)
    np.testing.assert_allclose(df[df.series == "2"].per_individual_regret.to_numpy(), curves[2] / 3, atol=1e-12)


def test_emit_stride_keeps_last_round(tmp_path):
    agg = aggregate_curves("exp", "p", np.arange(10, dtype=float)[None, :], np.array([2]))
    df = pd.read_csv(emit_csv([agg], tmp_path / "s.csv", stride=4))
    assert df[df.series == "mean"].t.tolist() == [4, 8, 10]


def test_emit_rejects_non_finite_and_bad_path(tmp_path):
    agg = aggregate_curves("exp", "p", np.array([[0.0, np.inf]]), np.array([1]))
    with pytest.raises(OutputError):
        emit_csv([agg], tmp_path / "x.csv")
    blocker = tmp_path / "file"
    blocker.write_text("", encoding="utf-8")
    ok = aggregate_curves("exp", "p", np.zeros((1, 2)), np.array([1]))
    with pytest.raises(OutputError):
        emit_csv([ok], blocker / "nested" / "x.csv")


def test_presets_command(capsys):
    assert main(["presets"]) == EXIT_OK
    assert capsys.readouterr().out.split() == ["fig1", "fig2", "fig3", "fig4", "village"]


def test_stats_command(adjacency_dir, capsys):
    assert main(["stats", str(adjacency_dir)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "[OK] a: d=3" in out
    assert "4.0" in out  # media de d


def test_run_is_byte_deterministic(config_file, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run", str(config_file), "--output", str(a)]) == EXIT_OK
    assert main(["run", str(config_file), "--output", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    df = pd.read_csv(a)
    assert set(df.policy) == {"netc", "nse_fs"}
    assert len(df) == 2 * 2 * 40


def test_run_overrides_and_rates(config_file, tmp_path):
    out = tmp_path / "o.csv"
    assert main(["run", str(config_file), "--output", str(out), "--horizon", "20", "--n-runs", "1", "--rates"]) == EXIT_OK
    assert pd.read_csv(out).t.max() == 20
    rates = pd.read_csv(tmp_path / "o.rates.csv")
    assert len(rates) == 20 and rates.experiment.iloc[0] == "tiny"


def test_validation_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("experiments:\n  - id: x\n", encoding="utf-8")
    assert main(["run", str(bad)]) == EXIT_VALIDATION
    assert "[ERROR]" in capsys.readouterr().out
    assert main(["run", str(tmp_path / "nope.yaml")]) == EXIT_VALIDATION


def test_sweep_exit_code_on_failed_cell(tmp_path):
    cfg = tmp_path / "sw.yaml"
    cfg.write_text(
        "defaults: {T: 10, n_runs: 1, policies: [{name: oracle}]}\n"
        "experiments:\n"
        "  - {id: ok, instance: {kind: circulant, d: 4, s: 1, delta: 0.5}}\n"
        f"  - {{id: broken, instance: {{kind: adjacency, path: {tmp_path / 'missing.csv'}}}}}\n",
        encoding="utf-8",
    )
    out = tmp_path / "sw.csv"
    assert main(["sweep", str(cfg), "--output", str(out)]) == EXIT_RUNTIME
    assert set(pd.read_csv(out).experiment) == {"ok"}


def test_run_strides_each_experiment_by_its_own_setting(tmp_path):
    cfg = tmp_path / "strides.yaml"
    cfg.write_text(
        "defaults: {T: 12, n_runs: 1, policies: [{name: oracle}]}\n"
        "experiments:\n"
        "  - {id: fine, stride: 1, instance: {kind: circulant, d: 4, s: 1, delta: 0.5}}\n"
        "  - {id: coarse, stride: 5, instance: {kind: circulant, d: 4, s: 1, delta: 0.5}}\n",
        encoding="utf-8",
    )
    out = tmp_path / "strides.csv"
    assert main(["run", str(cfg), "--output", str(out)]) == EXIT_OK
    df = pd.read_csv(out, dtype={"series": str})
    mean = df[df.series == "mean"]
    assert mean[mean.experiment == "fine"].t.tolist() == list(range(1, 13))
    assert mean[mean.experiment == "coarse"].t.tolist() == [5, 10, 12]


def test_support_larger_than_dimension_is_a_validation_error(tmp_path, capsys):
    cfg = tmp_path / "big_s0.yaml"
    cfg.write_text(CONFIG.replace("s0: 2", "s0: 9"), encoding="utf-8")
    assert main(["run", str(cfg), "--output", str(tmp_path / "x.csv")]) == EXIT_VALIDATION
    assert "s0" in capsys.readouterr().out
