import csv
import json
import os

import pytest

from clmmlab.cli import main
from clmmlab.marketdata import bundled_candles_path, save_candles_csv, synth_gbm
from clmmlab.nets import load_checkpoint
from clmmlab.report import read_report_csv


@pytest.fixture(scope="module")
def candles_csv(tmp_path_factory):
    path = str(tmp_path_factory.mktemp("data") / "candles.csv")
    save_candles_csv(synth_gbm(2000.0, 0.0, 0.01, 420, seed=33), path)
    return path


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestErrorContract:
    def test_unknown_flag_is_usage_error(self, capsys):
        code, _, err = run_cli(["backtest", "--bogus"], capsys)
        assert code == 2
        assert err.strip().startswith("error: usage:")
        assert len(err.strip().splitlines()) == 1

    def test_missing_command_is_usage_error(self, capsys):
        code, _, err = run_cli([], capsys)
        assert code == 2
        assert err.strip().startswith("error: usage:")

    def test_bad_method_is_config_error(self, candles_csv, capsys, tmp_path):
        code, _, err = run_cli(
            ["backtest", "--method", "martingale", "--candles", candles_csv,
             "--out-dir", str(tmp_path)], capsys)
        assert code == 1
        assert err.strip().startswith("error: config:")
        assert len(err.strip().splitlines()) == 1

    def test_missing_required_field(self, candles_csv, capsys):
        code, _, err = run_cli(
            ["backtest", "--method", "tau-reset", "--tau", "4",
             "--candles", candles_csv], capsys)
        assert code == 1
        assert "out_dir" in err

    def test_config_file_not_found(self, capsys, tmp_path):
        code, _, err = run_cli(
            ["backtest", "--config", str(tmp_path / "nope.json")], capsys)
        assert code == 1
        assert err.strip().startswith("error: config:")

    def test_config_file_bad_json(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code, _, err = run_cli(["backtest", "--config", str(bad)], capsys)
        assert code == 1
        assert "not valid JSON" in err

    def test_unknown_config_field(self, candles_csv, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"method": "tau-reset", "tau": 4,
                                   "gas_limit": 30}))
        code, _, err = run_cli(
            ["backtest", "--config", str(cfg), "--candles", candles_csv,
             "--out-dir", str(tmp_path / "out")], capsys)
        assert code == 1
        assert "gas_limit" in err

    def test_bad_criteria_list(self, capsys):
        code, _, err = run_cli(["verify", "--criteria", "1,abc"], capsys)
        assert code == 2
        assert err.strip().startswith("error: usage:")


class TestBacktestCommand:
    def test_writes_run_dir(self, candles_csv, capsys, tmp_path):
        out = tmp_path / "run"
        code, stdout, _ = run_cli(
            ["backtest", "--method", "tau-reset", "--tau", "6",
             "--candles", candles_csv, "--offset", "10", "--horizon", "200",
             "--out-dir", str(out)], capsys)
        assert code == 0
        assert "relative_pnl=" in stdout
        for name in ("run.json", "report.csv", "trace.csv", "actions.csv"):
            assert (out / name).exists()

    def test_flags_override_config_file(self, candles_csv, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"method": "tau-reset", "tau": 4,
                                   "seed": 5, "offset": 10, "horizon": 100}))
        out = tmp_path / "run"
        code, _, _ = run_cli(
            ["backtest", "--config", str(cfg), "--seed", "9",
             "--candles", candles_csv, "--out-dir", str(out)], capsys)
        assert code == 0
        doc = json.loads((out / "run.json").read_text())
        assert doc["config"]["seed"] == 9
        assert doc["config"]["tau"] == 4

    def test_oracle_tuned_label_lands_in_report(self, candles_csv, capsys,
                                                tmp_path):
        out = tmp_path / "run"
        code, _, _ = run_cli(
            ["backtest", "--method", "tau-reset", "--pool", "usdc",
             "--period", "1", "--candles", candles_csv, "--offset", "10",
             "--horizon", "100", "--out-dir", str(out)], capsys)
        assert code == 0
        rows = read_report_csv(str(out / "report.csv"))
        assert rows[0]["label"] == "oracle-tuned"


class TestFeaturesCommand:
    def test_writes_matrix_and_scaler(self, candles_csv, capsys, tmp_path):
        out = tmp_path / "features.csv"
        scaler = tmp_path / "scaler.json"
        code, stdout, _ = run_cli(
            ["features", "--candles", candles_csv, "--out", str(out),
             "--scaler-out", str(scaler)], capsys)
        assert code == 0
        with open(out) as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 421  # header + one row per candle
        doc = json.loads(scaler.read_text())
        assert set(doc) == {"columns", "mean", "std"}


class TestTrainCommand:
    def test_short_train_writes_artifacts(self, candles_csv, capsys, tmp_path):
        out = tmp_path / "train"
        code, stdout, _ = run_cli(
            ["train", "--candles", candles_csv, "--seed", "1",
             "--episode-length", "40", "--budget", "400",
             "--train-hours", "150", "--val-hours", "50",
             "--out-dir", str(out)], capsys)
        assert code == 0
        assert "wrote" in stdout
        params, _, meta = load_checkpoint(str(out / "checkpoint.json"))
        assert params.n_outputs == 11
        assert meta["seed"] == 1
        assert set(meta["scaler"]) == {"columns", "mean", "std"}
        assert (out / "training_log.csv").exists()
        assert (out / "run.json").exists()

    def test_rejects_oversized_split(self, candles_csv, capsys, tmp_path):
        code, _, err = run_cli(
            ["train", "--candles", candles_csv, "--train-hours", "5000",
             "--val-hours", "50", "--out-dir", str(tmp_path / "t")], capsys)
        assert code == 1
        assert err.strip().startswith("error: config:")


class TestReportCommand:
    def test_aggregates_runs(self, candles_csv, capsys, tmp_path):
        dirs = []
        for name, argv in (
            ("tau", ["backtest", "--method", "tau-reset", "--tau", "6"]),
            ("ewa", ["backtest", "--method", "ewa", "--ewa-widths", "5",
                     "--ewa-eta", "1.0", "--ewa-t-re", "24"]),
        ):
            out = str(tmp_path / name)
            code, _, _ = run_cli(
                argv + ["--candles", candles_csv, "--offset", "10",
                        "--horizon", "150", "--out-dir", out], capsys)
            assert code == 0
            dirs.append(out)
        report_dir = tmp_path / "report"
        code, stdout, _ = run_cli(
            ["report", "--runs", *dirs, "--out-dir", str(report_dir)], capsys)
        assert code == 0
        rows = read_report_csv(str(report_dir / "summary.csv"))
        assert len(rows) == 2
        assert (report_dir / "cumulative_pnl.csv").exists()
        assert (report_dir / "actions.csv").exists()


class TestVerifyCommand:
    def test_single_fast_criterion(self, capsys):
        code, stdout, _ = run_cli(["verify", "--criteria", "8"], capsys)
        assert code == 0
        lines = [l for l in stdout.splitlines() if l.startswith("criterion 8")]
        assert len(lines) == 1
        assert "PASS" in lines[0]

    def test_unknown_criterion_number(self, capsys):
        code, _, err = run_cli(["verify", "--criteria", "99"], capsys)
        assert code == 1
        assert err.strip().startswith("error: run:")


def test_bundled_fixture_is_packaged():
    assert os.path.exists(bundled_candles_path())
