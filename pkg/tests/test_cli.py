"""End-to-end tests of the command-line pipeline."""

import json
import os

import pytest

from marketpanel.cli import main


def run_cli(*argv, capsys=None):
    """Invoke the CLI and return (exit code, last stdout line)."""
    if capsys:
        capsys.readouterr()  # drop output from earlier calls in this test
    code = main(list(argv))
    out = ""
    if capsys:
        lines = capsys.readouterr().out.strip().splitlines()
        out = lines[-1] if lines else ""
    return code, out


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("data")
    assert main(["synth", "--seed", "7", "--out", str(path)]) == 0
    return path


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, data_dir):
    out = tmp_path_factory.mktemp("out")
    assert main(["run", "--data", str(data_dir), "--out", str(out)]) == 0
    (run_id,) = os.listdir(out)
    return out / run_id


class TestSynthCommand:
    def test_writes_three_csvs_and_truth(self, data_dir):
        names = sorted(os.listdir(data_dir))
        assert names == ["fundamentals.csv", "prices.csv", "riskfree.csv",
                         "truth.json"]

    def test_missing_out_is_usage_error(self):
        with pytest.raises(SystemExit) as err:
            main(["synth", "--seed", "1"])
        assert err.value.code == 2

    def test_same_seed_identical_files(self, data_dir, tmp_path):
        other = tmp_path / "data2"
        assert main(["synth", "--seed", "7", "--out", str(other)]) == 0
        for name in os.listdir(data_dir):
            assert (other / name).read_bytes() == (data_dir / name).read_bytes()

    def test_infeasible_config_exit_2(self, tmp_path):
        assert main(["synth", "--seed", "1", "--n-firms", "1",
                     "--out", str(tmp_path / "x")]) == 2


class TestIngestCheck:
    def test_clean_data_passes(self, data_dir, capsys):
        code, out = run_cli("ingest-check", "--data", str(data_dir), capsys=capsys)
        assert code == 0
        summary = json.loads(out)
        assert summary["rows_accepted"] == 200
        assert summary["rows_rejected"] == 0

    def test_dirty_row_reported(self, data_dir, tmp_path, capsys):
        dirty = tmp_path / "dirty"
        dirty.mkdir()
        for name in ("prices.csv", "riskfree.csv"):
            (dirty / name).write_text((data_dir / name).read_text())
        lines = (data_dir / "fundamentals.csv").read_text().splitlines()
        cells = lines[1].split(",")
        cells[8] = "0.0"  # sales
        lines.insert(1, ",".join(cells).replace(cells[0], "FX1", 1))
        (dirty / "fundamentals.csv").write_text("\n".join(lines) + "\n")
        code, out = run_cli("ingest-check", "--data", str(dirty), capsys=capsys)
        assert code == 1
        summary = json.loads(out)
        assert summary["rows_rejected"] == 1
        assert "sales must be positive" in summary["rejections"][0][1]

    def test_missing_dir_exit_2(self, tmp_path):
        assert main(["ingest-check", "--data", str(tmp_path / "nope")]) == 2


class TestRunCommand:
    def test_emits_full_table_tree(self, run_dir):
        names = set(os.listdir(run_dir))
        stems = ("descriptives", "correlations", "stationarity", "value_direct",
                 "value_moderated", "risk_direct", "risk_moderated",
                 "robustness_value_assets", "robustness_value_log",
                 "robustness_risk_assets", "robustness_risk_log")
        for stem in stems:
            for ext in ("json", "csv", "md"):
                assert f"{stem}.{ext}" in names
        assert "manifest.json" in names
        assert len(names) == 3 * len(stems) + 1

    def test_manifest_records_effective_config(self, run_dir):
        manifest = json.loads((run_dir / "manifest.json").read_text())
        cfg = manifest["effective_config"]
        assert cfg["marin_variant"] == "sales_ratio"
        assert cfg["beta_window"] == 60
        assert cfg["beta_min"] == 48
        assert manifest["n_observations"] == 200
        assert manifest["baseline_nobs"]["value_moderated"] == 200
        assert manifest["timestamp"] is None

    def test_byte_identical_reruns(self, data_dir, run_dir, tmp_path):
        """Identical config and seed produce an identical output tree."""
        out2 = tmp_path / "out2"
        assert main(["run", "--data", str(data_dir), "--out", str(out2)]) == 0
        other = out2 / run_dir.name
        names_a = sorted(os.listdir(run_dir))
        assert names_a == sorted(os.listdir(other))
        for name in names_a:
            assert (run_dir / name).read_bytes() == (other / name).read_bytes(), name

    def test_synth_mode(self, tmp_path, capsys):
        code, out = run_cli("run", "--synth", "--seed", "3", "--out",
                            str(tmp_path / "o"), capsys=capsys)
        assert code == 0
        assert json.loads(out)["n_derived_rows"] == 200

    def test_log_variant_nobs_recorded(self, data_dir, tmp_path):
        out = tmp_path / "logout"
        assert main(["run", "--data", str(data_dir), "--out", str(out),
                     "--marin-variant", "log"]) == 0
        (run_id,) = os.listdir(out)
        manifest = json.loads((out / run_id / "manifest.json").read_text())
        nobs = manifest["baseline_nobs"]
        assert nobs["value_moderated"] <= 200
        assert manifest["effective_config"]["marin_variant"] == "log_level"

    def test_config_file_with_flag_override(self, data_dir, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"data = {data_dir}\nseed = 7\nmarin_variant = assets\n"
                       "# comment line\ncenter = true\n")
        out = tmp_path / "cfgout"
        code, text = run_cli("run", "--config", str(cfg), "--out", str(out),
                             "--marin-variant", "sales", capsys=capsys)
        assert code == 0
        (run_id,) = os.listdir(out)
        manifest = json.loads((out / run_id / "manifest.json").read_text())
        assert manifest["effective_config"]["marin_variant"] == "sales_ratio"
        assert manifest["effective_config"]["center"] is True

    def test_data_and_synth_conflict(self, data_dir, tmp_path):
        assert main(["run", "--data", str(data_dir), "--synth",
                     "--out", str(tmp_path / "c")]) == 2

    def test_missing_inputs_exit_2(self, tmp_path):
        assert main(["run", "--data", str(tmp_path / "missing"),
                     "--out", str(tmp_path / "o2")]) == 2

    def test_bad_beta_window_exit_2(self, data_dir, tmp_path):
        assert main(["run", "--data", str(data_dir), "--out", str(tmp_path / "o3"),
                     "--beta-window", "24", "--beta-min", "48"]) == 2


class TestVerifyCommand:
    def test_clean_run_verifies(self, data_dir, run_dir, capsys):
        code, out = run_cli("verify", "--data", str(data_dir), "--run",
                            str(run_dir), capsys=capsys)
        assert code == 0
        assert json.loads(out)["passed"] is True

    def test_missing_truth_exit_2(self, run_dir, tmp_path):
        empty = tmp_path / "notruth"
        empty.mkdir()
        assert main(["verify", "--data", str(empty), "--run", str(run_dir)]) == 2

    def test_tampered_coefficient_detected(self, data_dir, run_dir, tmp_path, capsys):
        import shutil
        tampered = tmp_path / "tampered"
        shutil.copytree(run_dir, tampered)
        path = tampered / "value_moderated.json"
        payload = json.loads(path.read_text())
        row = payload["rows"][2]
        row["coefficient"] = 99.0
        path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
        code, out = run_cli("verify", "--data", str(data_dir), "--run",
                            str(tampered), capsys=capsys)
        assert code == 1
        summary = json.loads(out)
        assert any("value_moderated" in f and row["variable"] in f
                   for f in summary["failures"])


class TestReportDiff:
    def test_identical_trees_pass(self, data_dir, run_dir, tmp_path, capsys):
        out2 = tmp_path / "dup"
        assert main(["run", "--data", str(data_dir), "--out", str(out2)]) == 0
        other = out2 / run_dir.name
        code, out = run_cli("report-diff", str(run_dir), str(other),
                            "--rel-tol", "0", capsys=capsys)
        assert code == 0
        assert json.loads(out)["passed"] is True

    def test_diff_detected(self, run_dir, tmp_path, capsys):
        import shutil
        other = tmp_path / "mutated"
        shutil.copytree(run_dir, other)
        path = other / "descriptives.json"
        payload = json.loads(path.read_text())
        payload["rows"][0]["mean"] = 123.456
        path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
        code, out = run_cli("report-diff", str(run_dir), str(other), capsys=capsys)
        assert code == 1
        assert any("descriptives" in line
                   for line in json.loads(out)["differences"])
