import csv
import json
import shutil
import subprocess
import sys

import pytest

from svytransport.cli import main
from svytransport.datasets import toy_paths


@pytest.fixture()
def toy_files():
    return toy_paths()


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


class TestToyCommand:
    def test_text_output(self, capsys):
        assert main(["toy"]) == 0
        out = capsys.readouterr().out
        assert "naive:           2.666666667" in out
        assert "transport:       3.2" in out
        assert "survey-weighted: 3" in out
        assert "all golden values verified to 1e-10" in out

    def test_json_output(self, capsys):
        assert main(["toy", "--json"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["estimates"]["naive"] == pytest.approx(8.0 / 3.0, abs=1e-12)
        assert report["estimates"]["transport"] == pytest.approx(3.2, abs=1e-12)
        assert report["estimates"]["survey_weighted"] == pytest.approx(3.0, abs=1e-12)
        assert report["weights"]["delta"]["younger"] == pytest.approx(10.0, abs=1e-9)
        assert report["population_size_estimate"] == 1000.0


class TestEstimateCommand:
    def test_end_to_end_on_toy_files(self, tmp_path, capsys, toy_files):
        trial, survey, _ = toy_files
        out = tmp_path / "run"
        assert main(["estimate", str(trial), str(survey), "--out", str(out)]) == 0

        stdout = capsys.readouterr().out
        assert "naive" in stdout and "survey_weighted" in stdout

        records = read_json(out / "estimates.json")
        by_name = {r["estimator"]: r for r in records}
        assert by_name["naive"]["point"] == pytest.approx(8.0 / 3.0, abs=1e-10)
        assert by_name["transport"]["point"] == pytest.approx(3.2, abs=1e-10)
        assert by_name["survey_weighted"]["point"] == pytest.approx(3.0, abs=1e-10)

        for name in ("estimates.csv", "balance.csv", "balance_long.csv", "manifest.json"):
            assert (out / name).exists()

        manifest = read_json(out / "manifest.json")
        assert manifest["command"][0] == "estimate"
        assert set(manifest["input_hashes"]) == {"trial_csv", "survey_csv"}
        assert manifest["seed"] == 0

        with open(out / "balance.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["covariate"] == "age_group_younger"
        assert float(rows[0]["asmd_post_delta"]) == pytest.approx(0.0, abs=1e-9)

    def test_no_survey_weights(self, tmp_path, toy_files, capsys):
        trial, survey, _ = toy_files
        out = tmp_path / "run"
        code = main(
            ["estimate", str(trial), str(survey), "--no-survey-weights", "--out", str(out)]
        )
        assert code == 0
        capsys.readouterr()
        names = [r["estimator"] for r in read_json(out / "estimates.json")]
        assert names == ["naive", "transport"]
        with open(out / "balance.csv", newline="") as fh:
            row = next(csv.DictReader(fh))
        assert row["asmd_post_delta"] == "nan"

    def test_schema_file_and_weights_out(self, tmp_path, toy_files, capsys):
        trial, survey, schema = toy_files
        out = tmp_path / "run"
        code = main(
            [
                "estimate", str(trial), str(survey),
                "--schema", str(schema), "--weights-out", "--out", str(out),
            ]
        )
        assert code == 0
        capsys.readouterr()
        for name in ("weights_gamma.csv", "weights_delta.csv"):
            with open(out / name, newline="") as fh:
                rows = list(csv.DictReader(fh))
            assert len(rows) == 150
        gamma_first = rows and read_first(out / "weights_gamma.csv")
        assert gamma_first["variant"] == "gamma"

    def test_bootstrap_and_replicates(self, tmp_path, toy_files, capsys):
        trial, survey, _ = toy_files
        out = tmp_path / "run"
        code = main(
            [
                "estimate", str(trial), str(survey), "--bootstrap", "15",
                "--seed", "4", "--replicates-out", "--out", str(out),
            ]
        )
        assert code == 0
        capsys.readouterr()
        by_name = {r["estimator"]: r for r in read_json(out / "estimates.json")}
        assert "bootstrap" not in by_name["naive"]
        for name in ("transport", "survey_weighted"):
            boot = by_name[name]["bootstrap"]
            assert boot["n_replicates"] + boot["n_failed"] == 15
            assert boot["ci"][0] <= by_name[name]["point"] <= boot["ci"][1]
            assert (out / f"replicates_{name}.csv").exists()

    def test_deterministic_outputs(self, tmp_path, toy_files, capsys):
        trial, survey, _ = toy_files
        args = ["estimate", str(trial), str(survey), "--bootstrap", "10", "--seed", "3"]
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        capsys.readouterr()
        assert (out1 / "estimates.json").read_bytes() == (out2 / "estimates.json").read_bytes()
        assert (out1 / "estimates.csv").read_bytes() == (out2 / "estimates.csv").read_bytes()
        m1, m2 = read_json(out1 / "manifest.json"), read_json(out2 / "manifest.json")
        m1.pop("timestamp"), m2.pop("timestamp")
        for key in ("config_hash", "input_hashes", "seed", "version"):
            assert m1[key] == m2[key]

    def test_gbm_learner_runs(self, tmp_path, toy_files, capsys):
        trial, survey, _ = toy_files
        out = tmp_path / "run"
        code = main(
            ["estimate", str(trial), str(survey), "--learner", "gbm", "--out", str(out)]
        )
        assert code == 0
        capsys.readouterr()
        by_name = {r["estimator"]: r for r in read_json(out / "estimates.json")}
        assert by_name["survey_weighted"]["metadata"]["model_kind"] == "gbm"
        # boosting converges to the same saturated cells, loosely
        assert by_name["survey_weighted"]["point"] == pytest.approx(3.0, abs=0.05)


def read_first(path):
    with open(path, newline="") as fh:
        return next(csv.DictReader(fh))


class TestExitCodes:
    def test_validation_error_is_1(self, tmp_path, toy_files, capsys):
        trial, survey, _ = toy_files
        bad_survey = tmp_path / "bad_survey.csv"
        text = survey.read_text().splitlines()
        text[1] = text[1].rsplit(",", 1)[0] + ",-1.0"
        bad_survey.write_text("\n".join(text) + "\n")
        code = main(["estimate", str(trial), str(bad_survey), "--out", str(tmp_path / "o")])
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_missing_file_is_1(self, tmp_path, capsys):
        code = main(
            ["estimate", str(tmp_path / "no.csv"), str(tmp_path / "no2.csv")]
        )
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_numerical_error_is_2(self, tmp_path, capsys):
        # disjoint covariate ranges: complete separation of trial vs survey
        trial = tmp_path / "trial.csv"
        survey = tmp_path / "survey.csv"
        trial.write_text(
            "x,treatment,outcome\n0.1,1,1.0\n0.2,0,0.5\n0.3,1,0.2\n0.15,0,0.1\n"
        )
        survey.write_text(
            "x,survey_weight\n5.1,2.0\n5.2,2.0\n5.3,2.0\n5.4,2.0\n"
        )
        code = main(["estimate", str(trial), str(survey), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "separat" in capsys.readouterr().err.lower()

    def test_usage_error_is_3(self, capsys):
        assert main(["estimate", "a.csv", "b.csv", "--bogus"]) == 3
        capsys.readouterr()
        assert main(["frobnicate"]) == 3
        capsys.readouterr()

    def test_config_error_is_3(self, toy_files, tmp_path, capsys):
        trial, survey, _ = toy_files
        code = main(
            ["estimate", str(trial), str(survey), "--level", "1.5", "--out", str(tmp_path / "o")]
        )
        assert code == 3
        assert "level" in capsys.readouterr().err


class TestSimulateCommand:
    def test_grid_run(self, tmp_path, capsys):
        grid = {
            "base": {
                "population_size": 800,
                "trial_scale": 0.05,
                "survey_scale": 0.1,
                "n_replications": 2,
            },
            "axes": {"gamma2": [0.1, 0.5]},
        }
        config = tmp_path / "grid.json"
        config.write_text(json.dumps(grid))
        out = tmp_path / "results" / "sweep.csv"
        assert main(["simulate", str(config), "--seed", "11", "--out", str(out)]) == 0
        stdout = capsys.readouterr().out
        assert "bias" in stdout and "coverage" in stdout

        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 6
        assert {r["gamma2"] for r in rows} == {"0.1", "0.5"}
        manifest = read_json(out.parent / "sweep_manifest.json")
        assert manifest["seed"] == 11
        assert "grid_config" in manifest["input_hashes"]

    def test_missing_config_is_3(self, tmp_path, capsys):
        code = main(["simulate", str(tmp_path / "none.json")])
        assert code == 3
        assert "cannot read" in capsys.readouterr().err


class TestConsoleScript:
    def test_installed_entry_point(self):
        exe = shutil.which("svytransport")
        if exe is None:
            pytest.skip("console script not on PATH")
        proc = subprocess.run(
            [exe, "toy"], capture_output=True, text=True, timeout=60
        )
        assert proc.returncode == 0
        assert "all golden values verified" in proc.stdout

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "svytransport" in capsys.readouterr().out

    def test_module_invocation(self):
        proc = subprocess.run(
            [sys.executable, "-m", "svytransport.cli", "toy", "--json"],
            capture_output=True, text=True, timeout=60,
        )
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["estimates"]["naive"] == pytest.approx(8.0 / 3.0)
