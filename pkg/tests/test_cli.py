import json

import numpy as np
import pytest

from ssvep_lst.cli import DEFAULT_CONFIG, load_config, main
from ssvep_lst.containers import read_dataset
from ssvep_lst.errors import ConfigError


def small_config(tmp_path, **eval_overrides):
    cfg = {
        "seed": 3,
        "synth": {
            "nSubjects": 3,
            "nTrialsPerStimulus": 6,
            "nTargets": 4,
            "devices": [{"name": "synth8", "channels": list(DEFAULT_CONFIG["synth"]["devices"][0]["channels"])}],
        },
        "filterbank": {"bandEdges": [[8.0, 88.0]]},
        "eval": {"calibTrialCounts": [2], "nRepeats": 1, **eval_overrides},
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


class TestLoadConfig:
    def test_defaults_when_no_file(self):
        cfg = load_config(None)
        assert cfg == DEFAULT_CONFIG

    def test_merge_preserves_unset_defaults(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"seed": 42, "eval": {"nRepeats": 7}}))
        cfg = load_config(path)
        assert cfg["seed"] == 42
        assert cfg["eval"]["nRepeats"] == 7
        assert cfg["eval"]["testTrialsPerStimulus"] == 3  # untouched default

    def test_all_unknown_keys_reported_at_once(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(
            json.dumps({"sead": 1, "eval": {"nRepeets": 2}, "synth": {"snr": -8}})
        )
        with pytest.raises(ConfigError) as err:
            load_config(path)
        msg = str(err.value)
        assert "sead" in msg
        assert "eval.nRepeets" in msg
        assert "synth.snr" in msg

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(path)


class TestSynthCommand:
    def test_writes_per_subject_files(self, tmp_path):
        cfg = small_config(tmp_path)
        out = tmp_path / "data"
        assert main(["synth", "--config", str(cfg), "--out", str(out)]) == 0
        files = sorted(p.name for p in out.glob("*.ds"))
        assert files == [
            "S00_synth8.ds",
            "S01_synth8.ds",
            "S02_synth8.ds",
        ]
        assert (out / "resolved_config.json").exists()
        ds = read_dataset(out / "S00_synth8.ds")
        assert ds.montage.n_channels == 8
        assert ds.n_trials_per_stimulus == 6

    def test_resolved_config_reflects_overrides(self, tmp_path):
        cfg = small_config(tmp_path)
        out = tmp_path / "data"
        main(["synth", "--config", str(cfg), "--out", str(out)])
        resolved = json.loads((out / "resolved_config.json").read_text())
        assert resolved["seed"] == 3
        assert resolved["synth"]["nSubjects"] == 3
        assert resolved["eval"]["sweepCalibTrials"] == 5  # default retained

    def test_bad_config_exit_code(self, tmp_path, capsys):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"bogus": 1}))
        code = main(["synth", "--config", str(path), "--out", str(tmp_path / "o")])
        assert code == 1
        assert "error: ConfigError" in capsys.readouterr().err


class TestTrainClassify:
    def test_round_trip_scores_training_data(self, tmp_path):
        cfg = small_config(tmp_path)
        data = tmp_path / "data"
        main(["synth", "--config", str(cfg), "--out", str(data)])
        model = tmp_path / "m.tm"
        assert main(
            ["train", "--data", str(data / "S00_synth8.ds"),
             "--config", str(cfg), "--out", str(model)]
        ) == 0
        scores = tmp_path / "scores.csv"
        assert main(
            ["classify", "--model", str(model),
             "--data", str(data / "S00_synth8.ds"), "--out", str(scores)]
        ) == 0
        lines = scores.read_text().splitlines()
        header = lines[0].split(",")
        assert header[:3] == ["stimulus_index", "trial_index", "decision"]
        rows = [l.split(",") for l in lines[1:]]
        assert len(rows) == 4 * 6  # stimuli x trials
        correct = sum(r[0] == r[2] for r in rows)
        assert correct / len(rows) >= 0.5  # own training data, modest SNR


class TestTransferCommand:
    def test_cross_montage_transform(self, tmp_path):
        cfg_dict = {
            "seed": 5,
            "synth": {"nSubjects": 2, "nTargets": 4},
        }
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(cfg_dict))
        data = tmp_path / "data"
        main(["synth", "--config", str(cfg), "--out", str(data)])
        out = tmp_path / "xfer"
        code = main(
            ["transfer",
             "--target-calib", str(data / "S00_synth6.ds"),
             "--source", str(data / "S01_synth8.ds"),
             "--config", str(cfg), "--out", str(out)]
        )
        assert code == 0
        transformed = read_dataset(out / "S01_synth8.lst.ds")
        assert transformed.montage.n_channels == 6  # mapped into target space
        residuals = (out / "residuals.csv").read_text().splitlines()
        assert residuals[0] == "source_subject,stimulus_index,trial_index,residual"
        assert len(residuals) == 1 + 4 * 6  # one map per source trial
        assert all(float(r.rsplit(",", 1)[1]) >= 0 for r in residuals[1:])


class TestEvaluateCommand:
    def test_report_shape_and_determinism(self, tmp_path):
        cfg = small_config(tmp_path)
        data = tmp_path / "data"
        main(["synth", "--config", str(cfg), "--out", str(data)])
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main(
            ["evaluate", "--data-dir", str(data), "--config", str(cfg),
             "--out", str(out1)]
        ) == 0
        assert main(
            ["evaluate", "--data-dir", str(data), "--config", str(cfg),
             "--out", str(out2), "--jobs", "2"]
        ) == 0
        csv1 = (out1 / "report.csv").read_bytes()
        csv2 = (out2 / "report.csv").read_bytes()
        assert csv1 == csv2  # serial and parallel runs byte-identical
        lines = csv1.decode().splitlines()
        # 3 subjects x 1 repeat x 1 calib count x 3 schemes
        assert len(lines) == 1 + 9
        summary = json.loads((out1 / "summary.json").read_text())
        assert {e["scheme"] for e in summary["accuracy"]} == {
            "baseline", "naive", "lst",
        }

    def test_mixed_devices_need_pair(self, tmp_path, capsys):
        cfg_dict = {"synth": {"nSubjects": 2, "nTargets": 4}}
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(cfg_dict))
        data = tmp_path / "data"
        main(["synth", "--config", str(cfg), "--out", str(data)])
        code = main(
            ["evaluate", "--data-dir", str(data), "--config", str(cfg),
             "--out", str(tmp_path / "r")]
        )
        assert code == 1
        assert "crossDevicePair" in capsys.readouterr().err

    def test_cross_device_pair(self, tmp_path):
        cfg_dict = {
            "synth": {"nSubjects": 3, "nTargets": 4},
            "filterbank": {"bandEdges": [[8.0, 88.0]]},
            "eval": {
                "calibTrialCounts": [2],
                "nRepeats": 1,
                "crossDevicePair": ["synth6", "synth8"],
            },
        }
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(cfg_dict))
        data = tmp_path / "data"
        main(["synth", "--config", str(cfg), "--out", str(data)])
        out = tmp_path / "r"
        assert main(
            ["evaluate", "--data-dir", str(data), "--config", str(cfg),
             "--out", str(out)]
        ) == 0
        lines = (out / "report.csv").read_text().splitlines()
        schemes = {l.split(",")[1] for l in lines[1:]}
        assert schemes == {"baseline", "lst"}  # naive impossible across montages

    def test_empty_dir_fails(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        code = main(["evaluate", "--data-dir", str(empty), "--out", str(tmp_path / "o")])
        assert code == 1
