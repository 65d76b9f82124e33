"""End-to-end command line flows against generated recordings."""

import json

import numpy as np
import pytest

from motortemp import cli
from motortemp.checkpoint import save_checkpoint
from motortemp.models import init_params

FAST_FEATURES = ["--window", "16", "--spans", "2,4"]
FAST_TRAIN = FAST_FEATURES + [
    "--hidden", "4", "--batch-size", "64", "--epochs-per-group", "1",
    "--groups", "1", "--fine-tune-profiles", "0",
    "--synth", "--synth-profiles", "2", "--synth-length", "80",
]


def run(argv):
    return cli.main(argv)


class TestSynth:
    def test_writes_deterministic_csv(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        assert run(["synth", "--out", str(a), "--profiles", "2",
                    "--length", "40", "--seed", "7"]) == 0
        assert run(["synth", "--out", str(b), "--profiles", "2",
                    "--length", "40", "--seed", "7"]) == 0
        assert a.read_bytes() == b.read_bytes()
        header = a.read_text().splitlines()[0]
        assert header.startswith("profile_id,")

    def test_seed_changes_content(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        run(["synth", "--out", str(a), "--profiles", "1", "--length", "30",
             "--seed", "1"])
        run(["synth", "--out", str(b), "--profiles", "1", "--length", "30",
             "--seed", "2"])
        assert a.read_bytes() != b.read_bytes()


class TestFeaturize:
    def test_writes_tensors_and_metadata(self, tmp_path):
        out = tmp_path / "feat"
        assert run(["featurize", "--synth", "--synth-profiles", "2",
                    "--synth-length", "40", "--out", str(out)]
                   + FAST_FEATURES) == 0
        inputs = np.load(out / "inputs.npy")
        targets = np.load(out / "targets.npy")
        # 13 base quantities, raw plus two smoothing spans
        assert inputs.shape[1:] == (16, 39)
        assert targets.shape == (inputs.shape[0], 1, 4)
        prov = (out / "provenance.csv").read_text().splitlines()
        assert prov[0] == "profile_id,end_index"
        assert len(prov) == inputs.shape[0] + 1
        cfg = json.loads((out / "config.json").read_text())
        assert cfg["window"] == 16 and cfg["spans"] == [2, 4]
        stats = json.loads((out / "stats.json").read_text())
        assert len(stats["channel_mean"]) == 39

    def test_flag_beats_config_file_beats_default(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"window": 24, "spans": [2, 4]}))
        out1 = tmp_path / "f1"
        run(["featurize", "--synth", "--synth-profiles", "1",
             "--synth-length", "40", "--config", str(cfg_path),
             "--out", str(out1)])
        assert json.loads((out1 / "config.json").read_text())["window"] == 24
        out2 = tmp_path / "f2"
        run(["featurize", "--synth", "--synth-profiles", "1",
             "--synth-length", "40", "--config", str(cfg_path),
             "--window", "20", "--out", str(out2)])
        assert json.loads((out2 / "config.json").read_text())["window"] == 20


class TestUsageErrors:
    def test_missing_data_source_exits_2(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            run(["train", "--out", str(tmp_path / "run")])
        assert err.value.code == 2

    def test_data_and_synth_conflict(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            run(["train", "--out", str(tmp_path / "run"), "--synth",
                 "--data", "x.csv"])
        assert err.value.code == 2

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as err:
            run(["train", "--frobnicate"])
        assert err.value.code == 2

    def test_bad_variant_choice(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            run(["train", "--out", str(tmp_path / "run"), "--synth",
                 "--variant", "transformer"])
        assert err.value.code == 2

    def test_missing_subcommand(self):
        with pytest.raises(SystemExit) as err:
            run([])
        assert err.value.code == 2


class TestRuntimeErrors:
    def test_corrupt_checkpoint_exits_1(self, tmp_path, capsys):
        bogus = tmp_path / "bogus.bin"
        bogus.write_bytes(b"not a checkpoint at all")
        assert run(["inspect", str(bogus)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_missing_data_file_exits_1(self, tmp_path):
        out = tmp_path / "feat"
        assert run(["featurize", "--data", str(tmp_path / "absent.csv"),
                    "--out", str(out)]) == 1

    def test_variant_mismatch_exits_1(self, tmp_path, capsys):
        path = tmp_path / "v.bin"
        save_checkpoint(init_params("vanilla", seed=0, input_dim=3, hidden=2),
                        None, path)
        data = tmp_path / "d.csv"
        run(["synth", "--out", str(data), "--profiles", "1", "--length", "40"])
        assert run(["evaluate", "--checkpoint", str(path), "--data", str(data),
                    "--out", str(tmp_path / "ev"), "--variant", "bilstm"]) == 1
        assert "bilstm" in capsys.readouterr().err

    def test_checkpoint_without_pipeline_exits_1(self, tmp_path, capsys):
        path = tmp_path / "bare.bin"
        save_checkpoint(init_params("vanilla", seed=0, input_dim=3, hidden=2),
                        None, path)
        data = tmp_path / "d.csv"
        run(["synth", "--out", str(data), "--profiles", "1", "--length", "40"])
        assert run(["predict", "--checkpoint", str(path), "--data", str(data),
                    "--out", str(tmp_path / "p.csv")]) == 1
        assert "lacks feature configuration" in capsys.readouterr().err


class TestTrainFlow:
    def train(self, tmp_path, extra=()):
        out = tmp_path / "run"
        code = run(["train", "--out", str(out), "--test-profiles", "2",
                    "--seed", "5", *FAST_TRAIN, *extra])
        assert code == 0
        return out

    def test_artifacts_written(self, tmp_path):
        out = self.train(tmp_path)
        assert (out / "checkpoint.bin").exists()
        cfg = json.loads((out / "config.json").read_text())
        assert cfg["test_profiles"] == [2]
        assert cfg["training"]["epochs_per_group"] == 1
        log_lines = (out / "train_log.jsonl").read_text().splitlines()
        assert len(log_lines) == 1
        record = json.loads(log_lines[0])
        assert set(record) == {"epoch", "group", "train_loss", "eval_loss"}
        assert record["eval_loss"] is not None

    def test_evaluate_and_predict_from_checkpoint(self, tmp_path, capsys):
        out = self.train(tmp_path)
        data = tmp_path / "rec.csv"
        run(["synth", "--out", str(data), "--profiles", "2", "--length", "80",
             "--seed", "5"])
        ev = tmp_path / "ev"
        assert run(["evaluate", "--checkpoint", str(out / "checkpoint.bin"),
                    "--data", str(data), "--test-profiles", "2",
                    "--out", str(ev)]) == 0
        report = json.loads((ev / "report.json").read_text())
        assert report["n_windows"] > 0
        assert set(report["mse"]) == {"stator_winding", "stator_tooth",
                                      "stator_yoke", "pm"}
        assert (ev / "report.txt").exists()
        assert (ev / "pm_trace.csv").exists()
        assert (ev / "pm_error.csv").exists()

        pred = tmp_path / "pred.csv"
        assert run(["predict", "--checkpoint", str(out / "checkpoint.bin"),
                    "--data", str(data), "--out", str(pred)]) == 0
        lines = pred.read_text().splitlines()
        assert lines[0] == ("profile_id,end_index,pred_stator_winding,"
                            "pred_stator_tooth,pred_stator_yoke,pred_pm")
        first = lines[1].split(",")
        assert first[0] == "1"
        float(first[2])  # numeric payload parses

    def test_evaluate_needs_test_profiles_for_synth_ids(self, tmp_path, capsys):
        out = self.train(tmp_path)
        data = tmp_path / "rec.csv"
        run(["synth", "--out", str(data), "--profiles", "2", "--length", "80"])
        # generated ids are 1..n, so the default held-out id is absent
        assert run(["evaluate", "--checkpoint", str(out / "checkpoint.bin"),
                    "--data", str(data), "--out", str(tmp_path / "ev")]) == 1
        assert "no held-out profiles" in capsys.readouterr().err


class TestInspect:
    def test_reports_reference_parameter_count(self, tmp_path, capsys):
        path = tmp_path / "att.bin"
        save_checkpoint(init_params("attention", seed=0), None, path)
        assert run(["inspect", str(path)]) == 0
        text = capsys.readouterr().out
        assert "variant: attention" in text
        assert "trainable parameters: 147604" in text
        assert "Softmax" in text

    def test_bilstm_layer_table_shows_concats(self, tmp_path, capsys):
        path = tmp_path / "bi.bin"
        save_checkpoint(init_params("bilstm", seed=0, input_dim=5, hidden=3),
                        None, path)
        assert run(["inspect", str(path)]) == 0
        text = capsys.readouterr().out
        assert "Concat-1" in text and "Concat-2" in text
        assert "trainable parameters:" in text
