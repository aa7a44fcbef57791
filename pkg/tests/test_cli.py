import json

import numpy as np
import pytest
from scipy.io import wavfile

from avhighlight.cli import VERSION, main, parse_overrides, read_config
from avhighlight.data import FeatureBundle, read_bundle, write_bundle
from avhighlight.harness import ExperimentConfig

SYNTH = ["--n_videos", "6", "--modalities", "googlenet,faces", "--dims.googlenet", "8", "--n_raters", "3"]
FAST = ["--epochs", "1", "--batch_size", "40", "--folds", "2", "--chance_trials", "200"]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "data"
    assert main(["synth", "--out", str(root), "--seed", "3"] + SYNTH) == 0
    return root


def error_line(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


class TestBasics:
    def test_version(self, capsys):
        assert main(["--version"]) == 0
        out = capsys.readouterr().out
        assert "HLFB" in out and "HLPS" in out and out.strip() == VERSION

    def test_help_lists_commands(self, capsys):
        assert main(["--help"]) == 0
        out = capsys.readouterr().out
        for cmd in ("synth", "train", "evaluate", "study-single", "study-ablation", "finetune", "agreement",
                    "chance", "report", "mfcc", "resample"):
            assert cmd in out

    def test_no_command(self):
        assert main([]) == 2

    def test_missing_config_is_usage_error(self, tmp_path, capsys):
        assert main(["chance", "--data", str(tmp_path), "--config", str(tmp_path / "nope.json")]) == 2
        assert "config file not found" in capsys.readouterr().err

    def test_unknown_key_is_usage_error(self, data_dir):
        assert main(["chance", "--data", str(data_dir), "--bogus", "1"]) == 2

    def test_bad_data_dir_is_runtime_error(self, tmp_path, capsys):
        assert main(["chance", "--data", str(tmp_path)]) == 1
        assert error_line(capsys)["error"] == "ContractError"

    def test_corrupt_bundle(self, tmp_path, capsys):
        p = tmp_path / "x.hlfb"
        p.write_bytes(b"HLFB\x01")
        assert main(["resample", "--bundle", str(p), "--out", str(tmp_path / "o")]) == 1
        assert error_line(capsys)["error"] == "ParseError"


class TestConfig:
    def test_key_value_file(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("# comment\nseed = 4\nks = 1,3\nadam.learning_rate = 0.01\nccc_variant = eq1_literal\n")
        assert read_config(p) == {"seed": 4, "ks": [1, 3], "adam": {"learning_rate": 0.01},
                                  "ccc_variant": "eq1_literal"}

    def test_json_file(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{"seed": 2, "ranking": {"max_pairs": 10}}')
        assert read_config(p) == {"seed": 2, "ranking": {"max_pairs": 10}}

    def test_bad_json(self, tmp_path):
        from avhighlight.cli import UsageError

        p = tmp_path / "c.json"
        p.write_text("{nope")
        with pytest.raises(UsageError, match="invalid JSON"):
            read_config(p)

    def test_overrides(self):
        assert parse_overrides(["--epochs", "3", "--adam.beta1=0.8", "--pair-policy", "global"]) == \
            {"epochs": 3, "adam": {"beta1": 0.8}, "pair_policy": "global"}

    def test_precedence_and_aliases(self, data_dir, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("seed = 1\nchance_trials = 300\nranking.seed = 9\nccc.variant = eq1_literal\n")
        out = tmp_path / "run"
        assert main(["chance", "--data", str(data_dir), "--config", str(cfg), "--seed", "6", "--chance_trials", "250",
                     "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        c = manifest["config"]
        assert (c["seed"], c["chance_trials"], c["pair_seed"], c["ccc_variant"]) == (6, 250, 9, "eq1_literal")
        assert manifest["config_hash"] == ExperimentConfig.from_dict(c).hash()

    def test_unknown_alias(self, data_dir):
        assert main(["chance", "--data", str(data_dir), "--ranking.bogus", "1"]) == 2


class TestCommands:
    def test_synth_manifest(self, data_dir):
        manifest = json.loads((data_dir / "manifest.json").read_text())
        assert len(manifest["videos"]) == 6 and manifest["annotations"] == "annotations.csv"
        assert manifest["provenance"]["formats"] == {"HLFB": 1, "HLPS": 1}
        assert manifest["synth_config"]["seed"] == 3

    def test_chance_stdout(self, data_dir, capsys):
        assert main(["chance", "--data", str(data_dir), "--trials", "500", "--k", "5"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "metric,k,chance" and len(lines) == 4

    def test_mfcc(self, tmp_path):
        wavfile.write(tmp_path / "a.wav", 16_000, np.zeros(80_000, np.int16))
        assert main(["mfcc", "--wav", str(tmp_path / "a.wav"), "--frames", "150", "--out", str(tmp_path / "o")]) == 0
        assert np.load(tmp_path / "o" / "mfcc.npy").shape == (600, 13)

    def test_resample(self, tmp_path):
        write_bundle(tmp_path / "b.hlfb", FeatureBundle("b", 29.97, {"faces": np.ones((2997, 1))}))
        assert main(["resample", "--bundle", str(tmp_path / "b.hlfb"), "--out", str(tmp_path / "o")]) == 0
        assert read_bundle(tmp_path / "o" / "b.hlfb").n_frames == 3000

    def test_agreement(self, data_dir, tmp_path):
        assert main(["agreement", "--data", str(data_dir), "--out", str(tmp_path)]) == 0
        assert (tmp_path / "agreement.csv").read_text().count("\n") == 7
        assert (tmp_path / "fig3_histograms.csv").read_text().startswith("statistic,bin_left")

    def test_train_evaluate_finetune_report(self, data_dir, tmp_path):
        run = tmp_path / "train"
        assert main(["train", "--data", str(data_dir), "--out", str(run), "--epochs", "2", "--folds", "2"]) == 0
        assert {p.name for p in run.iterdir()} == {"best.hlps", "history.csv", "model.json", "manifest.json"}
        best = json.loads((run / "manifest.json").read_text())["best_epoch"]
        assert (run / "history.csv").read_text().splitlines()[best + 1].endswith(",1")

        ev = tmp_path / "eval"
        assert main(["evaluate", "--checkpoint", str(run / "best.hlps"), "--data", str(data_dir), "--k", "5",
                     "--variant", "standard", "--out", str(ev)]) == 0
        summary = json.loads((ev / "evaluation.json").read_text())
        assert set(summary["means"]) == {"ndcg_paper_literal@5", "ndcg_standard@5", "precision@5"}

        ft = tmp_path / "ft"
        assert main(["finetune", "--checkpoint", str(run / "best.hlps"), "--data", str(data_dir), "--out", str(ft),
                     "--finetune_epochs", "1", "--finetune_folds", "2", "--finetune_videos", "6"] + FAST) == 0
        assert (ft / "table3.csv").read_text().startswith("metric,k,chance,baseline,fine_tuning")

        rep = tmp_path / "report"
        assert main(["report", str(ft), str(tmp_path / "missing"), "--out", str(rep)]) == 2
        assert main(["report", str(ft), "--out", str(rep)]) == 0
        assert (rep / "table3.csv").read_bytes() == (ft / "table3.csv").read_bytes()
        assert set(json.loads((rep / "fig2_boxplots.json").read_text())) == {"finetune/baseline",
                                                                             "finetune/fine_tuning"}

    def test_evaluate_needs_model_spec(self, data_dir, tmp_path, capsys):
        from avhighlight.autodiff import save_checkpoint
        from avhighlight.model import ModelSpec, init_params

        save_checkpoint(init_params(ModelSpec(modalities=("faces",))), tmp_path / "c.hlps")
        assert main(["evaluate", "--checkpoint", str(tmp_path / "c.hlps"), "--data", str(data_dir)]) == 2
        assert "--model" in capsys.readouterr().err

    def test_study_single(self, data_dir, tmp_path):
        assert main(["study-single", "--data", str(data_dir), "--out", str(tmp_path), "--k", "5"] + FAST) == 0
        header = (tmp_path / "table1.csv").read_text().splitlines()[0]
        assert header == "metric,k,googlenet,faces,chance"
        assert (tmp_path / "history_faces_fold1.csv").is_file()

    def test_study_ablation(self, data_dir, tmp_path):
        argv = ["study-ablation", "--data", str(data_dir), "--out", str(tmp_path), "--exclude", "faces",
                "--ablation_budget", "2000"] + FAST
        assert main(argv) == 0
        assert (tmp_path / "table2.csv").read_text().splitlines()[0] == "metric,k,no_faces,all_ccc"
