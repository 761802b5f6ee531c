import json
from pathlib import Path

import pytest

from mixmode.cli import (
    DEFAULT_CONFIG,
    UsageError,
    config_hash,
    load_config,
    main,
)

SMALL = [
    "--set", "sft_size=250",
    "--set", "eval_size=150",
    "--set", "rl.dataset_size=80",
    "--set", "rl.epochs=1",
    "--set", "sft.epochs=2",
]


def run(args):
    return main([a for a in args if a])


class TestConfigHandling:
    def test_defaults_load_without_file(self):
        config = load_config(None, [])
        assert config == DEFAULT_CONFIG

    def test_missing_config_file_is_usage_error(self, tmp_path, capsys):
        code = main(["gen-data", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
        assert code == 2
        assert "nope.json" in capsys.readouterr().err

    def test_config_file_merges_over_defaults(self, tmp_path):
        file = tmp_path / "cfg.json"
        file.write_text(json.dumps({"seed": 9, "rl": {"algorithm": "grpo"}}))
        config = load_config(str(file), [])
        assert config["seed"] == 9
        assert config["rl"]["algorithm"] == "grpo"
        assert config["rl"]["group_size"] == 8  # untouched default

    def test_unknown_top_level_key_rejected(self, tmp_path):
        file = tmp_path / "cfg.json"
        file.write_text(json.dumps({"sneed": 1}))
        with pytest.raises(UsageError):
            load_config(str(file), [])

    def test_override_parses_json_values(self):
        config = load_config(None, ["rl.learning_rate=0.25", "env.mixture=[0.2,0.3,0.5]"])
        assert config["rl"]["learning_rate"] == 0.25
        assert config["env"]["mixture"] == [0.2, 0.3, 0.5]

    def test_bad_override_path_rejected(self):
        with pytest.raises(UsageError):
            load_config(None, ["rl.not_a_knob=1"])

    def test_hash_stable_and_sensitive(self):
        a = load_config(None, [])
        b = load_config(None, ["seed=1"])
        assert config_hash(a) == config_hash(load_config(None, []))
        assert config_hash(a) != config_hash(b)

    def test_invalid_config_value_is_exit_2(self, tmp_path):
        code = main(["gen-data", "--out", str(tmp_path), "--set", "rl.clip_range=7"])
        assert code == 2


class TestPipeline:
    def test_gen_data_is_byte_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(["gen-data", "--out", str(a), "--set", "seed=7", *SMALL]) == 0
        assert run(["gen-data", "--out", str(b), "--set", "seed=7", *SMALL]) == 0
        for name in ("sft_train.jsonl", "rl_train.jsonl", "eval.jsonl"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_artifacts_embed_config_hash(self, tmp_path):
        out = tmp_path / "run"
        args = ["--out", str(out), "--set", "seed=5", *SMALL]
        assert run(["gen-data", *args]) == 0
        assert run(["sft", *args]) == 0
        assert run(["train", *args]) == 0
        assert run(["eval", *args]) == 0
        digest = config_hash(load_config(None, ["seed=5"] + [s for s in SMALL if s != "--set"]))
        header = json.loads((out / "sft_train.jsonl").read_text().splitlines()[0])
        assert header["config_hash"] == digest
        ckpt = json.loads((out / "sft_checkpoint.json").read_text())
        assert ckpt["config_hash"] == digest
        report = json.loads((out / "metric_report.json").read_text())
        assert report["config_hash"] == digest
        log_line = json.loads((out / "mmpo_training_log.jsonl").read_text().splitlines()[0])
        assert log_line["config_hash"] == digest
        csv_text = (out / "metric_report.csv").read_text()
        assert digest in csv_text

    def test_train_without_checkpoint_is_usage_error(self, tmp_path, capsys):
        code = run(["train", "--out", str(tmp_path / "empty"), *SMALL])
        assert code == 2
        assert "sft_checkpoint" in capsys.readouterr().err

    def test_train_grpo_writes_algorithm_artifacts(self, tmp_path):
        out = tmp_path / "run"
        args = ["--out", str(out), "--set", "seed=2", *SMALL]
        assert run(["gen-data", *args]) == 0
        assert run(["sft", *args]) == 0
        assert run(["train", "--algorithm", "grpo", *args]) == 0
        assert (out / "grpo_checkpoint.json").is_file()
        assert (out / "grpo_training_log.jsonl").is_file()

    def test_eval_greedy_flag(self, tmp_path):
        out = tmp_path / "run"
        args = ["--out", str(out), "--set", "seed=2", *SMALL]
        assert run(["gen-data", *args]) == 0
        assert run(["sft", *args]) == 0
        assert run(["train", *args]) == 0
        assert run(["eval", "--greedy", *args]) == 0
        report = json.loads((out / "metric_report.json").read_text())
        assert report["decode"] == "greedy"

    def test_end_to_end_determinism(self, tmp_path):
        # compact version of the full determinism acceptance criterion
        reports = []
        for name in ("x", "y"):
            out = tmp_path / name
            args = ["--out", str(out), "--set", "seed=11", *SMALL]
            for command in (["gen-data"], ["sft"], ["train"], ["eval"]):
                assert run([*command, *args]) == 0
            reports.append((out / "metric_report.json").read_bytes())
        assert reports[0] == reports[1]

    def test_compare_emits_both_algorithms(self, tmp_path, capsys):
        out = tmp_path / "cmp"
        code = run(
            [
                "compare", "--out", str(out), "--set", "seed=1", "--set", "compare_seeds=1", *SMALL,
            ]
        )
        assert code == 0
        printed = capsys.readouterr().out
        assert "grpo" in printed and "mmpo" in printed
        assert "avg_tokens" in printed
        payload = json.loads((out / "comparison_report.json").read_text())
        run_row = payload["runs"][0]
        for algorithm in ("grpo", "mmpo"):
            assert {"accuracy", "f1", "precision", "recall", "avg_tokens"} <= set(
                run_row[algorithm]
            )
        assert (out / "seed_1" / "grpo_metric_report.json").is_file()

    def test_unknown_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as info:
            main(["frobnicate"])
        assert info.value.code == 2
