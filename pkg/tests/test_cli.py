import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from inferno.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"


def tree(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(Path(d).rglob("*")) if p.is_file()}


class TestValidate:
    def test_shipped_configs(self, capsys):
        files = [str(p) for p in sorted(CONFIGS.glob("*.json"))]
        assert main(["validate", *files, str(CONFIGS / "data" / "recovery_200.json")]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.count(": ok") == len(files) + 1

    def test_config_flag(self):
        assert main(["validate", "--config", str(CONFIGS / "bandit.json")]) == EXIT_OK

    def test_invalid_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"schema": "inferno-config/1", "scenario": "bandit", "extra": 1}))
        assert main(["validate", str(bad)]) == EXIT_CONFIG
        assert "unknown key" in capsys.readouterr().err

    def test_trace_file(self, tmp_path):
        out = tmp_path / "run"
        assert main(["agent", "--config", str(CONFIGS / "tmaze.json"), "--out", str(out)]) == EXIT_OK
        assert main(["validate", str(out / "trace.jsonl")]) == EXIT_OK
        (tmp_path / "broken.jsonl").write_text('{"type": "meta"}\n')
        assert main(["validate", str(tmp_path / "broken.jsonl")]) == EXIT_CONFIG

    def test_nothing(self):
        assert main(["validate"]) == EXIT_USAGE


class TestUsage:
    def test_unknown_flag(self, capsys):
        assert main(["agent", "--config", "x.json", "--colour", "red"]) == EXIT_USAGE
        assert "usage:" in capsys.readouterr().err

    def test_missing_subcommand(self):
        assert main([]) == EXIT_USAGE

    def test_bad_numbers(self):
        assert main(["bmr-demo", "--seed", "-1"]) == EXIT_USAGE
        assert main(["bmr-demo", "--samples", "0"]) == EXIT_USAGE

    def test_console_script(self):
        r = subprocess.run([sys.executable, "-m", "inferno.cli", "--nope"], capture_output=True, text=True)
        assert r.returncode == EXIT_USAGE and "usage:" in r.stderr


class TestErrors:
    def test_wrong_subcommand_for_scenario(self, tmp_path):
        assert main(["agent", "--config", str(CONFIGS / "rescue.json"), "--out", str(tmp_path)]) == EXIT_CONFIG
        assert main(["empathy", "--config", str(CONFIGS / "bandit.json"), "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_missing_config(self, tmp_path):
        assert main(["agent", "--config", str(tmp_path / "none.json")]) == EXIT_CONFIG

    def test_runtime_failure(self, tmp_path):
        cfg = tmp_path / "learn.json"
        cfg.write_text(json.dumps({"schema": "inferno-config/1", "scenario": "structure_learn",
                                   "data": "missing.json"}))
        assert main(["structure-learn", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_RUNTIME


class TestOutputs:
    def test_bmr_demo_deterministic(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["bmr-demo", "--seed", "7", "--out", str(a)]) == EXIT_OK
        first = capsys.readouterr().out
        assert main(["bmr-demo", "--seed", "7", "--out", str(b)]) == EXIT_OK
        assert capsys.readouterr().out == first
        assert tree(a) == tree(b)
        assert set(tree(a)) == {"bmr.csv", "bmr.png"}
        rows = list(csv.DictReader(open(a / "bmr.csv")))
        assert len(rows) == 5 and all(abs(float(r["z"])) < 4 for r in rows)

    def test_agent_outputs(self, tmp_path):
        out = tmp_path / "bandit"
        argv = ["agent", "--config", str(CONFIGS / "bandit.json"), "--out", str(out), "--steps", "20",
                "--emit-plotdata"]
        assert main(argv) == EXIT_OK
        files = set(tree(out))
        assert {"trace.jsonl", "metrics.csv", "posterior.json", "actions.png", "plotdata/action.csv"} <= files
        metrics = dict(csv.reader(open(out / "metrics.csv")))
        assert "good_arm_rate" in metrics
        assert len((out / "trace.jsonl").read_text().splitlines()) == 21

    def test_empathy_outputs(self, tmp_path):
        out = tmp_path / "ph"
        assert main(["empathy", "--config", str(CONFIGS / "phenotype.json"), "--out", str(out),
                     "--steps", "10", "--seed", "3"]) == EXIT_OK
        assert {"trace.jsonl", "metrics.csv", "harm.png", "posterior.png"} <= set(tree(out))

    def test_seed_changes_output(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["empathy", "--config", str(CONFIGS / "rescue.json"), "--out", str(a), "--steps", "15"])
        main(["empathy", "--config", str(CONFIGS / "rescue.json"), "--out", str(b), "--steps", "15",
              "--seed", "1"])
        assert tree(a)["trace.jsonl"] != tree(b)["trace.jsonl"]

    @pytest.mark.parametrize("config", ["obedience.json", "rescue.json"])
    def test_empathy_deterministic(self, tmp_path, config):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            assert main(["empathy", "--config", str(CONFIGS / config), "--out", str(d), "--steps", "12"]) == EXIT_OK
        assert tree(a) == tree(b)
