import json
import subprocess
import sys

import pytest

from idem_dqn.cli import build_parser, main

FAST = ["--episodes", "30", "--warmup", "50", "--batch-size", "16", "--buffer-capacity", "200",
        "--eval-episodes", "20", "--seeds", "1"]


def test_unknown_flag_exits_1_with_usage(capsys):
    assert main(["compare", "--bogus"]) == 1
    assert "usage:" in capsys.readouterr().err


def test_missing_subcommand(capsys):
    assert main([]) == 1
    assert "usage:" in capsys.readouterr().err


def test_invalid_config_value_exits_1(capsys, tmp_path):
    assert main(["compare", *FAST, "--gamma", "1.5", "--out", str(tmp_path)]) == 1
    assert "gamma" in capsys.readouterr().err


def test_unknown_map_exits_1(capsys, tmp_path):
    assert main(["compare", *FAST, "--map", str(tmp_path / "missing.txt"), "--out", str(tmp_path)]) == 1


def test_help_exits_0(capsys):
    assert main(["compare", "--help"]) == 0
    assert "--target-sync-every" in capsys.readouterr().out


def test_parser_defaults_follow_agent_config():
    args = build_parser().parse_args(["compare"])
    assert (args.lr, args.batch_size, args.buffer_capacity, args.episodes, args.seeds) == (1e-4, 1000, 3000, 3000, 10)
    assert build_parser().parse_args(["ablation"]).seeds == 5


def test_compare_writes_outputs(tmp_path, capsys):
    assert main(["compare", *FAST, "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "dqn" in out and "idem" in out
    assert (tmp_path / "summary.csv").exists() and (tmp_path / "metrics_idem_0.csv").exists()


def test_config_file_overrides_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"episodes": 12, "seed-base": 7}))
    assert main(["compare", *FAST, "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    saved = json.loads((tmp_path / "o" / "config.json").read_text())
    assert saved["agent"]["episodes"] == 12 and saved["seeds"] == [7]


def test_config_file_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert main(["compare", "--config", str(cfg)]) == 1
    assert "nonsense" in capsys.readouterr().err


def test_dynamic_and_eval(tmp_path, capsys):
    out = tmp_path / "dyn"
    assert main(["dynamic", *FAST, "--gap-min", "5", "--gap-max", "8", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["schedule"]["gap_range"] == [5, 8]
    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(out / "qnet_idem_0.npz"), "--eval-episodes", "10",
                 "--out", str(tmp_path / "ev.json")]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["episodes"] == 10 and 0.0 <= printed["win_rate"] <= 1.0
    assert json.loads((tmp_path / "ev.json").read_text()) == printed


def test_eval_map_mismatch(tmp_path, capsys):
    out = tmp_path / "c"
    assert main(["compare", *FAST, "--out", str(out)]) == 0
    assert main(["eval", "--checkpoint", str(out / "qnet_dqn_0.npz"), "--map", "8x8"]) == 1


def test_ablation_small_grid(tmp_path, capsys):
    assert main(["ablation", *FAST, "--lrs", "1e-4,1e-3", "--beta1s", "0.9", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "best win-rate cell" in out
    assert (tmp_path / "ablation.csv").exists()


def test_selftest_quick(capsys):
    assert main(["selftest", "--quick"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 5 and all(line.startswith("[PASS]") for line in lines)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "idem_dqn", "compare", "--nope"], capture_output=True, text=True)
    assert proc.returncode == 1 and "usage:" in proc.stderr


@pytest.mark.parametrize("argv", [["compare", "--seeds", "0"], ["dynamic", "--gap-min", "0"]])
def test_bad_run_settings_exit_1(argv, tmp_path):
    assert main([*argv, "--out", str(tmp_path)]) == 1
