import json

import pytest

from boostctl.cli import build_parser, main


def test_parser_has_all_subcommands():
    parser = build_parser()
    for cmd in ("simulate", "tune-pi", "train-ann", "train-ppo", "evaluate", "verify", "report"):
        args = parser.parse_args([cmd, "r.json"] if cmd == "report" else [cmd])
        assert args.command == cmd


def test_simulate_pi(tmp_path, capsys):
    assert main(["simulate", "--kp", "0.002", "--ki", "0.315", "--out", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["settled"] and (tmp_path / "pi_fixed-48V.csv").exists()


def test_simulate_with_config_file(tmp_path, capsys):
    cfg = tmp_path / "sc.json"
    cfg.write_text(json.dumps({"v_ref": 54.0, "profile": "step"}))
    assert main(["simulate", "--config", str(cfg), "--controller", "constant", "--duty", "0.5",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "constant_variable-54V.csv").exists()


def test_unknown_config_key_is_rejected(tmp_path, capsys):
    cfg = tmp_path / "sc.json"
    cfg.write_text(json.dumps({"v_ref": 54.0, "colour": "red"}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "colour" in capsys.readouterr().err


def test_evaluate_and_report(tmp_path, capsys):
    status = main(["evaluate", "--artifacts", str(tmp_path / "none"), "--out", str(tmp_path)])
    assert status == 1  # ann and rl cells fail without artifacts
    summary = json.loads(capsys.readouterr().out)
    assert summary["cells"] == 24 and summary["ok"] == 12
    assert main(["report", str(tmp_path / "report.json")]) == 0
    text = capsys.readouterr().out
    assert "pi-pso" in text and "failed" in text


def test_train_ann_small(tmp_path, capsys):
    assert main(["train-ann", "--samples", "500", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "ann.json").exists()


def test_verify_without_artifacts_skips_and_fails(tmp_path, capsys):
    status = main(["verify", "--out", str(tmp_path)])
    lines = capsys.readouterr().out.splitlines()
    assert status == 1
    assert any("SKIPPED" in line and "PPO" in line for line in lines)
    verdict = json.loads((tmp_path / "verdict.json").read_text())
    assert not verdict["passed"] and len(verdict["criteria"]) == 11


@pytest.mark.parametrize("argv", [["simulate", "--params", "bench"], ["nope"]])
def test_bad_arguments_exit(argv):
    with pytest.raises(SystemExit):
        main(argv)
