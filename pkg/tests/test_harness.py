import csv
import json
import math

import pytest

from boostctl.ann import AnnController
from boostctl.checks import check_orderings
from boostctl.errors import ConfigurationError
from boostctl.harness import (ArtifactError, Report, build_controller, reference_row,
                              reference_rows, run_experiment)
from boostctl.metrics import StepMetrics
from boostctl.nn import MLP
from boostctl.ppo import PPOConfig, save_agent, train
from boostctl.simulate import ScenarioConfig
from boostctl.training import env_factory


def test_reference_sheet_rows():
    rows = reference_rows()
    assert len(rows) == 24
    ga = reference_row("pi-ga", "fixed", 48.0)
    assert (ga["rise_s"], ga["settle_s"]) == (0.005, 0.35)
    rl = reference_row("rl", "step", 48.0)
    assert (rl["rise_s"], rl["settle_s"], rl["overshoot_pct"]) == (0.093, 0.163, 0.347)
    rl_fixed = reference_row("rl", "fixed", 48.0)
    assert (rl_fixed["rise_s"], rl_fixed["settle_s"], rl_fixed["overshoot_pct"]) == \
        (0.056, 0.123, 0.364)


def test_grid_without_artifacts_marks_failures(tmp_path):
    report = run_experiment(tmp_path / "none", out_dir=tmp_path / "out")
    assert len(report.rows) == 24
    failed = {r.controller for r in report.rows if r.status != "ok"}
    assert failed == {"ann", "rl"}
    assert all("missing artifact" in r.error for r in report.rows if r.status != "ok")
    assert report.summary["ok"] == 12
    for name in ("metrics.csv", "report.json", "reference_comparison.csv"):
        assert (tmp_path / "out" / name).exists()
    with open(tmp_path / "out" / "reference_comparison.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 24 * 4
    assert any(r["produced"] == "failed" for r in rows)


def test_report_round_trip_keeps_nan(tmp_path):
    report = run_experiment(None, controllers=("pi-pso", "ann"), v_refs=(48.0,),
                            profiles=("fixed",))
    report.save(tmp_path / "r.json")
    back = Report.load(tmp_path / "r.json")
    assert back.rows[0].as_dict() == report.rows[0].as_dict()
    assert math.isnan(back.rows[1].mae) and back.rows[1].status == "failed"
    assert json.loads((tmp_path / "r.json").read_text())["rows"][1]["mae"] is None


def test_experiment_is_byte_identical(tmp_path):
    for k in range(2):
        run_experiment(None, controllers=("pi-pso",), out_dir=tmp_path / str(k))
    for name in ("metrics.csv", "report.json", "reference_comparison.csv"):
        assert (tmp_path / "0" / name).read_bytes() == (tmp_path / "1" / name).read_bytes()


def test_build_controller_paths(tmp_path):
    sc = ScenarioConfig()
    assert build_controller("pi-ga", sc).gains.k_p == 0.0021
    with pytest.raises(ConfigurationError):
        build_controller("mpc", sc)
    with pytest.raises(ConfigurationError):
        build_controller("pi-pso", sc, tmp_path, pi_source="guess")
    with pytest.raises(ArtifactError):
        build_controller("pi-pso", sc, tmp_path, pi_source="tuned")
    with pytest.raises(ArtifactError):
        build_controller("ann", sc)
    AnnController(MLP.init([2, 4, 1])).save(tmp_path / "ann.json")
    assert build_controller("ann", sc, tmp_path).name == "ann"


def test_rl_checkpoint_must_match_scenario(tmp_path):
    sc = ScenarioConfig(horizon_steps=50)
    cfg = PPOConfig(episodes=1, epochs=1, hidden_layers=1, neurons=4, lr_actor=1e-3,
                    lr_critic=1e-3)
    result = train(env_factory(sc), cfg)
    save_agent(tmp_path / "ppo_48", result, {"scenario": sc.to_dict()})
    assert build_controller("rl", sc, tmp_path).name == "rl"
    with pytest.raises(ArtifactError):
        build_controller("rl", ScenarioConfig(params_set="paper", horizon_steps=50), tmp_path)


def _fake_report(pi_os=2.0, rl_os=0.3, rl_fixed=0.1, rl_step=0.12, ann_settle=0.2):
    from boostctl.harness import ReportRow
    rows = []
    values = {("rl", "fixed"): (rl_fixed, 0.3), ("rl", "step"): (rl_step, rl_os),
              ("ann", "fixed"): (ann_settle, 0.0), ("ann", "step"): (ann_settle, 0.0),
              ("pi-pso", "fixed"): (0.2, 5.0), ("pi-pso", "step"): (0.5, pi_os),
              ("pi-ga", "fixed"): (0.2, 5.0), ("pi-ga", "step"): (0.5, pi_os)}
    for (name, profile), (settle, os_pct) in values.items():
        for v in (48.0, 54.0, 60.0):
            rows.append(ReportRow(name, f"{profile}-{v:g}V", v, profile,
                                  StepMetrics(0.01, settle, os_pct, 0.0, 0.0, True), 0.1))
    return Report(rows)


def test_orderings_pass_on_consistent_report():
    assert check_orderings(_fake_report()).status == "pass"


def test_orderings_fail_loudly():
    result = check_orderings(_fake_report(pi_os=0.1))
    assert result.status == "fail" and "(a)" in result.detail and "FAIL" in result.detail
    assert check_orderings(_fake_report(rl_step=0.2)).status == "fail"
    assert check_orderings(_fake_report(ann_settle=0.05)).status == "fail"


def test_orderings_skip_without_cells():
    assert check_orderings(Report([])).status == "skipped"
