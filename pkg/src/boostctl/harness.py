"""Experiment grid: every controller on every scenario, metrics, reports.

Controller artifacts live in one directory:

``pi_pso.json`` / ``pi_ga.json``
    tuner outputs (only read when PI gains come from tuning)
``ann.json``
    trained feedforward controller
``ppo_<v_ref>/``
    PPO agent checkpoint trained at that reference

A missing or unreadable artifact fails only the cells that need it.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .ann import AnnController
from .errors import ConfigurationError
from .metrics import METRICS_HEADER, StepMetrics, mae, step_metrics, write_metrics_csv
from .pi import PUBLISHED_GA, PUBLISHED_PSO, PIGains
from .ppo import PPOControl, load_agent
from .simulate import PIControl, ScenarioConfig, run_closed_loop
from .tuning import load_gains

log = logging.getLogger(__name__)

CONTROLLERS = ("pi-pso", "pi-ga", "ann", "rl")
V_REFS = (48.0, 54.0, 60.0)
PROFILES = ("fixed", "step")
PUBLISHED_GAINS = {"pi-pso": PIGains(*PUBLISHED_PSO), "pi-ga": PIGains(*PUBLISHED_GA)}


class ArtifactError(ConfigurationError):
    """A controller artifact is missing or does not fit the requested scenario."""


def ppo_dir(artifacts, v_ref):
    return Path(artifacts) / f"ppo_{v_ref:g}"


def build_controller(name, scenario, artifacts=None, pi_source="published"):
    """Controller ``name`` ready for :func:`run_closed_loop` on ``scenario``."""
    if name in PUBLISHED_GAINS:
        if pi_source == "published":
            return PIControl(PUBLISHED_GAINS[name], label=name)
        if pi_source != "tuned":
            raise ConfigurationError(f"pi_source must be 'published' or 'tuned', got {pi_source!r}")
        path = _artifact(artifacts, f"pi_{name.split('-')[1]}.json")
        return PIControl(load_gains(path), label=name)
    if name == "ann":
        return AnnController.load(_artifact(artifacts, "ann.json"))
    if name == "rl":
        directory = _artifact(artifacts, ppo_dir("", scenario.v_ref).name)
        policy, _, header = load_agent(directory)
        trained_on = header.get("scenario", {})
        if trained_on and (trained_on.get("v_ref") != scenario.v_ref
                           or trained_on.get("params_set") != scenario.params_set):
            raise ArtifactError(f"{directory} was trained on {trained_on}, not on "
                                f"{scenario.params_set} at {scenario.v_ref:g} V")
        control = PPOControl(policy, header["config"].get("soft_start", 0.0))
        control.name = "rl"
        return control
    raise ConfigurationError(f"unknown controller {name!r}; choose from {CONTROLLERS}")


def _artifact(artifacts, name):
    if artifacts is None:
        raise ArtifactError(f"no artifact directory given for {name}")
    path = Path(artifacts) / name
    if not path.exists():
        raise ArtifactError(f"missing artifact {path}")
    return path


# -- report -------------------------------------------------------------------------

@dataclass
class ReportRow:
    controller: str
    scenario: str
    v_ref: float
    profile: str
    metrics: StepMetrics | None = None
    mae: float = math.nan
    status: str = "ok"
    error: str = ""

    def as_dict(self):
        m = self.metrics
        nan = math.nan
        return {"controller": self.controller, "scenario": self.scenario,
                "v_ref": self.v_ref, "profile": self.profile, "status": self.status,
                "error": self.error,
                "rise_s": m.rise_time if m else nan,
                "settle_s": m.settling_time if m else nan,
                "overshoot_pct": m.overshoot_pct if m else nan,
                "undershoot_pct": m.undershoot_pct if m else nan,
                "steady_state_error": m.steady_state_error if m else nan,
                "settled": bool(m.settled) if m else False,
                "mae": self.mae}

    @classmethod
    def from_dict(cls, doc):
        metrics = None
        if doc["status"] == "ok":
            metrics = StepMetrics(doc["rise_s"], doc["settle_s"], doc["overshoot_pct"],
                                  doc["undershoot_pct"], doc["steady_state_error"],
                                  doc["settled"])
        return cls(doc["controller"], doc["scenario"], doc["v_ref"], doc["profile"],
                   metrics, doc["mae"], doc["status"], doc.get("error", ""))


@dataclass
class Report:
    rows: list
    params_set: str = "desk"
    artifacts: str | None = None
    pi_source: str = "published"
    notes: dict = field(default_factory=dict)

    def row(self, controller, profile, v_ref):
        for r in self.rows:
            if r.controller == controller and r.profile == profile and r.v_ref == v_ref:
                return r
        return None

    @property
    def summary(self):
        failed = [f"{r.controller}/{r.scenario}" for r in self.rows if r.status != "ok"]
        return {"cells": len(self.rows), "ok": len(self.rows) - len(failed), "failed": failed}

    def to_dict(self):
        return {"format": "boostctl.report/1", "params_set": self.params_set,
                "artifacts": self.artifacts, "pi_source": self.pi_source,
                "notes": self.notes, "summary": self.summary,
                "rows": [r.as_dict() for r in self.rows]}

    @classmethod
    def from_dict(cls, doc):
        return cls([ReportRow.from_dict(r) for r in doc["rows"]], doc["params_set"],
                   doc.get("artifacts"), doc.get("pi_source", "published"), doc.get("notes", {}))

    def save(self, path):
        # NaN is not JSON; it is written as null and read back as NaN
        Path(path).write_text(json.dumps(_nan_to_none(self.to_dict()), indent=2) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(_none_to_nan(json.loads(Path(path).read_text())))


def _nan_to_none(obj):
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    return obj


def _none_to_nan(obj):
    if isinstance(obj, dict):
        return {k: (math.nan if v is None and k in _NUMERIC else _none_to_nan(v))
                for k, v in obj.items()}
    if isinstance(obj, list):
        return [_none_to_nan(v) for v in obj]
    return obj


_NUMERIC = {"rise_s", "settle_s", "overshoot_pct", "undershoot_pct", "steady_state_error", "mae"}


# -- experiment -------------------------------------------------------------------------

def evaluate_cell(name, scenario, artifacts=None, pi_source="published", trajectory_dir=None):
    """One :class:`ReportRow`; any failure is recorded in the row instead of raised."""
    row = ReportRow(name, scenario.scenario_id, scenario.v_ref, scenario.profile)
    try:
        controller = build_controller(name, scenario, artifacts, pi_source)
        traj = run_closed_loop(controller, scenario)
    except Exception as exc:  # noqa: BLE001 - a failed cell must not stop the grid
        row.status = "failed"
        row.error = f"{type(exc).__name__}: {exc}"
        log.warning("%s on %s failed: %s", name, scenario.scenario_id, row.error)
        return row
    row.metrics = step_metrics(traj)
    row.mae = mae(traj)
    if trajectory_dir is not None:
        Path(trajectory_dir).mkdir(parents=True, exist_ok=True)
        traj.to_csv(Path(trajectory_dir) / f"{name}_{scenario.scenario_id}.csv")
    return row


def run_experiment(artifacts=None, controllers=CONTROLLERS, v_refs=V_REFS, profiles=PROFILES,
                   params_set="desk", pi_source="published", out_dir=None, base=None):
    """Run the controller x reference x profile grid; writes outputs when ``out_dir`` is set."""
    base = base or ScenarioConfig(params_set=params_set)
    rows = []
    traj_dir = Path(out_dir) / "trajectories" if out_dir is not None else None
    for name in controllers:
        for profile in profiles:
            for v_ref in v_refs:
                scenario = ScenarioConfig.from_dict({**base.to_dict(), "params_set": params_set,
                                                     "v_ref": float(v_ref), "profile": profile})
                rows.append(evaluate_cell(name, scenario, artifacts, pi_source, traj_dir))
    report = Report(rows, params_set, str(artifacts) if artifacts is not None else None, pi_source)
    if out_dir is not None:
        write_outputs(report, out_dir)
    return report


def write_outputs(report, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out / "metrics.csv",
                      [r.as_dict() for r in report.rows if r.status == "ok"])
    report.save(out / "report.json")
    write_reference_comparison(report, out / "reference_comparison.csv")


# -- published reference values ------------------------------------------------------------

def reference_rows():
    text = resources.files("boostctl").joinpath("data/reference.json").read_text()
    return json.loads(text)["rows"]


def reference_row(controller, profile, v_ref):
    kind = "fixed" if profile == "fixed" else "variable"
    for r in reference_rows():
        if r["controller"] == controller and r["profile"] == kind and r["v_ref"] == v_ref:
            return r
    return None


COMPARISON_HEADER = ("controller", "scenario", "metric", "produced", "reference")
_METRIC_KEYS = ("rise_s", "settle_s", "overshoot_pct", "undershoot_pct")


def write_reference_comparison(report, path):
    """Long-format sheet pairing each produced metric with the published value."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COMPARISON_HEADER)
        for row in report.rows:
            ref = reference_row(row.controller, row.profile, row.v_ref)
            produced = row.as_dict()
            for key in _METRIC_KEYS:
                writer.writerow([row.controller, row.scenario, key,
                                 produced[key] if row.status == "ok" else "failed",
                                 ref[key] if ref else ""])


__all__ = ["CONTROLLERS", "V_REFS", "PROFILES", "METRICS_HEADER", "ArtifactError", "Report",
           "ReportRow", "build_controller", "evaluate_cell", "run_experiment", "write_outputs",
           "reference_rows", "reference_row", "write_reference_comparison", "ppo_dir"]
