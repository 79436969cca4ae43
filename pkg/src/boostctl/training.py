"""Artifact producers: tuned PI gains, the trained ANN and PPO agents.

These wrap the algorithm modules with the file layout the harness reads
(see :mod:`boostctl.harness`) and are what the CLI subcommands call.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path

from .ann import AnnController, AnnTrainConfig, generate_dataset, train_ann
from .errors import NumericalBlowupError
from .metrics import Trajectory
from .ppo import (FALLBACK_LR, PPOConfig, PPOControl, TrainResult, make_agent,
                  nominal_duty, save_agent, train)
from .simulate import ScenarioConfig, run_closed_loop
from .tuning import save_tuning_result, tune_pi

log = logging.getLogger(__name__)

# a PPO round whose mean probability ratio leaves this band has moved the
# policy far outside the clipped trust region
RATIO_BAND = (0.5, 2.0)


def tune_pi_artifacts(out_dir, scenario=None, seed=0, workers=1, methods=("pso", "ga")):
    """Tune with each method and write ``pi_<method>.json``; returns the documents."""
    scenario = scenario or ScenarioConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    docs = {}
    for method in methods:
        candidate, history = tune_pi(method, scenario, seed=seed, workers=workers)
        docs[method] = save_tuning_result(out / f"pi_{method}.json", method, candidate, history)
        log.info("%s gains k_p=%.5f k_i=%.5f mae=%.4f", method, *candidate.position,
                 candidate.fitness)
    return docs


def train_ann_artifact(out_dir, seed=0, n=100_000, config=None):
    """Train the duty network and write ``ann.json``; returns ``(controller, train, test)`` MSE."""
    dataset = generate_dataset(n=n, seed=seed)
    net, train_mse, test_mse = train_ann(dataset, config or AnnTrainConfig(seed=seed))
    controller = AnnController(net, dataset.v_in_range, dataset.v_target_range)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        controller.save(Path(out_dir) / "ann.json")
    return controller, train_mse, test_mse


# -- PPO -------------------------------------------------------------------------------

class DivergenceError(NumericalBlowupError):
    """Training left the trust region or produced non-finite numbers."""


def divergence_reason(stats):
    """Why an update round counts as diverged, or ``''`` if it does not."""
    values = (stats.actor_loss, stats.critic_loss, stats.mean_ratio)
    if not all(math.isfinite(v) for v in values):
        return "non-finite loss or ratio"
    lo, hi = RATIO_BAND
    if not lo <= stats.mean_ratio <= hi:
        return f"mean probability ratio {stats.mean_ratio:.3g} outside [{lo:g}, {hi:g}]"
    return ""


def _watch(episode, buffer, stats, policy, critic):
    reason = divergence_reason(stats)
    if reason:
        raise DivergenceError(f"episode {episode}: {reason}", step=episode)


def env_factory(scenario):
    from .converter import BoostConverterEnv
    return lambda: BoostConverterEnv(scenario.params(), scenario.episode_spec())


@dataclass
class TrainingOutcome:
    result: TrainResult
    scenario: ScenarioConfig
    learning_rate: float
    diverged_default: bool
    divergence: str
    untrained_trajectory: Trajectory
    trained_trajectory: Trajectory
    seconds: float

    def header_extra(self):
        return {"scenario": self.scenario.to_dict(), "learning_rate": self.learning_rate,
                "diverged_default": self.diverged_default, "divergence": self.divergence,
                "untrained_final_abs_error": _final_abs_error(self.untrained_trajectory),
                "trained_final_abs_error": _final_abs_error(self.trained_trajectory),
                "train_seconds": self.seconds}


def _final_abs_error(traj, window=0.2):
    n = int(round(window / traj.dt))
    return float(abs(traj.v_ref - traj.v_out[-n:]).mean())


def train_with_fallback(scenario, config=None, fallback_lr=FALLBACK_LR):
    """Train with ``config``; if it diverges, retrain from scratch at ``fallback_lr``.

    Returns ``(result, learning_rate, diverged, reason)``.  Divergence is
    watched after every update round so a collapse aborts at once.
    """
    config = config or PPOConfig()
    try:
        result = train(env_factory(scenario), config, callback=_watch)
        return result, config.lr_actor, False, ""
    except NumericalBlowupError as exc:
        reason = str(exc)
    log.warning("PPO at lr %g diverged (%s); retraining at %g", config.lr_actor, reason,
                fallback_lr)
    retry = replace(config, lr_actor=fallback_lr, lr_critic=fallback_lr)
    return train(env_factory(scenario), retry), fallback_lr, True, reason


def evaluate_policy(policy, scenario, soft_start):
    return run_closed_loop(PPOControl(policy, soft_start), scenario)


def train_for_reference(v_ref=48.0, seed=0, params_set="desk", config=None, out_dir=None):
    """Train one agent on the fixed-input scenario at ``v_ref`` and evaluate it.

    With ``out_dir`` the checkpoint goes to ``out_dir/ppo_<v_ref>/``.
    """
    from .harness import ppo_dir

    scenario = ScenarioConfig(params_set=params_set, v_ref=float(v_ref), seed=seed)
    config = config or PPOConfig(seed=seed)
    start = time.perf_counter()
    p = scenario.params()
    untrained, _ = make_agent(config, p.duty_min, p.duty_max, nominal_duty(p, scenario.v_ref))
    result, lr, diverged, reason = train_with_fallback(scenario, config)
    seconds = time.perf_counter() - start
    outcome = TrainingOutcome(result, scenario, lr, diverged, reason,
                              evaluate_policy(untrained, scenario, config.soft_start),
                              evaluate_policy(result.policy, scenario, config.soft_start),
                              seconds)
    if out_dir is not None:
        save_agent(ppo_dir(out_dir, v_ref), result, outcome.header_extra())
    return outcome


def ensure_artifacts(directory, v_refs=(48.0, 54.0, 60.0), seed=0, params_set="desk"):
    """Produce whichever of the tuned gains, ANN and PPO agents are missing in ``directory``."""
    from .harness import ppo_dir

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    missing = [m for m in ("pso", "ga") if not (out / f"pi_{m}.json").exists()]
    if missing:
        tune_pi_artifacts(out, ScenarioConfig(params_set=params_set), seed, methods=missing)
    if not (out / "ann.json").exists():
        train_ann_artifact(out, seed)
    for v_ref in v_refs:
        if not (ppo_dir(out, v_ref) / "agent.json").exists():
            train_for_reference(v_ref, seed, params_set, out_dir=out)
    return out
