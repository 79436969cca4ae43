"""Scenario configuration and closed-loop simulation of the converter under a controller.

PI, constant-duty and ANN feedforward loops run through the compiled kernels;
any other controller (the PPO policy) is stepped sample by sample through
:class:`~boostctl.converter.BoostConverterEnv`.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import kernels
from .converter import (BoostConverterEnv, EpisodeSpec, InputProfile, get_params, R_CAP)
from .errors import ConfigurationError, NumericalBlowupError
from .metrics import Trajectory
from .pi import PIController, PIGains


@dataclass(frozen=True)
class ScenarioConfig:
    params_set: str = "desk"
    v_ref: float = 48.0
    profile: str = "fixed"
    horizon_steps: int = 5000
    v_up: float | None = None
    v_low: float | None = None
    seed: int = 0
    v_in: float = 24.0
    v_in_step: float = 26.0
    step_time: float = 0.5

    def __post_init__(self):
        if self.profile not in ("fixed", "step"):
            raise ConfigurationError(f"profile must be 'fixed' or 'step', got {self.profile!r}")
        get_params(self.params_set)
        self.episode_spec()

    @property
    def scenario_id(self):
        kind = "fixed" if self.profile == "fixed" else "variable"
        return f"{kind}-{self.v_ref:g}V"

    def params(self):
        return get_params(self.params_set)

    def input_profile(self):
        if self.profile == "fixed":
            return InputProfile.fixed(self.v_in)
        return InputProfile.step(self.v_in, self.v_in_step, self.step_time)

    def episode_spec(self):
        return EpisodeSpec(v_ref=self.v_ref, v_up=self.v_up, v_low=self.v_low,
                           horizon_steps=self.horizon_steps,
                           input_profile=self.input_profile())

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


# -- controllers --------------------------------------------------------------

class ConstantDuty:
    name = "constant"

    def __init__(self, duty):
        self.duty = float(duty)

    def reset(self):
        pass

    def __call__(self, obs, t, v_in, scenario):
        return self.duty


class PIControl:
    name = "pi"

    def __init__(self, gains, label="pi"):
        self.gains = gains if isinstance(gains, PIGains) else PIGains(*gains)
        self.name = label
        self._loop = None

    def reset(self):
        self._loop = None

    def __call__(self, obs, t, v_in, scenario):
        if self._loop is None:
            p = scenario.params()
            self._loop = PIController(self.gains, p.duty_min, p.duty_max)
        return self._loop(obs.error, scenario.params().dt)


def trajectory_rewards(v_out, spec, r_cap=R_CAP):
    """Per-sample rewards for an already simulated output series (no termination)."""
    v_out = np.asarray(v_out)
    v_ref, v_up, v_low = spec.v_ref, spec.v_up, spec.v_low
    flag = np.maximum.accumulate(v_out >= v_ref)
    err = np.abs(v_ref - v_out)
    with np.errstate(divide="ignore"):
        shaped = np.where(err * r_cap <= 1.0, r_cap, 1.0 / err)
    reward = np.where((v_out >= v_up) | ((v_out <= v_low) & flag), -1.0, shaped)
    reward[0] = 0.0
    return reward


def _run_generic(controller, scenario):
    params = scenario.params()
    spec = scenario.episode_spec()
    env = BoostConverterEnv(params, spec, terminate_on_limits=False)
    n = spec.horizon_steps
    t = np.arange(n + 1) * params.dt
    v_in = np.empty(n + 1)
    duty = np.empty(n + 1)
    i_l = np.zeros(n + 1)
    v_out = np.zeros(n + 1)
    reward = np.zeros(n + 1)
    obs = env.reset(scenario.seed)
    controller.reset()
    for k in range(n):
        vin_k = spec.input_profile.at(t[k])
        v_in[k] = vin_k
        obs, r, _ = env.step(controller(obs, t[k], vin_k, scenario))
        duty[k] = env.last_duty
        i_l[k + 1] = env.state.i_L
        v_out[k + 1] = env.state.v_C
        reward[k + 1] = r
    v_in[n] = spec.input_profile.at(t[n])
    duty[n] = duty[n - 1]
    return Trajectory(t, v_in, duty, i_l, v_out, reward, spec.v_ref, params.dt)


def _check_status(status, label):
    if status >= 0:
        raise NumericalBlowupError(f"{label}: non-finite state at step {status}", step=status)


def run_closed_loop(controller, scenario, fast=True):
    """Full-horizon trajectory of ``controller`` on ``scenario``; never terminates early."""
    params = scenario.params()
    spec = scenario.episode_spec()
    n = spec.horizon_steps
    kernel_path = isinstance(controller, (PIControl, ConstantDuty)) or hasattr(
        controller, "duty_schedule")
    if not (fast and kernel_path):
        return _run_generic(controller, scenario)

    v_in = spec.input_profile.sample(n, params.dt)
    t = np.arange(n + 1) * params.dt
    i_l = np.zeros(n + 1)
    v_out = np.zeros(n + 1)
    duty = np.empty(n + 1)
    h_args = (params.L, params.C, params.R, params.dt, int(params.substeps))
    if isinstance(controller, PIControl):
        status = kernels.simulate_pi(controller.gains.k_p, controller.gains.k_i, spec.v_ref,
                                     v_in, *h_args, params.duty_min, params.duty_max,
                                     i_l, v_out, duty)
    else:
        if isinstance(controller, ConstantDuty):
            duty[:] = params.clamp_duty(controller.duty)
        else:
            duty[:] = controller.duty_schedule(t, v_in, scenario)
        status = kernels.simulate_duty(duty, v_in, *h_args, i_l, v_out)
    _check_status(status, getattr(controller, "name", "controller"))
    reward = trajectory_rewards(v_out, spec)
    return Trajectory(t, v_in, duty, i_l, v_out, reward, spec.v_ref, params.dt)
