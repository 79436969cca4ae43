"""Averaged boost-converter plant and the reinforcement-learning environment around it.

State is ``(i_L, v_C)``.  The two switch modes are

    closed:  L di/dt = v_in              C dv/dt = -v/R
    open:    L di/dt = v_in - v          C dv/dt = i - v/R

and the averaged model blends them with weights ``d`` and ``1 - d``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import ConfigurationError, NumericalBlowupError, UsageError

R_CAP = 1000.0
# duty soft-start used by the feedforward and learned controllers, a few LC periods
SOFT_START = 0.005


@dataclass(frozen=True)
class ConverterParams:
    v_in_nominal: float = 24.0
    R: float = 50.0
    L: float = 10e-6
    C: float = 400e-6
    duty_min: float = 0.05
    duty_max: float = 0.95
    dt: float = 2e-4
    # RK4 sub-steps per control sample; the duty is held across all of them
    substeps: int = 20

    def __post_init__(self):
        for name in ("v_in_nominal", "R", "L", "C", "dt"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigurationError(f"{name} must be positive and finite, got {value}")
        if not 0.0 <= self.duty_min < self.duty_max < 1.0:
            raise ConfigurationError(
                f"need 0 <= duty_min < duty_max < 1, got [{self.duty_min}, {self.duty_max}]"
            )
        if int(self.substeps) < 1:
            raise ConfigurationError("substeps must be >= 1")

    def clamp_duty(self, duty):
        return min(max(duty, self.duty_min), self.duty_max)


PARAM_SETS = {
    # Table values as published: C = 400 mF puts RC at 20 s
    "paper": ConverterParams(C=0.4),
    # identical except C = 400 uF, which gives sub-second closed-loop dynamics
    "desk": ConverterParams(C=400e-6),
}


def get_params(name):
    try:
        return PARAM_SETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown parameter set {name!r}; choose from {sorted(PARAM_SETS)}"
        ) from None


@dataclass(frozen=True)
class ConverterState:
    i_L: float = 0.0
    v_C: float = 0.0

    def as_array(self):
        return np.array([self.i_L, self.v_C])


@dataclass(frozen=True)
class InputProfile:
    """Input-voltage schedule: constant, or a single step at ``step_time``."""

    kind: str = "fixed"
    v_initial: float = 24.0
    v_final: float = 24.0
    step_time: float = 0.5

    def __post_init__(self):
        if self.kind not in ("fixed", "step"):
            raise ConfigurationError(f"profile kind must be 'fixed' or 'step', got {self.kind!r}")
        if self.v_initial <= 0 or self.v_final <= 0:
            raise ConfigurationError("input voltages must be positive")
        if self.step_time < 0:
            raise ConfigurationError("step_time must be non-negative")

    @classmethod
    def fixed(cls, v_in=24.0):
        return cls("fixed", v_in, v_in, 0.0)

    @classmethod
    def step(cls, v_initial=24.0, v_final=26.0, step_time=0.5):
        return cls("step", v_initial, v_final, step_time)

    def at(self, t):
        if self.kind == "fixed":
            return self.v_initial
        return self.v_initial if t < self.step_time else self.v_final

    def sample(self, n_steps, dt):
        """Input voltage at ``t_k = k*dt`` for ``k = 0..n_steps``."""
        return np.array([self.at(k * dt) for k in range(n_steps + 1)], dtype=np.float64)


def input_profile_at(profile, t):
    return profile.at(t)


@dataclass(frozen=True)
class EpisodeSpec:
    v_ref: float = 48.0
    v_up: float | None = None
    v_low: float | None = None
    # declared by the reward algorithm but never used in its body; kept for reference
    e_th: float | None = None
    horizon_steps: int = 5000
    input_profile: InputProfile = field(default_factory=InputProfile.fixed)

    def __post_init__(self):
        if self.v_up is None:
            object.__setattr__(self, "v_up", 1.2 * self.v_ref)
        if self.v_low is None:
            object.__setattr__(self, "v_low", 0.8 * self.v_ref)
        if self.e_th is None:
            object.__setattr__(self, "e_th", 0.02 * self.v_ref)
        if not self.v_low < self.v_ref < self.v_up:
            raise ConfigurationError(
                f"need v_low < v_ref < v_up, got {self.v_low}, {self.v_ref}, {self.v_up}"
            )
        if int(self.horizon_steps) < 1:
            raise ConfigurationError("horizon_steps must be >= 1")


class Observation(NamedTuple):
    v_out: float
    error: float
    error_rate: float


# -- plant ------------------------------------------------------------------

def modal_matrices(params):
    """``(A1, B1, A2, B2)`` for the switch-closed and switch-open modes."""
    L, C, R = params.L, params.C, params.R
    A1 = np.array([[0.0, 0.0], [0.0, -1.0 / (R * C)]])
    B1 = np.array([1.0 / L, 0.0])
    A2 = np.array([[0.0, -1.0 / L], [1.0 / C, -1.0 / (R * C)]])
    B2 = np.array([1.0 / L, 0.0])
    return A1, B1, A2, B2


def averaged_matrices(params, duty):
    A1, B1, A2, B2 = modal_matrices(params)
    return A1 * duty + A2 * (1.0 - duty), B1 * duty + B2 * (1.0 - duty)


def _check_duty(duty):
    if not (0.0 <= duty < 1.0):
        raise ConfigurationError(f"duty must lie in [0, 1), got {duty}")


def averaged_derivative(params, state, duty, v_in):
    """``(di_L/dt, dv_C/dt)`` of the averaged model."""
    _check_duty(duty)
    off = 1.0 - duty
    di = (v_in - off * state.v_C) / params.L
    dv = (off * state.i_L - state.v_C / params.R) / params.C
    return di, dv


def integrate_step(params, state, duty, v_in, dt=None, substeps=None):
    """Advance one sample with duty and input held (zero-order hold).

    The sample is split into ``substeps`` classical RK4 steps (default
    ``params.substeps``).  The diode is modelled inside each stage: a
    negative current is treated as zero and a zero current cannot fall
    further.  ``i_L`` is also clamped at zero after every substep.
    """
    _check_duty(duty)
    dt = params.dt if dt is None else dt
    n = params.substeps if substeps is None else int(substeps)
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    i_l, v_c = kernels.rk4_advance(float(state.i_L), float(state.v_C), float(duty),
                                   float(v_in), params.L, params.C, params.R, dt / n, n)
    if not (math.isfinite(i_l) and math.isfinite(v_c)):
        raise NumericalBlowupError(
            f"non-finite state after integrating from {state} with duty={duty}, v_in={v_in}"
        )
    return ConverterState(i_l, v_c)


def equilibrium(params, duty, v_in):
    """Steady state of the averaged model: ``v = v_in/(1-d)``, ``i = v/(R(1-d))``."""
    v = v_in / (1.0 - duty)
    return ConverterState(v / (params.R * (1.0 - duty)), v)


def soft_start_duty(t, duty, duty_min, duration):
    """Scale a duty command up from ``duty_min`` linearly over the first ``duration`` seconds.

    Limits inrush when a controller commands its operating duty from a
    discharged output capacitor; ``duration <= 0`` passes the command through.
    """
    if duration <= 0:
        return duty
    frac = np.clip(np.asarray(t, dtype=np.float64) / duration, 0.0, 1.0)
    return duty_min + frac * (np.asarray(duty, dtype=np.float64) - duty_min)


# -- reward -----------------------------------------------------------------

def reward_step(v_out, v_ref, v_up, v_low, flag, r_cap=R_CAP):
    """Reward, updated flag and termination for one sample.

    The flag latches once the output has reached the reference.  Exceeding
    ``v_up``, or falling to ``v_low`` after the flag is set, ends the episode
    with reward -1; otherwise the reward is ``1/|e|`` capped at ``r_cap``.
    """
    flag = bool(flag) or v_out >= v_ref
    if v_out >= v_up or (v_out <= v_low and flag):
        return -1.0, flag, True
    err = abs(v_ref - v_out)
    reward = r_cap if err * r_cap <= 1.0 else 1.0 / err
    return reward, flag, False


# -- environment ------------------------------------------------------------

class BoostConverterEnv:
    """Episode wrapper: duty in, ``(Observation, reward, done)`` out.

    With ``terminate_on_limits=False`` the limit checks still shape the reward
    but never end the episode early (used for evaluation runs).
    """

    def __init__(self, params, spec, terminate_on_limits=True, r_cap=R_CAP):
        self.params = params
        self.spec = spec
        self.terminate_on_limits = terminate_on_limits
        self.r_cap = r_cap
        self.seed = None
        self.reset()

    def reset(self, seed=None):
        # the plant is deterministic; the seed is recorded for provenance only
        self.seed = seed
        self.state = ConverterState(0.0, 0.0)
        self.flag = False
        self.steps = 0
        self.done = False
        self.last_duty = None
        self.last_v_in = None
        self.observation = Observation(0.0, self.spec.v_ref, 0.0)
        return self.observation

    @property
    def t(self):
        return self.steps * self.params.dt

    def step(self, action_duty):
        if self.done:
            raise UsageError("episode is done; call reset() before stepping again")
        if not math.isfinite(action_duty):
            raise NumericalBlowupError(f"non-finite action {action_duty} at step {self.steps}",
                                       step=self.steps)
        duty = self.params.clamp_duty(float(action_duty))
        v_in = self.spec.input_profile.at(self.t)
        try:
            self.state = integrate_step(self.params, self.state, duty, v_in)
        except NumericalBlowupError as exc:
            raise NumericalBlowupError(f"step {self.steps}: {exc}", step=self.steps) from exc
        self.steps += 1
        self.last_duty = duty
        self.last_v_in = v_in
        v_out = self.state.v_C
        error = self.spec.v_ref - v_out
        rate = (error - self.observation.error) / self.params.dt
        self.observation = Observation(v_out, error, rate)
        reward, self.flag, terminate = reward_step(
            v_out, self.spec.v_ref, self.spec.v_up, self.spec.v_low, self.flag, self.r_cap
        )
        if not self.terminate_on_limits:
            terminate = False
        self.done = terminate or self.steps >= self.spec.horizon_steps
        return self.observation, reward, self.done


def with_substeps(params, substeps):
    return replace(params, substeps=substeps)
