"""Discrete PI duty controller with conditional-integration anti-windup."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigurationError

# tuned gains reported for the two metaheuristics
PUBLISHED_PSO = (0.002, 0.315)
PUBLISHED_GA = (0.0021, 0.314)


@dataclass(frozen=True)
class PIGains:
    k_p: float
    k_i: float

    def __post_init__(self):
        if not (math.isfinite(self.k_p) and math.isfinite(self.k_i)):
            raise ConfigurationError(f"non-finite PI gains ({self.k_p}, {self.k_i})")


@dataclass
class PIState:
    integral_accumulator: float = 0.0


def pi_reset():
    return PIState()


def pi_step(gains, state, e, dt, duty_min, duty_max):
    """One control sample: returns ``(duty, new_state)``.

    The error is integrated with the rectangle rule.  When the raw command
    saturates, this sample's integral increment is discarded.
    """
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    trial = state.integral_accumulator + e * dt
    raw = gains.k_p * e + gains.k_i * trial
    if raw > duty_max:
        return duty_max, PIState(state.integral_accumulator)
    if raw < duty_min:
        return duty_min, PIState(state.integral_accumulator)
    return raw, PIState(trial)


class PIController:
    """Stateful wrapper used by the closed-loop runner."""

    def __init__(self, gains, duty_min, duty_max):
        self.gains = gains
        self.duty_min = duty_min
        self.duty_max = duty_max
        self.state = pi_reset()

    def reset(self):
        self.state = pi_reset()

    def __call__(self, e, dt):
        duty, self.state = pi_step(self.gains, self.state, e, dt, self.duty_min, self.duty_max)
        return duty
