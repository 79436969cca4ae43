import math

import numpy as np
import pytest

from boostctl.converter import (BoostConverterEnv, ConverterParams, ConverterState, EpisodeSpec,
                                InputProfile, averaged_derivative, averaged_matrices,
                                equilibrium, get_params, integrate_step, reward_step,
                                soft_start_duty)
from boostctl.errors import ConfigurationError, NumericalBlowupError, UsageError

PAPER = get_params("paper")
DESK = get_params("desk")


def test_parameter_sets():
    assert PAPER.C == 0.4 and DESK.C == 400e-6
    for p in (PAPER, DESK):
        assert (p.R, p.L, p.v_in_nominal, p.dt) == (50.0, 10e-6, 24.0, 2e-4)
    with pytest.raises(ConfigurationError):
        get_params("bench")


def test_invalid_params():
    with pytest.raises(ConfigurationError):
        ConverterParams(R=0.0)
    with pytest.raises(ConfigurationError):
        ConverterParams(duty_min=0.9, duty_max=0.5)


def test_derivative_from_rest_hand_values():
    di, dv = averaged_derivative(PAPER, ConverterState(0.0, 0.0), 0.5, 24.0)
    assert di == pytest.approx(2.4e6)
    assert dv == 0.0


def test_equilibrium_probe_is_stationary():
    di, dv = averaged_derivative(PAPER, ConverterState(1.92, 48.0), 0.5, 24.0)
    assert di == pytest.approx(0.0, abs=1e-6) and dv == pytest.approx(0.0, abs=1e-9)
    eq = equilibrium(PAPER, 0.5, 24.0)
    assert (eq.i_L, eq.v_C) == pytest.approx((1.92, 48.0))


def test_averaged_matrix_eigenvalues_are_stable():
    for d in (0.1, 0.5, 0.9):
        A, _ = averaged_matrices(DESK, d)
        assert np.all(np.linalg.eigvals(A).real < 0)


def _euler_oracle(params, duty, v_in, horizon, h):
    i = v = 0.0
    off = 1.0 - duty
    for _ in range(int(round(horizon / h))):
        i, v = i + h * (v_in - off * v) / params.L, v + h * (off * i - v / params.R) / params.C
    return np.array([i, v])


def test_one_sample_matches_fine_euler_oracle():
    params = DESK
    s = integrate_step(params, ConverterState(), 0.5, 24.0)
    # Richardson extrapolation lifts the dt/1000 Euler oracle to second order
    h = params.dt / 1000
    ref = 2 * _euler_oracle(params, 0.5, 24.0, params.dt, h / 2) - \
        _euler_oracle(params, 0.5, 24.0, params.dt, h)
    rel = np.linalg.norm(s.as_array() - ref) / np.linalg.norm(ref)
    assert rel <= 1e-6


def test_long_integration_converges_to_equilibrium():
    s = ConverterState()
    for _ in range(5000):
        s = integrate_step(DESK, s, 0.5, 24.0)
    assert s.v_C == pytest.approx(48.0, rel=1e-6)
    assert s.i_L == pytest.approx(1.92, rel=1e-6)


def test_diode_blocks_reverse_current():
    # output far above v_in/(1-d): the inductor current must not go negative
    s = ConverterState(0.0, 80.0)
    for _ in range(50):
        s = integrate_step(DESK, s, 0.3, 24.0)
        assert s.i_L >= 0.0
    # with the diode blocking, the capacitor only discharges into R
    expected = 80.0 * math.exp(-50 * DESK.dt / (DESK.R * DESK.C))
    assert s.v_C == pytest.approx(expected, rel=1e-6)


def test_substep_convergence():
    coarse = fine = ConverterState()
    for _ in range(500):
        coarse = integrate_step(DESK, coarse, 0.5, 24.0)
        fine = integrate_step(DESK, fine, 0.5, 24.0, substeps=200)
    assert abs(coarse.v_C - fine.v_C) < 0.05


def test_integrate_rejects_bad_duty_and_blowup():
    with pytest.raises(ConfigurationError):
        integrate_step(DESK, ConverterState(), 1.0, 24.0)
    with pytest.raises(NumericalBlowupError):
        integrate_step(DESK, ConverterState(math.inf, 0.0), 0.5, 24.0)


def test_input_profiles():
    assert InputProfile.fixed(24.0).at(0.7) == 24.0
    step = InputProfile.step(24.0, 26.0, 0.5)
    assert step.at(0.49) == 24.0 and step.at(0.5) == 26.0
    with pytest.raises(ConfigurationError):
        InputProfile("ramp")


def test_reward_cases():
    assert reward_step(46.0, 48.0, 57.6, 38.4, False) == (0.5, False, False)
    assert reward_step(58.0, 48.0, 57.6, 38.4, False) == (-1.0, True, True)
    r, flag, done = reward_step(48.0005, 48.0, 57.6, 38.4, False)
    assert flag and not done and r == 1000.0
    assert reward_step(38.0, 48.0, 57.6, 38.4, flag) == (-1.0, True, True)
    # before the flag latches, a low output is not a violation
    assert reward_step(38.0, 48.0, 57.6, 38.4, False)[2] is False


def test_reward_bounds():
    for v in np.linspace(0.0, 70.0, 701):
        r, _, done = reward_step(v, 48.0, 57.6, 38.4, True)
        assert -1.0 <= r <= 1000.0
        assert (r == -1.0) == done


def test_episode_spec_defaults_and_validation():
    spec = EpisodeSpec(v_ref=48.0)
    assert spec.v_up == pytest.approx(57.6) and spec.v_low == pytest.approx(38.4)
    with pytest.raises(ConfigurationError):
        EpisodeSpec(v_ref=48.0, v_up=40.0)


def test_env_full_horizon_spans_one_second():
    env = BoostConverterEnv(DESK, EpisodeSpec(), terminate_on_limits=False)
    done = False
    while not done:
        obs, r, done = env.step(0.5)
    assert env.steps == 5000 and env.t == pytest.approx(1.0)
    assert obs.v_out == pytest.approx(48.0, rel=1e-3)
    with pytest.raises(UsageError):
        env.step(0.5)


def test_env_observation_and_clamping():
    env = BoostConverterEnv(DESK, EpisodeSpec())
    obs0 = env.reset()
    assert obs0 == (0.0, 48.0, 0.0)
    obs, _, _ = env.step(2.0)
    assert env.last_duty == DESK.duty_max
    assert obs.error == pytest.approx(48.0 - obs.v_out)
    assert obs.error_rate == pytest.approx((obs.error - 48.0) / DESK.dt)
    with pytest.raises(NumericalBlowupError):
        env.step(math.nan)


def test_env_terminates_on_overvoltage():
    env = BoostConverterEnv(DESK, EpisodeSpec(horizon_steps=5000))
    done, steps = False, 0
    while not done:
        _, r, done = env.step(0.95)
        steps += 1
    assert r == -1.0 and steps < 5000


def test_soft_start_ramp():
    assert soft_start_duty(0.0, 0.5, 0.05, 0.005) == pytest.approx(0.05)
    assert soft_start_duty(0.0025, 0.5, 0.05, 0.005) == pytest.approx(0.275)
    assert soft_start_duty(0.01, 0.5, 0.05, 0.005) == pytest.approx(0.5)
    assert soft_start_duty(0.0, 0.5, 0.05, 0.0) == 0.5
