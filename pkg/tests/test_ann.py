import numpy as np
import pytest

from boostctl.ann import (AnnController, AnnTrainConfig, generate_dataset, ideal_duty,
                          normalize_inputs, train_ann)
from boostctl.errors import ConfigurationError
from boostctl.nn import MLP
from boostctl.simulate import ScenarioConfig, run_closed_loop


@pytest.fixture(scope="module")
def small_controller():
    data = generate_dataset(n=10_000, seed=0)
    net, train_mse, test_mse = train_ann(data, AnnTrainConfig(seed=0, max_iterations=40_000,
                                                              target_mse=1e-6))
    return AnnController(net), train_mse, test_mse


def test_ideal_duty_labels():
    assert ideal_duty(24.0, 48.0) == 0.5
    assert ideal_duty(24.0, 60.0) == pytest.approx(0.6)


def test_dataset_split_and_ranges():
    data = generate_dataset(n=1000, seed=1)
    assert len(data) == 1000
    assert len(data.train_idx) == 800 and len(data.test_idx) == 200
    assert not set(data.train_idx) & set(data.test_idx)
    assert data.v_in.min() >= 22.0 and data.v_in.max() <= 28.0
    np.testing.assert_allclose(data.duty, 1.0 - data.v_in / data.v_target)


def test_dataset_validation():
    with pytest.raises(ConfigurationError):
        generate_dataset(v_in_range=(28.0, 22.0))
    with pytest.raises(ConfigurationError):
        generate_dataset(v_in_range=(22.0, 50.0), v_target_range=(44.0, 64.0))


def test_normalization_maps_range_to_unit_box():
    x = normalize_inputs([22.0, 28.0], [44.0, 64.0], (22.0, 28.0), (44.0, 64.0))
    np.testing.assert_allclose(x, [[-1.0, -1.0], [1.0, 1.0]])


def test_training_reaches_small_test_error(small_controller):
    _, train_mse, test_mse = small_controller
    assert test_mse < 1e-5 and train_mse < 1e-5


def test_operating_points(small_controller):
    ctrl = small_controller[0]
    assert ctrl.duty(24.0, 48.0) == pytest.approx(0.5, abs=0.01)
    assert ctrl.duty(26.0, 48.0) == pytest.approx(1 - 26 / 48, abs=0.01)


def test_closed_loop_schedule_matches_stepwise(small_controller):
    ctrl = small_controller[0]
    sc = ScenarioConfig(profile="step", horizon_steps=3000)
    fast = run_closed_loop(ctrl, sc)
    slow = run_closed_loop(ctrl, sc, fast=False)
    assert abs(fast.v_out - slow.v_out).max() < 1e-9


def test_soft_start_starts_at_duty_min(small_controller):
    ctrl = small_controller[0]
    traj = run_closed_loop(ctrl, ScenarioConfig(horizon_steps=100))
    assert traj.duty[0] == pytest.approx(0.05)
    assert traj.duty[50] == pytest.approx(ctrl.duty(24.0, 48.0))


def test_out_of_range_warns_once():
    ctrl = AnnController(MLP.init([2, 4, 1]))
    with pytest.warns(RuntimeWarning):
        ctrl.duty(40.0, 48.0)


def test_save_load_round_trip(small_controller, tmp_path):
    ctrl = small_controller[0]
    ctrl.save(tmp_path / "ann.json")
    back = AnnController.load(tmp_path / "ann.json")
    assert back.duty(25.0, 55.0) == ctrl.duty(25.0, 55.0)
    assert back.soft_start == ctrl.soft_start
