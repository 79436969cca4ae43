"""Supervised feedforward duty controller.

A small tanh network learns the ideal boost duty law ``d = 1 - v_in/v_target``
from sampled operating points and then commands the converter open loop from
the measured input voltage and the reference.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .converter import SOFT_START, soft_start_duty
from .errors import ConfigurationError, NumericalBlowupError
from .nn import MLP

DEFAULT_V_IN_RANGE = (22.0, 28.0)
DEFAULT_V_TARGET_RANGE = (44.0, 64.0)


def ideal_duty(v_in, v_target):
    return 1.0 - np.asarray(v_in, dtype=np.float64) / np.asarray(v_target, dtype=np.float64)


@dataclass
class AnnDataset:
    v_in: np.ndarray
    v_target: np.ndarray
    duty: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    v_in_range: tuple
    v_target_range: tuple

    def __len__(self):
        return len(self.duty)

    def features(self, idx=None):
        x = normalize_inputs(self.v_in, self.v_target, self.v_in_range, self.v_target_range)
        return x if idx is None else x[idx]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["v_in", "v_target", "duty"])
            for row in zip(self.v_in, self.v_target, self.duty):
                writer.writerow([repr(float(x)) for x in row])


def _check_range(name, rng):
    lo, hi = rng
    if not (0 < lo < hi):
        raise ConfigurationError(f"{name} must be an increasing positive interval, got {rng}")


def normalize_inputs(v_in, v_target, v_in_range, v_target_range):
    """Affine map of both inputs onto [-1, 1] over their generation ranges."""
    def scale(x, rng):
        lo, hi = rng
        return 2.0 * (np.asarray(x, dtype=np.float64) - lo) / (hi - lo) - 1.0
    return np.column_stack([scale(v_in, v_in_range), scale(v_target, v_target_range)])


def generate_dataset(v_in_range=DEFAULT_V_IN_RANGE, v_target_range=DEFAULT_V_TARGET_RANGE,
                     n=100_000, seed=0, train_fraction=0.8):
    """Uniform operating points labelled with the ideal duty; 80/20 split by count."""
    _check_range("v_in_range", v_in_range)
    _check_range("v_target_range", v_target_range)
    if v_target_range[0] <= v_in_range[1]:
        raise ConfigurationError("v_target_range must lie entirely above v_in_range")
    if n < 10:
        raise ConfigurationError("need at least 10 samples")
    rng = np.random.default_rng(seed)
    v_in = rng.uniform(*v_in_range, size=n)
    v_target = rng.uniform(*v_target_range, size=n)
    perm = rng.permutation(n)
    n_train = int(round(train_fraction * n))
    return AnnDataset(v_in, v_target, ideal_duty(v_in, v_target),
                      np.sort(perm[:n_train]), np.sort(perm[n_train:]),
                      tuple(v_in_range), tuple(v_target_range))


@dataclass
class AnnTrainConfig:
    hidden: tuple = (16, 16)
    max_iterations: int = 80_000
    target_mse: float = 2e-7
    learning_rate: float = 0.2
    batch_size: int = 64
    # the stopping check runs on the full training split every this many updates
    check_every: int = 500
    seed: int = 0

    def __post_init__(self):
        if not self.target_mse > 0:
            raise ConfigurationError("target_mse must be positive")


def _mse(net, x, y):
    pred = net(x)[:, 0]
    return float(np.mean((pred - y) ** 2))


def train_ann(dataset, config=None):
    """Minibatch gradient descent on the training split; returns ``(net, train_mse, test_mse)``."""
    config = config or AnnTrainConfig()
    rng = np.random.default_rng(config.seed)
    net = MLP.init([2, *config.hidden, 1], "tanh", "identity", seed=config.seed)
    x_train = dataset.features(dataset.train_idx)
    y_train = dataset.duty[dataset.train_idx]
    n = len(y_train)
    batch = min(config.batch_size, n)
    perm = rng.permutation(n)
    cursor = 0
    train_mse = _mse(net, x_train, y_train)
    for it in range(1, config.max_iterations + 1):
        if cursor + batch > n:
            perm = rng.permutation(n)
            cursor = 0
        idx = perm[cursor:cursor + batch]
        cursor += batch
        out, cache = net.forward(x_train[idx])
        resid = out[:, 0] - y_train[idx]
        grad_out = (2.0 / batch) * resid[:, None]
        grads = net.backward(cache, grad_out)
        net.apply_update(grads, config.learning_rate)
        if it % config.check_every == 0 or it == config.max_iterations:
            train_mse = _mse(net, x_train, y_train)
            if not np.isfinite(train_mse):
                raise NumericalBlowupError(f"ANN training diverged at iteration {it}", step=it)
            if train_mse <= config.target_mse:
                break
    test_mse = _mse(net, dataset.features(dataset.test_idx), dataset.duty[dataset.test_idx])
    return net, train_mse, test_mse


@dataclass
class AnnController:
    """Trained duty network plus the input normalisation it was trained with.

    ``soft_start`` ramps the commanded duty linearly up from ``duty_min`` over
    the first ``soft_start`` seconds; 0 disables it.
    """

    net: MLP
    v_in_range: tuple = DEFAULT_V_IN_RANGE
    v_target_range: tuple = DEFAULT_V_TARGET_RANGE
    duty_min: float = 0.05
    duty_max: float = 0.95
    soft_start: float = SOFT_START
    name: str = "ann"
    _warned: set = field(default_factory=set, repr=False)

    def _check_inputs(self, v_in, v_ref):
        for label, values, (lo, hi) in (("v_in", v_in, self.v_in_range),
                                        ("v_ref", v_ref, self.v_target_range)):
            margin = 0.1 * (hi - lo)
            values = np.atleast_1d(values)
            if (np.any(values < lo - margin) or np.any(values > hi + margin)) \
                    and label not in self._warned:
                self._warned.add(label)
                warnings.warn(f"{label} outside the ANN training range {lo}..{hi}; "
                              "the duty command is extrapolated", RuntimeWarning, stacklevel=3)

    def raw_duty(self, v_in, v_ref):
        self._check_inputs(v_in, v_ref)
        x = normalize_inputs(np.atleast_1d(v_in), np.atleast_1d(v_ref),
                             self.v_in_range, self.v_target_range)
        return self.net(x)[:, 0]

    def duty(self, v_in, v_ref):
        return float(np.clip(self.raw_duty(v_in, v_ref)[0], self.duty_min, self.duty_max))

    def _ramp(self, t, duty):
        return soft_start_duty(t, duty, self.duty_min, self.soft_start)

    # closed-loop protocol ---------------------------------------------------------
    def reset(self):
        pass

    def __call__(self, obs, t, v_in, scenario):
        return float(self._ramp(t, self.duty(v_in, scenario.v_ref)))

    def duty_schedule(self, t, v_in, scenario):
        """Duty for every sample at once; identical to calling the controller per step."""
        d = np.clip(self.raw_duty(v_in, np.full(len(v_in), scenario.v_ref)),
                    self.duty_min, self.duty_max)
        return self._ramp(t, d)

    # persistence --------------------------------------------------------------------
    def to_dict(self):
        return {"format": "boostctl.ann/1", "network": self.net.to_dict(),
                "v_in_range": list(self.v_in_range),
                "v_target_range": list(self.v_target_range),
                "duty_min": self.duty_min, "duty_max": self.duty_max,
                "soft_start": self.soft_start}

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path):
        doc = json.loads(Path(path).read_text())
        return cls(MLP.from_dict(doc["network"]), tuple(doc["v_in_range"]),
                   tuple(doc["v_target_range"]), doc["duty_min"], doc["duty_max"],
                   doc.get("soft_start", SOFT_START))


def ann_duty(controller, v_in, v_ref):
    return controller.duty(v_in, v_ref)
