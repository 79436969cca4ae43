"""Step-response characteristics and MAE fitness for simulated trajectories."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigurationError

TRAJECTORY_HEADER = ("t", "v_in", "duty", "i_L", "v_out", "e", "reward")
METRICS_HEADER = ("controller", "scenario", "v_ref", "rise_s", "settle_s",
                  "overshoot_pct", "undershoot_pct", "mae")


@dataclass
class Trajectory:
    """Uniformly sampled run, ``t_k = k*dt`` for ``k = 0..N``.

    ``duty[k]`` and ``v_in[k]`` are held over ``[t_k, t_{k+1})``; the final
    duty entry repeats the last applied value.  ``reward[k]`` is the reward
    received on arriving at ``t_k`` (zero for ``k = 0``).
    """

    t: np.ndarray
    v_in: np.ndarray
    duty: np.ndarray
    i_L: np.ndarray
    v_out: np.ndarray
    reward: np.ndarray
    v_ref: float
    dt: float

    def __post_init__(self):
        n = len(self.t)
        if n == 0:
            raise ConfigurationError("empty trajectory")
        for name in ("v_in", "duty", "i_L", "v_out", "reward"):
            if len(getattr(self, name)) != n:
                raise ConfigurationError(f"column {name} has length "
                                         f"{len(getattr(self, name))}, expected {n}")

    def __len__(self):
        return len(self.t)

    @property
    def error(self):
        return self.v_ref - self.v_out

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRAJECTORY_HEADER)
            for row in zip(self.t, self.v_in, self.duty, self.i_L, self.v_out,
                           self.error, self.reward):
                writer.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path, v_ref):
        data = np.genfromtxt(path, delimiter=",", names=True)
        t = np.atleast_1d(data["t"])
        dt = float(t[1] - t[0]) if len(t) > 1 else 0.0
        return cls(t, np.atleast_1d(data["v_in"]), np.atleast_1d(data["duty"]),
                   np.atleast_1d(data["i_L"]), np.atleast_1d(data["v_out"]),
                   np.atleast_1d(data["reward"]), float(v_ref), dt)

    @classmethod
    def from_output(cls, v_out, dt, v_ref, v_in=None, duty=None):
        """Bare trajectory from an output series (synthetic responses, tests)."""
        v_out = np.asarray(v_out, dtype=np.float64)
        n = len(v_out)
        zeros = np.zeros(n)
        return cls(np.arange(n) * dt,
                   zeros if v_in is None else np.asarray(v_in, dtype=np.float64),
                   zeros if duty is None else np.asarray(duty, dtype=np.float64),
                   zeros.copy(), v_out, zeros.copy(), float(v_ref), float(dt))


@dataclass
class StepMetrics:
    rise_time: float
    settling_time: float
    overshoot_pct: float
    undershoot_pct: float
    steady_state_error: float
    settled: bool

    def as_dict(self):
        return asdict(self)


def _first_crossing(t, y, level):
    """Interpolated time at which ``y`` first reaches ``level`` from below, or NaN."""
    hits = np.nonzero(y >= level)[0]
    if len(hits) == 0:
        return math.nan
    k = int(hits[0])
    if k == 0:
        return float(t[0])
    y0, y1 = y[k - 1], y[k]
    return float(t[k - 1] + (level - y0) / (y1 - y0) * (t[k] - t[k - 1]))


def step_metrics(traj, v_ref=None, settle_band_pct=2.0, rise_lo_pct=10.0, rise_hi_pct=90.0,
                 final_window=0.1):
    """Rise/settle/overshoot/undershoot of ``traj.v_out`` against ``v_ref``.

    Settling time is the interpolated instant the output last enters the
    ``±settle_band_pct`` band; NaN with ``settled=False`` if the final sample is
    outside it.  Steady-state error is ``v_ref`` minus the mean output over the
    last ``final_window`` fraction of the run.
    """
    if len(traj) == 0:
        raise ConfigurationError("empty trajectory")
    v_ref = traj.v_ref if v_ref is None else float(v_ref)
    t = np.asarray(traj.t, dtype=np.float64)
    y = np.asarray(traj.v_out, dtype=np.float64)

    t_lo = _first_crossing(t, y, rise_lo_pct / 100.0 * v_ref)
    t_hi = _first_crossing(t, y, rise_hi_pct / 100.0 * v_ref)
    rise = t_hi - t_lo

    band = settle_band_pct / 100.0 * v_ref
    outside = np.nonzero(np.abs(y - v_ref) > band)[0]
    if len(outside) == 0:
        settling, settled = float(t[0]), True
    elif outside[-1] == len(y) - 1:
        settling, settled = math.nan, False
    else:
        k = int(outside[-1])
        # the band edge the output crossed when leaving sample k
        edge = v_ref + band if y[k] > v_ref else v_ref - band
        frac = (edge - y[k]) / (y[k + 1] - y[k])
        settling, settled = float(t[k] + frac * (t[k + 1] - t[k])), True

    overshoot = max(0.0, (float(y.max()) - v_ref) / v_ref * 100.0)
    reached = np.nonzero(y >= v_ref)[0]
    if len(reached):
        undershoot = max(0.0, (v_ref - float(y[reached[0]:].min())) / v_ref * 100.0)
    else:
        undershoot = 0.0

    tail = max(1, int(round(final_window * len(y))))
    sse = v_ref - float(np.mean(y[-tail:]))
    return StepMetrics(rise, settling, overshoot, undershoot, sse, settled)


def mae(traj, v_ref=None):
    """Mean absolute error between the reference and the output over all samples."""
    v_ref = traj.v_ref if v_ref is None else float(v_ref)
    y = np.asarray(traj.v_out, dtype=np.float64)
    if len(y) == 0:
        raise ConfigurationError("empty trajectory")
    return float(np.mean(np.abs(v_ref - y)))


def write_metrics_csv(path, rows):
    """Rows are mappings with the :data:`METRICS_HEADER` keys."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_HEADER, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
