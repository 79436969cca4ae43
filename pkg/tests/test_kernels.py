import os
import subprocess
import sys

import numpy as np
import pytest

from boostctl import _kernels_py, kernels
from boostctl.converter import get_params
from boostctl.pi import PUBLISHED_PSO

P = get_params("desk")
compiled = pytest.importorskip("boostctl._kernels")


def _pi(impl, v_in):
    n = len(v_in) - 1
    i, v, d = np.zeros(n + 1), np.zeros(n + 1), np.zeros(n + 1)
    status = impl.simulate_pi(*PUBLISHED_PSO, 48.0, v_in, P.L, P.C, P.R, P.dt, P.substeps,
                              P.duty_min, P.duty_max, i, v, d)
    return status, i, v, d


def test_backends_agree_bit_for_bit_on_pi_loop():
    v_in = np.where(np.arange(1001) < 500, 24.0, 26.0)
    a, b = _pi(_kernels_py, v_in), _pi(compiled, v_in)
    assert a[0] == b[0] == -1
    for x, y in zip(a[1:], b[1:]):
        assert np.array_equal(x, y)


def test_backends_agree_on_duty_schedule_and_advance():
    n = 400
    duty = np.linspace(0.05, 0.9, n + 1)
    v_in = np.full(n + 1, 24.0)
    outs = []
    for impl in (_kernels_py, compiled):
        i, v = np.zeros(n + 1), np.zeros(n + 1)
        impl.simulate_duty(duty, v_in, P.L, P.C, P.R, P.dt, P.substeps, i, v)
        outs.append((i, v))
    assert np.array_equal(outs[0][0], outs[1][0]) and np.array_equal(outs[0][1], outs[1][1])
    args = (0.3, 40.0, 0.2, 24.0, P.L, P.C, P.R, 1e-5, 20)
    assert _kernels_py.rk4_advance(*args) == compiled.rk4_advance(*args)


def test_nonfinite_status_reported():
    v_in = np.full(11, np.nan)
    status, *_ = _pi(compiled, v_in)
    assert status == 0
    status, *_ = _pi(_kernels_py, v_in)
    assert status == 0


def test_environment_flag_selects_fallback():
    code = "from boostctl import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, BOOSTCTL_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND == ("python" if os.environ.get("BOOSTCTL_PURE_PYTHON") == "1"
                               else "cython")
