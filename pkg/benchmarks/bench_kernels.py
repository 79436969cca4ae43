"""Compiled vs pure-Python kernel timing on a full 1 s PI closed loop.

    python benchmarks/bench_kernels.py [--repeats N]

Both backends are imported directly, so the comparison does not depend on
``BOOSTCTL_PURE_PYTHON``.  Exits nonzero if the outputs differ.
"""
import argparse
import timeit

import numpy as np

from boostctl import _kernels_py
from boostctl.converter import get_params
from boostctl.pi import PUBLISHED_PSO

try:
    from boostctl import _kernels as _compiled
except ImportError:
    _compiled = None


def run_pi(impl, params, n=5000):
    v_in = np.full(n + 1, 24.0)
    i_l, v_out, duty = np.zeros(n + 1), np.zeros(n + 1), np.zeros(n + 1)
    impl.simulate_pi(*PUBLISHED_PSO, 48.0, v_in, params.L, params.C, params.R, params.dt,
                     int(params.substeps), params.duty_min, params.duty_max, i_l, v_out, duty)
    return v_out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()
    params = get_params("desk")
    backends = {"python": _kernels_py}
    if _compiled is not None:
        backends["cython"] = _compiled
    else:
        print("compiled kernels not built; timing the fallback only")
    timings, outputs = {}, {}
    for name, impl in backends.items():
        outputs[name] = run_pi(impl, params)
        timings[name] = min(timeit.repeat(lambda: run_pi(impl, params), number=1,
                                          repeat=args.repeats))
        print(f"{name:7s} {timings[name] * 1e3:9.2f} ms per 5000-sample PI run")
    if "cython" in timings:
        print(f"speedup {timings['python'] / timings['cython']:.1f}x")
        if not np.array_equal(outputs["python"], outputs["cython"]):
            print("outputs differ between backends")
            return 1
        print("outputs identical")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
