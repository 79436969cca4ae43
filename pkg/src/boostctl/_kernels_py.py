"""Pure-Python twins of the compiled kernels in ``_kernels.pyx``.

Keep the arithmetic order identical to the Cython source; the test suite
checks the two paths agree exactly.
"""
import math


def _deriv(i_l, v_c, duty, v_in, L, C, R):
    off = 1.0 - duty
    if i_l < 0.0:
        i_l = 0.0
    di = (v_in - off * v_c) / L
    if i_l == 0.0 and di < 0.0:
        di = 0.0
    return di, (off * i_l - v_c / R) / C


def rk4_advance(i_l, v_c, duty, v_in, L, C, R, h, n):
    """Advance ``n`` RK4 steps of size ``h`` with duty and input held."""
    i = float(i_l)
    v = float(v_c)
    for _ in range(n):
        a1, b1 = _deriv(i, v, duty, v_in, L, C, R)
        a2, b2 = _deriv(i + 0.5 * h * a1, v + 0.5 * h * b1, duty, v_in, L, C, R)
        a3, b3 = _deriv(i + 0.5 * h * a2, v + 0.5 * h * b2, duty, v_in, L, C, R)
        a4, b4 = _deriv(i + h * a3, v + h * b3, duty, v_in, L, C, R)
        i = i + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        v = v + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        if i < 0.0:
            i = 0.0
    return i, v


def simulate_pi(kp, ki, v_ref, v_in, L, C, R, dt, substeps,
                duty_min, duty_max, out_i, out_v, out_duty):
    n = len(out_v) - 1
    i = float(out_i[0])
    v = float(out_v[0])
    integral = 0.0
    h = dt / substeps
    for k in range(n):
        e = v_ref - v
        trial = integral + e * dt
        raw = kp * e + ki * trial
        if raw > duty_max:
            duty = duty_max
        elif raw < duty_min:
            duty = duty_min
        else:
            duty = raw
            integral = trial
        out_duty[k] = duty
        i, v = rk4_advance(i, v, duty, float(v_in[k]), L, C, R, h, substeps)
        if not (math.isfinite(i) and math.isfinite(v)):
            return k
        out_i[k + 1] = i
        out_v[k + 1] = v
    if n > 0:
        out_duty[n] = out_duty[n - 1]
    return -1


def simulate_duty(duty, v_in, L, C, R, dt, substeps, out_i, out_v):
    n = len(out_v) - 1
    i = float(out_i[0])
    v = float(out_v[0])
    h = dt / substeps
    for k in range(n):
        i, v = rk4_advance(i, v, float(duty[k]), float(v_in[k]), L, C, R, h, substeps)
        if not (math.isfinite(i) and math.isfinite(v)):
            return k
        out_i[k + 1] = i
        out_v[k + 1] = v
    return -1
