# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the averaged boost converter.

Every routine mirrors ``_kernels_py`` operation for operation so both paths
produce the same floating point results.
"""
from libc.math cimport isfinite


cdef inline void _deriv(double i_l, double v_c, double duty, double v_in,
                        double L, double C, double R,
                        double* di, double* dv) noexcept nogil:
    # the diode blocks reverse current: no negative current feeds the
    # capacitor and a zero current cannot keep falling
    cdef double off = 1.0 - duty
    if i_l < 0.0:
        i_l = 0.0
    di[0] = (v_in - off * v_c) / L
    if i_l == 0.0 and di[0] < 0.0:
        di[0] = 0.0
    dv[0] = (off * i_l - v_c / R) / C


cdef inline void _advance(double* i_l, double* v_c, double duty, double v_in,
                          double L, double C, double R,
                          double h, int n) noexcept nogil:
    cdef double a1, b1, a2, b2, a3, b3, a4, b4
    cdef double i = i_l[0]
    cdef double v = v_c[0]
    cdef int s
    for s in range(n):
        _deriv(i, v, duty, v_in, L, C, R, &a1, &b1)
        _deriv(i + 0.5 * h * a1, v + 0.5 * h * b1, duty, v_in, L, C, R, &a2, &b2)
        _deriv(i + 0.5 * h * a2, v + 0.5 * h * b2, duty, v_in, L, C, R, &a3, &b3)
        _deriv(i + h * a3, v + h * b3, duty, v_in, L, C, R, &a4, &b4)
        i = i + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        v = v + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        if i < 0.0:
            i = 0.0
    i_l[0] = i
    v_c[0] = v


def rk4_advance(double i_l, double v_c, double duty, double v_in,
                double L, double C, double R, double h, int n):
    """Advance ``n`` RK4 steps of size ``h`` with duty and input held."""
    _advance(&i_l, &v_c, duty, v_in, L, C, R, h, n)
    return i_l, v_c


def simulate_pi(double kp, double ki, double v_ref, double[::1] v_in,
                double L, double C, double R, double dt, int substeps,
                double duty_min, double duty_max,
                double[::1] out_i, double[::1] out_v, double[::1] out_duty):
    """Closed PI loop from the state stored in ``out_i[0]``, ``out_v[0]``.

    Returns -1 on success or the index of the first step that produced a
    non-finite state.
    """
    cdef Py_ssize_t n = out_v.shape[0] - 1
    cdef Py_ssize_t k
    cdef double i = out_i[0]
    cdef double v = out_v[0]
    cdef double integral = 0.0
    cdef double e, trial, raw, duty
    cdef double h = dt / substeps
    cdef Py_ssize_t status = -1
    with nogil:
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
            _advance(&i, &v, duty, v_in[k], L, C, R, h, substeps)
            if not (isfinite(i) and isfinite(v)):
                status = k
                break
            out_i[k + 1] = i
            out_v[k + 1] = v
        if status < 0 and n > 0:
            out_duty[n] = out_duty[n - 1]
    return status


def simulate_duty(double[::1] duty, double[::1] v_in,
                  double L, double C, double R, double dt, int substeps,
                  double[::1] out_i, double[::1] out_v):
    """Open-loop run of a precomputed duty sequence; same return convention."""
    cdef Py_ssize_t n = out_v.shape[0] - 1
    cdef Py_ssize_t k
    cdef double i = out_i[0]
    cdef double v = out_v[0]
    cdef double h = dt / substeps
    cdef Py_ssize_t status = -1
    with nogil:
        for k in range(n):
            _advance(&i, &v, duty[k], v_in[k], L, C, R, h, substeps)
            if not (isfinite(i) and isfinite(v)):
                status = k
                break
            out_i[k + 1] = i
            out_v[k + 1] = v
    return status
