# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Semantics must match ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp

cnp.import_array()


cdef inline double _interp(const double[:] tx, const double[:] vx, Py_ssize_t n,
                           double tq, Py_ssize_t *hint) noexcept nogil:
    cdef Py_ssize_t j = hint[0]
    if tq <= tx[0]:
        hint[0] = 0
        return vx[0]
    if tq >= tx[n - 1]:
        hint[0] = n - 2 if n > 1 else 0
        return vx[n - 1]
    while j > 0 and tx[j] > tq:
        j -= 1
    while j < n - 2 and tx[j + 1] < tq:
        j += 1
    hint[0] = j
    cdef double t0 = tx[j]
    cdef double t1 = tx[j + 1]
    if tq == t1:
        return vx[j + 1]
    return vx[j] + (vx[j + 1] - vx[j]) * (tq - t0) / (t1 - t0)


def ncc_lag_grid(const double[:] t_ref, const double[:] ref,
                 const double[:] t_meas, const double[:] meas,
                 const double[:] lags):
    """Normalized cross-correlation between ``ref(t)`` and ``meas(t + lag)``.

    ``meas`` is linearly interpolated at ``t_ref + lag``; queries outside its
    coverage clamp to the end values (callers trim so this does not happen).
    """
    cdef Py_ssize_t n = t_ref.shape[0]
    cdef Py_ssize_t m = t_meas.shape[0]
    cdef Py_ssize_t nl = lags.shape[0]
    cdef Py_ssize_t i, k
    cdef Py_ssize_t hint = 0
    out = np.empty(nl, dtype=np.float64)
    cdef double[:] out_v = out
    buf = np.empty(n, dtype=np.float64)
    cdef double[:] b = buf
    cdef double mean_r = 0.0, var_r = 0.0, mean_m, var_m, cov, d_r, d_m
    if n < 2 or m < 1:
        out[:] = np.nan
        return out
    with nogil:
        for i in range(n):
            mean_r += ref[i]
        mean_r /= n
        for i in range(n):
            d_r = ref[i] - mean_r
            var_r += d_r * d_r
        for k in range(nl):
            hint = 0
            mean_m = 0.0
            for i in range(n):
                b[i] = _interp(t_meas, meas, m, t_ref[i] + lags[k], &hint)
                mean_m += b[i]
            mean_m /= n
            var_m = 0.0
            cov = 0.0
            for i in range(n):
                d_m = b[i] - mean_m
                var_m += d_m * d_m
                cov += d_m * (ref[i] - mean_r)
            if var_m <= 0.0 or var_r <= 0.0:
                out_v[k] = 0.0
            else:
                out_v[k] = cov / sqrt(var_m * var_r)
    return out


def first_order_track(const double[:] x0, const double[:, :] setpoints, double dt, double tau):
    """Exact zero-order-hold discretization of ``x' = (u - x) / tau``.

    Row ``i`` of the result is the state after holding ``setpoints[i]`` for
    one step of length ``dt`` starting from row ``i - 1`` (or ``x0``).
    """
    cdef Py_ssize_t n = setpoints.shape[0]
    cdef Py_ssize_t c = setpoints.shape[1]
    cdef Py_ssize_t i, j
    cdef double a = 1.0 - exp(-dt / tau)
    out = np.empty((n, c), dtype=np.float64)
    cdef double[:, :] o = out
    state = np.array(x0, dtype=np.float64)
    cdef double[:] s = state
    with nogil:
        for i in range(n):
            for j in range(c):
                s[j] = s[j] + a * (setpoints[i, j] - s[j])
                o[i, j] = s[j]
    return out
