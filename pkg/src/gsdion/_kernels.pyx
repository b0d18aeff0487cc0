# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: fixed-step RK4 for the Lindblad equation and the
sampled PID loop. ``_kernels_py`` holds the reference implementations;
both must agree to rounding."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, fabs

cnp.import_array()

ctypedef double complex cplx


cdef inline double envelope(double t, int kind, double rise, double fall, double total) nogil:
    if t < 0.0 or t > total:
        return 0.0
    if kind == 0:
        return 1.0
    if t < rise:
        return t / rise
    if t > total - fall:
        return (total - t) / fall
    return 1.0


cdef inline void liouvillian(const int[::1] rows, const int[::1] cols, const cplx[::1] lh,
                             const cplx[::1] ld, double f, const cplx[::1] x, cplx[::1] out,
                             int n, int nnz) nogil:
    cdef int i, k
    for i in range(n):
        out[i] = 0.0
    for k in range(nnz):
        out[rows[k]] = out[rows[k]] + (f * lh[k] + ld[k]) * x[cols[k]]


def lindblad_rk4(int[::1] rows, int[::1] cols, cplx[::1] lh, cplx[::1] ld, cplx[::1] x0,
                 double t_end, int nsteps, int env_kind, double rise, double fall, double total,
                 int record_every):
    """Integrate dx/dt = (f(t) LH + LD) x with classical RK4.

    The superoperators are given as triplets (rows, cols, lh, ld) over the
    union of their nonzero entries. Returns an array of shape (nrec, n)
    holding x at t = 0 and every ``record_every`` steps (the final state is
    always included).
    """
    cdef int n = x0.shape[0]
    cdef int nnz = rows.shape[0]
    cdef double h = t_end / nsteps
    cdef int nrec = nsteps // record_every + 1
    if nsteps % record_every:
        nrec += 1
    out_arr = np.empty((nrec, n), dtype=np.complex128)
    cdef cplx[:, ::1] out = out_arr
    cdef cplx[::1] x = np.array(x0, dtype=np.complex128)
    cdef cplx[::1] k1 = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] k2 = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] k3 = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] k4 = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] tmp = np.empty(n, dtype=np.complex128)
    cdef int step, i, rec = 0
    cdef double t, f1, f2, f3
    with nogil:
        for i in range(n):
            out[0, i] = x[i]
        rec = 1
        for step in range(nsteps):
            t = step * h
            f1 = envelope(t, env_kind, rise, fall, total)
            f2 = envelope(t + 0.5 * h, env_kind, rise, fall, total)
            f3 = envelope(t + h, env_kind, rise, fall, total)
            liouvillian(rows, cols, lh, ld, f1, x, k1, n, nnz)
            for i in range(n):
                tmp[i] = x[i] + 0.5 * h * k1[i]
            liouvillian(rows, cols, lh, ld, f2, tmp, k2, n, nnz)
            for i in range(n):
                tmp[i] = x[i] + 0.5 * h * k2[i]
            liouvillian(rows, cols, lh, ld, f2, tmp, k3, n, nnz)
            for i in range(n):
                tmp[i] = x[i] + h * k3[i]
            liouvillian(rows, cols, lh, ld, f3, tmp, k4, n, nnz)
            for i in range(n):
                x[i] = x[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if (step + 1) % record_every == 0 or step + 1 == nsteps:
                for i in range(n):
                    out[rec, i] = x[i]
                rec += 1
    return out_arr


cdef inline double quantize(double v, double lsb) nogil:
    return floor(v / lsb + 0.5) * lsb


def pid_loop(double[::1] disturbance, double[::1] sample_noise, double v_nominal, double set_point,
             double kp, double ki, double kd, double dt, double adc_lsb,
             double dac_lsb, double dac_lo, double dac_hi, double attenuation, double gain,
             bint closed):
    """Run the sampled voltage-stabilization loop.

    Returns (measured, actuator) arrays, one entry per sample.
    """
    cdef Py_ssize_t n = disturbance.shape[0]
    measured_arr = np.empty(n, dtype=np.float64)
    actuator_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] measured = measured_arr
    cdef double[::1] actuator = actuator_arr
    cdef double u_out = 0.0, integral = 0.0, prev_err = 0.0
    cdef double v, m, err, deriv, u, trial
    cdef Py_ssize_t k
    with nogil:
        for k in range(n):
            v = v_nominal * (1.0 + disturbance[k]) + gain * attenuation * u_out + sample_noise[k]
            m = quantize(v, adc_lsb)
            measured[k] = m
            actuator[k] = u_out
            if not closed:
                continue
            err = set_point - m
            deriv = (err - prev_err) / dt if k > 0 else 0.0
            prev_err = err
            trial = integral + err * dt
            u = kp * err + ki * trial + kd * deriv
            if u > dac_hi:
                u = dac_hi
            elif u < dac_lo:
                u = dac_lo
            else:
                integral = trial
            u_out = quantize(u, dac_lsb)
    return measured_arr, actuator_arr
