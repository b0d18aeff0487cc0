"""Pure-Python reference versions of the compiled kernels.

Same signatures and arithmetic order as ``_kernels.pyx`` so that results
agree to rounding; used when the extension is unavailable.
"""

import math

import numpy as np


def _envelope(t, kind, rise, fall, total):
    if t < 0.0 or t > total:
        return 0.0
    if kind == 0:
        return 1.0
    if t < rise:
        return t / rise
    if t > total - fall:
        return (total - t) / fall
    return 1.0


def lindblad_rk4(rows, cols, lh_vals, ld_vals, x0, t_end, nsteps, env_kind, rise, fall, total,
                 record_every):
    x = np.array(x0, dtype=np.complex128)
    n = x.size
    lh = np.zeros((n, n), dtype=np.complex128)
    ld = np.zeros((n, n), dtype=np.complex128)
    lh[rows, cols] = lh_vals
    ld[rows, cols] = ld_vals
    h = t_end / nsteps
    records = [x.copy()]
    for step in range(nsteps):
        t = step * h
        f1 = _envelope(t, env_kind, rise, fall, total)
        f2 = _envelope(t + 0.5 * h, env_kind, rise, fall, total)
        f3 = _envelope(t + h, env_kind, rise, fall, total)
        k1 = (f1 * lh + ld) @ x
        m2 = f2 * lh + ld
        k2 = m2 @ (x + 0.5 * h * k1)
        k3 = m2 @ (x + 0.5 * h * k2)
        k4 = (f3 * lh + ld) @ (x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (step + 1) % record_every == 0 or step + 1 == nsteps:
            records.append(x.copy())
    return np.array(records)


def _quantize(v, lsb):
    return math.floor(v / lsb + 0.5) * lsb


def pid_loop(disturbance, sample_noise, v_nominal, set_point, kp, ki, kd, dt, adc_lsb,
             dac_lsb, dac_lo, dac_hi, attenuation, gain, closed):
    n = len(disturbance)
    measured = np.empty(n)
    actuator = np.empty(n)
    u_out = 0.0
    integral = 0.0
    prev_err = 0.0
    for k in range(n):
        v = v_nominal * (1.0 + disturbance[k]) + gain * attenuation * u_out + sample_noise[k]
        m = _quantize(v, adc_lsb)
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
        u_out = _quantize(u, dac_lsb)
    return measured, actuator
