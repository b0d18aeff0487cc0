"""Fits and resolution formulas applied to simulated scan images."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter
from scipy.optimize import least_squares

from . import constants as C
from .errors import AnalysisError, DegenerateInputError, ValidationError

FOUR_LN2 = 4.0 * math.log(2.0)
MAX_ITER = 200
XTOL = 1e-8


@dataclass(frozen=True)
class GaussianFit:
    center: tuple
    fwhm_x: float
    fwhm_y: float
    amplitude: float
    offset: float
    stderr: dict = field(repr=False)
    converged: bool
    residual_norm: float
    nfev: int = 0


@dataclass(frozen=True)
class ResolutionPoint:
    control: float
    measured: float
    predicted: float

    def __post_init__(self):
        if not (self.measured > 0 and self.predicted > 0):
            raise ValidationError("resolution values must be positive")


@dataclass(frozen=True)
class TrajectoryFit:
    amplitude: float
    period: float
    phase: float
    offset: float
    stderr: dict = field(repr=False)
    converged: bool

    def __post_init__(self):
        if self.converged and not self.period > 0:
            raise ValidationError("fitted period must be positive")

    def __call__(self, t):
        return self.offset + self.amplitude * np.cos(2 * math.pi * np.asarray(t) / self.period + self.phase)


def gaussian2d_model(params, x, y):
    """offset + amp exp(-4 ln2 [(x-x0)^2/wx^2 + (y-y0)^2/wy^2]) on the flattened grid."""
    off, amp, x0, y0, wx, wy = params
    return off + amp * np.exp(-FOUR_LN2 * ((x - x0) ** 2 / wx ** 2 + (y - y0) ** 2 / wy ** 2))


def gaussian2d_jacobian(params, x, y):
    off, amp, x0, y0, wx, wy = params
    dx, dy = x - x0, y - y0
    g = np.exp(-FOUR_LN2 * (dx ** 2 / wx ** 2 + dy ** 2 / wy ** 2))
    ag = amp * g
    return np.column_stack([
        np.ones_like(g),
        g,
        ag * 2 * FOUR_LN2 * dx / wx ** 2,
        ag * 2 * FOUR_LN2 * dy / wy ** 2,
        ag * 2 * FOUR_LN2 * dx ** 2 / wx ** 3,
        ag * 2 * FOUR_LN2 * dy ** 2 / wy ** 3,
    ])


def binomial_weights(p, shots):
    """1/variance of a shot-noise probability estimate, floored at (1/shots)^2."""
    p = np.asarray(p, dtype=float)
    return 1.0 / np.maximum(p * (1.0 - p) / shots, 1.0 / shots ** 2)


def _initial_guess(xs, ys, v, polarity):
    # centroid and second moments of the background-subtracted signal, taken
    # in a window around the peak of a 3x3-smoothed copy so that shot noise
    # far from the spot does not drag the start point
    sign = 1.0 if polarity == "peak" else -1.0
    off = float(np.median(v))
    sm = uniform_filter(v, size=3, mode="nearest")
    iy, ix = np.unravel_index(np.argmax(sign * (sm - off)), v.shape)
    half = max(2, min(v.shape) // 4)
    win = (slice(max(iy - half, 0), iy + half + 1), slice(max(ix - half, 0), ix + half + 1))
    sig = np.clip(sign * (v[win] - off), 0.0, None)
    xx, yy = np.meshgrid(xs[win[1]], ys[win[0]])
    if sig.sum() <= 0:
        sig = np.ones_like(sig)
    w = sig / sig.sum()
    x0, y0 = float((w * xx).sum()), float((w * yy).sum())
    sx = math.sqrt(max(float((w * (xx - x0) ** 2).sum()), 0.25))
    sy = math.sqrt(max(float((w * (yy - y0) ** 2).sum()), 0.25))
    extent = max(xs.max() - xs.min(), ys.max() - ys.min())
    wx = min(max(2.3548 * sx, 1.0), extent)
    wy = min(max(2.3548 * sy, 1.0), extent)
    amp = float(sm[iy, ix] - off)
    if amp == 0:
        amp = float(v[iy, ix] - off) or sign
    return np.array([off, amp, x0, y0, wx, wy])


def fit_gaussian2d(image, polarity="peak", weights="binomial"):
    """Levenberg-Marquardt fit of a 2-D Gaussian to a scan image.

    ``image`` is a :class:`~gsdion.sequencer.ScanImage` or a tuple
    ``(x, y, values[, shots])``. Pixel weights are binomial when the shot count
    is known and ``weights="binomial"``; otherwise uniform. Fitting happens in
    pixel units about the grid center so results do not depend on the origin.
    """
    if polarity not in ("peak", "dip"):
        raise ValidationError(f"unknown polarity {polarity!r}")
    if isinstance(image, tuple):
        x, y, values = (np.asarray(a, dtype=float) for a in image[:3])
        shots = image[3] if len(image) > 3 else None
    else:
        x, y, values, shots = image.x, image.y, image.probabilities, image.shots
    values = np.asarray(values, dtype=float)
    if values.shape != (len(y), len(x)):
        raise ValidationError("values do not match the axes")
    if values.size < 9:
        raise ValidationError("fit needs at least 9 pixels")
    if not np.all(np.isfinite(values)):
        raise ValidationError("image contains non-finite values")
    if np.ptp(values) == 0:
        raise DegenerateInputError("constant image has no spot to fit")

    px, py = float(x[1] - x[0]), float(y[1] - y[0])
    cx, cy = float(x[len(x) // 2]), float(y[len(y) // 2])
    xs, ys = (x - cx) / px, (y - cy) / py
    xx, yy = np.meshgrid(xs, ys)
    xf, yf, vf = xx.ravel(), yy.ravel(), values.ravel()
    if shots is not None and weights == "binomial":
        sw = np.sqrt(binomial_weights(vf, shots))
    else:
        sw = np.ones_like(vf)

    p0 = _initial_guess(xs, ys, values, polarity)

    def resid(p):
        return sw * (gaussian2d_model(p, xf, yf) - vf)

    def jac(p):
        return sw[:, None] * gaussian2d_jacobian(p, xf, yf)

    try:
        res = least_squares(resid, p0, jac=jac, method="lm", xtol=XTOL, ftol=1e-12, gtol=1e-12,
                            max_nfev=MAX_ITER)
        p, ok, nfev = res.x, res.status > 0, res.nfev
        r = res.fun
    except (ValueError, np.linalg.LinAlgError):
        p, ok, nfev, r = p0, False, 0, resid(p0)
    p = p.copy()
    p[4:] = np.abs(p[4:])
    ok = bool(ok and np.all(np.isfinite(p)) and p[4] > 0 and p[5] > 0)

    dof = max(vf.size - 6, 1)
    jm = jac(p)
    try:
        cov = np.linalg.inv(jm.T @ jm) * float(r @ r) / dof
        err = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        err = np.full(6, math.inf)
        ok = False
    scale = np.array([1.0, 1.0, px, py, abs(px), abs(py)])
    err = err * scale
    names = ("offset", "amplitude", "x0", "y0", "fwhm_x", "fwhm_y")
    return GaussianFit(center=(cx + p[2] * px, cy + p[3] * py), fwhm_x=float(p[4] * abs(px)),
                       fwhm_y=float(p[5] * abs(py)), amplitude=float(p[1]), offset=float(p[0]),
                       stderr=dict(zip(names, map(float, err))), converged=ok,
                       residual_norm=float(np.linalg.norm(r)), nfev=int(nfev))


def resolution_predicted(s_max, t_d, k, fwhm01=C.FWHM01):
    """Image FWHM fwhm01 / sqrt(1 + k s_max t_D) of the rate-model donut scan."""
    if min(s_max, t_d, k, fwhm01) < 0:
        raise ValidationError("inputs must be non-negative")
    return fwhm01 / math.sqrt(1.0 + k * s_max * t_d)


def fwhm01_from_fwhm00(fwhm00=C.FWHM00, ratio=C.FWHM_RATIO_00_01):
    return fwhm00 / ratio


def resolution_limit(extinction_ratio, readout_error, fwhm01=C.FWHM01):
    """Noise-limited resolution fwhm01 / sqrt(-ER ln dp)."""
    if not 0 < readout_error < 1:
        raise ValidationError(f"readout error must lie in (0, 1) (got {readout_error})")
    if not extinction_ratio > 0:
        raise ValidationError("extinction ratio must be positive")
    return fwhm01 / math.sqrt(-extinction_ratio * math.log(readout_error))


def improvement_ratio(fluorescence_fwhm, gsd_fwhm):
    if not (fluorescence_fwhm > 0 and gsd_fwhm > 0):
        raise ValidationError("widths must be positive")
    return fluorescence_fwhm / gsd_fwhm


def fit_trajectory(t, y, period_guess=C.MOTION_PERIOD):
    """Least-squares fit of y0 + A cos(2 pi t / T + phi) with T and phi free.

    Initialized by a linear fit at ``period_guess``. Returns a flagged
    (``converged=False``) result instead of raising when the solver fails.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValidationError("t and y must be 1-D arrays of equal length")
    if t.size < 5:
        raise ValidationError("trajectory fit needs at least 5 points")
    if np.ptp(t) < 0.5 * period_guess * (1 - 1e-9):
        raise ValidationError("samples must span at least half a period")
    if not np.all(np.isfinite(y)):
        raise ValidationError("non-finite positions")

    w0 = 2 * math.pi / period_guess
    a = np.column_stack([np.ones_like(t), np.cos(w0 * t), np.sin(w0 * t)])
    (c0, ca, cb), *_ = np.linalg.lstsq(a, y, rcond=None)
    amp0 = math.hypot(ca, cb)
    if amp0 == 0:
        amp0 = 0.5 * float(np.ptp(y)) or 1.0
    scale = max(amp0, float(np.std(y)), 1e-30)
    tau = t / period_guess
    p0 = np.array([c0 / scale, amp0 / scale, 1.0, math.atan2(-cb, ca)])

    def resid(p):
        return p[0] + p[1] * np.cos(2 * math.pi * tau / p[2] + p[3]) - y / scale

    def jac(p):
        arg = 2 * math.pi * tau / p[2] + p[3]
        s = np.sin(arg)
        return np.column_stack([np.ones_like(tau), np.cos(arg),
                                p[1] * s * 2 * math.pi * tau / p[2] ** 2, -p[1] * s])

    try:
        res = least_squares(resid, p0, jac=jac, method="lm", xtol=1e-12, ftol=1e-14, gtol=1e-14,
                            max_nfev=MAX_ITER)
        p, ok = res.x.copy(), res.status > 0
    except (ValueError, np.linalg.LinAlgError):
        p, ok = p0.copy(), False
    if p[1] < 0:
        p[1], p[3] = -p[1], p[3] + math.pi
    p[3] = math.pi - (math.pi - p[3]) % (2 * math.pi)
    ok = bool(ok and np.all(np.isfinite(p)) and p[2] > 0)

    r = resid(p)
    jm = jac(p)
    dof = max(t.size - 4, 1)
    try:
        cov = np.linalg.inv(jm.T @ jm) * float(r @ r) / dof
        err = np.sqrt(np.clip(np.diag(cov), 0.0, None)) * np.array([scale, scale, period_guess, 1.0])
    except np.linalg.LinAlgError:
        err = np.full(4, math.inf)
    return TrajectoryFit(amplitude=float(p[1] * scale), period=float(p[2] * period_guess),
                         phase=float(p[3]), offset=float(p[0] * scale),
                         stderr=dict(zip(("offset", "amplitude", "period", "phase"), map(float, err))),
                         converged=ok)


def image_fwhm(image, polarity="peak"):
    """Mean of the two fitted widths; raises AnalysisError for a failed fit."""
    fit = fit_gaussian2d(image, polarity)
    if not fit.converged:
        raise AnalysisError("Gaussian fit did not converge")
    return 0.5 * (fit.fwhm_x + fit.fwhm_y), fit
