"""Sampled PID stabilization of the trap RF voltage.

The analog chain is reduced to a linear map: the sampled voltage is
``v_nominal * (1 + d) + gain * attenuation * DAC(u)`` plus sensor noise, read
by an ADC with a fixed resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import constants as C
from ._backend import kernels
from .errors import ValidationError

REFERENCE_OPEN_LOOP_STD = 1000e-6  # relative, over one hour
REFERENCE_DURATION = 3600.0

# tuned by grid search on the reference noise model (see tune_gains)
DEFAULT_KP = 0.0
DEFAULT_KI = 15.0
DEFAULT_KD = 0.0


def _reference_walk_step(rate=C.LOOP_RATE):
    # a random walk of N steps of size sigma has expected sample variance
    # ~ sigma^2 N / 6 about its mean
    n = REFERENCE_DURATION * rate
    return REFERENCE_OPEN_LOOP_STD * math.sqrt(6.0 / n)


@dataclass(frozen=True)
class PlantModel:
    """Relative disturbance of the sampled voltage.

    ``walk_step``: per-sample random-walk increment (relative); ``white``:
    per-sample white noise on the voltage (relative); ``step`` is added from
    ``step_time`` on. ``sensor_noise`` is additive volts at the ADC input.
    """

    v_nominal: float = C.SET_POINT
    walk_step: float = field(default_factory=_reference_walk_step)
    white: float = 20e-6
    step: float = 0.0
    step_time: float = 0.0
    sensor_noise: float = 0.0

    def __post_init__(self):
        if min(self.walk_step, self.white, self.sensor_noise) < 0:
            raise ValidationError("noise parameters must be non-negative")
        if not self.v_nominal > 0:
            raise ValidationError("nominal voltage must be positive")

    @classmethod
    def quiet(cls, **kw):
        return cls(walk_step=0.0, white=0.0, **kw)

    def disturbance(self, n, dt, rng):
        """Relative disturbance d_k and additive ADC-input noise for n samples."""
        walk = np.cumsum(rng.normal(0.0, self.walk_step, n)) if self.walk_step > 0 else np.zeros(n)
        white = rng.normal(0.0, self.white, n) if self.white > 0 else np.zeros(n)
        t = np.arange(n) * dt
        d = walk + white + np.where(t >= self.step_time, self.step, 0.0)
        noise = rng.normal(0.0, self.sensor_noise, n) if self.sensor_noise > 0 else np.zeros(n)
        return d, noise


@dataclass(frozen=True)
class LoopConfig:
    rate: float = C.LOOP_RATE
    set_point: float = C.SET_POINT
    kp: float = DEFAULT_KP
    ki: float = DEFAULT_KI
    kd: float = DEFAULT_KD
    adc_lsb: float = C.ADC_RESOLUTION
    dac_bits: int = C.DAC_BITS
    dac_span: tuple = (-1.0, 1.0)
    attenuation_db: float = C.ATTENUATION_DB
    actuator_gain: float = 1.0  # sampled volts per attenuated actuator volt
    closed: bool = True

    def __post_init__(self):
        if not self.rate > 0:
            raise ValidationError("sample rate must be positive")
        if not all(math.isfinite(g) for g in (self.kp, self.ki, self.kd)):
            raise ValidationError("PID gains must be finite")
        if not self.dac_span[0] < self.dac_span[1]:
            raise ValidationError("DAC span must be increasing")
        if self.dac_bits < 1 or self.adc_lsb <= 0:
            raise ValidationError("converter resolutions must be positive")

    @property
    def dt(self):
        return 1.0 / self.rate

    @property
    def dac_lsb(self):
        return (self.dac_span[1] - self.dac_span[0]) / 2 ** self.dac_bits

    @property
    def attenuation(self):
        return 10.0 ** (-self.attenuation_db / 20.0)

    def open(self):
        return LoopConfig(**{**self.__dict__, "closed": False})


@dataclass(frozen=True)
class LoopResult:
    t: np.ndarray = field(repr=False)
    rel_error: np.ndarray = field(repr=False)
    actuator: np.ndarray = field(repr=False)
    diverged: bool = False

    @property
    def std_ppm(self):
        return float(np.std(self.rel_error) * 1e6)

    def spikes(self, threshold=250e-6):
        return int(np.count_nonzero(np.abs(self.rel_error) > threshold))


def _diverged(rel, limit=0.01, run=10):
    over = np.abs(rel) > limit
    count = 0
    for flag in over:
        count = count + 1 if flag else 0
        if count >= run:
            return True
    return False


def simulate_loop(plant=PlantModel(), cfg=LoopConfig(), duration=REFERENCE_DURATION, rng=None, seed=0):
    """Run the sampled loop for ``duration`` seconds; returns relative errors per sample."""
    n = int(round(duration * cfg.rate))
    if n < 10:
        raise ValidationError("simulate at least 10 samples")
    rng = np.random.default_rng(seed) if rng is None else rng
    d, noise = plant.disturbance(n, cfg.dt, rng)
    measured, actuator = kernels.pid_loop(
        np.ascontiguousarray(d), np.ascontiguousarray(noise), plant.v_nominal, cfg.set_point,
        cfg.kp, cfg.ki, cfg.kd, cfg.dt, cfg.adc_lsb, cfg.dac_lsb, cfg.dac_span[0], cfg.dac_span[1],
        cfg.attenuation, cfg.actuator_gain, cfg.closed)
    rel = (np.asarray(measured) - cfg.set_point) / cfg.set_point
    return LoopResult(np.arange(n) * cfg.dt, rel, np.asarray(actuator), _diverged(rel))


@dataclass(frozen=True)
class FrequencyDrift:
    delta_omega: np.ndarray = field(repr=False)  # rad/s
    std: float  # rad/s
    max_excursion: float  # rad/s, peak-to-peak over the window

    @property
    def std_hz(self):
        return self.std / (2 * math.pi)

    @property
    def max_excursion_hz(self):
        return self.max_excursion / (2 * math.pi)


def frequency_drift(rel_error, omega=C.OMEGA_Y, window=None):
    """Secular-frequency deviation for a relative voltage error (dw/w = dV/V).

    ``window`` (samples) limits the peak-to-peak excursion to the worst window.
    """
    rel = np.asarray(rel_error, dtype=float)
    dw = omega * rel
    if window is None or window >= dw.size:
        excursion = float(np.ptp(dw)) if dw.size else 0.0
    else:
        v = sliding_window_view(dw, int(window))
        excursion = float(np.max(v.max(axis=1) - v.min(axis=1)))
    return FrequencyDrift(dw, float(np.std(dw)), excursion)


def within_budget(drift, budget_hz=C.FREQUENCY_BUDGET, margin=10.0):
    """True when the frequency noise sits ``margin`` times below the budget."""
    return drift.std_hz * margin <= budget_hz


def tune_gains(kp_grid, ki_grid, plant=PlantModel(), base=LoopConfig(), duration=REFERENCE_DURATION,
               seeds=(0, 1, 2)):
    """Coarse grid search minimizing the mean closed-loop std over ``seeds``."""
    best = None
    for kp in kp_grid:
        for ki in ki_grid:
            cfg = LoopConfig(**{**base.__dict__, "kp": float(kp), "ki": float(ki)})
            stds = []
            for s in seeds:
                r = simulate_loop(plant, cfg, duration, seed=s)
                stds.append(math.inf if r.diverged else r.std_ppm)
            score = float(np.mean(stds))
            if best is None or score < best[0]:
                best = (score, float(kp), float(ki))
    return best
