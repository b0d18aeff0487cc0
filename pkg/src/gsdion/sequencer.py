"""Simulated measurement sequences: donut scans, shot readout, driven motion and drift."""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, is_dataclass

import numpy as np

from . import constants as C
from .atom import DepletionPhysics, DepletionPulse, RECTANGULAR, depletion_map, p0_lookup
from .errors import ConfigurationError, ValidationError
from .optics import BeamProfile


@dataclass(frozen=True)
class ReadoutModel:
    error: float = C.READOUT_ERROR

    def __post_init__(self):
        if not 0 <= self.error < 0.5:
            raise ValidationError(f"readout error must lie in [0, 0.5) (got {self.error})")

    def p_eff(self, p):
        """Probability that one shot reads 'dark' when the true dark probability is p."""
        return p * (1.0 - self.error) + (1.0 - p) * self.error


@dataclass(frozen=True)
class ThermalBlur:
    """Gaussian wave packet of the Doppler-cooled ion (per axis RMS)."""

    rms: float = C.WAVEPACKET_RMS
    order: int = 7  # Gauss-Hermite nodes per axis
    per_shot: bool = False  # sample a position for every shot instead of averaging

    def __post_init__(self):
        if self.rms < 0:
            raise ValidationError("wave-packet size must be non-negative")
        if self.order < 1:
            raise ValidationError("quadrature order must be positive")

    def nodes(self):
        """(displacements (q, 2), weights (q,)) for averaging over the packet."""
        if self.rms == 0:
            return np.zeros((1, 2)), np.ones(1)
        u, w = np.polynomial.hermite_e.hermegauss(self.order)
        w = w / w.sum()
        ux, uy = np.meshgrid(u, u)
        wx, wy = np.meshgrid(w, w)
        return self.rms * np.column_stack([ux.ravel(), uy.ravel()]), (wx * wy).ravel()


def _default_persistence():
    # random-walk persistence time that gives the quoted mean speed and the
    # quoted excursion over the quoted window: speed * sqrt(tau * window) = bound
    return (C.DRIFT_BOUND / C.DRIFT_SPEED) ** 2 / 160.0


@dataclass(frozen=True)
class DriftModel:
    """Bounded 2-D random walk of the ion relative to the optics.

    The drift moves at constant ``speed`` in a direction redrawn every
    ``persistence`` seconds, and reflects at +-``bound`` on each axis.
    """

    speed: float = C.DRIFT_SPEED
    bound: float = C.DRIFT_BOUND
    persistence: float = field(default_factory=_default_persistence)

    def __post_init__(self):
        if self.speed < 0 or self.bound <= 0 or self.persistence <= 0:
            raise ValidationError("drift speed must be >= 0, bound and persistence > 0")

    def positions(self, times, rng):
        """Drift displacement (n, 2) at the sorted ``times`` (seconds from 0)."""
        times = np.asarray(times, dtype=float)
        if times.size and (np.any(np.diff(times) < 0) or times[0] < 0):
            raise ValidationError("drift times must be sorted and non-negative")
        n_seg = int(math.ceil((times[-1] if times.size else 0.0) / self.persistence)) + 1
        angles = rng.uniform(0.0, 2 * math.pi, n_seg)
        out = np.empty((times.size, 2))
        pos = np.zeros(2)
        t_prev = 0.0
        for i, t in enumerate(times):
            while t_prev < t:
                seg = int(t_prev // self.persistence)
                t_next = min(t, (seg + 1) * self.persistence)
                if t_next <= t_prev:  # float guard at segment boundaries
                    t_next = min(t, t_prev + self.persistence)
                v = self.speed * np.array([math.cos(angles[seg]), math.sin(angles[seg])])
                pos = _reflect(pos + v * (t_next - t_prev), self.bound)
                t_prev = t_next
            out[i] = pos
        return out


def _reflect(x, bound):
    # fold onto [-bound, bound] (mirror reflection at the walls)
    y = np.mod(x + bound, 4 * bound)
    return np.where(y > 2 * bound, 4 * bound - y, y) - bound


@dataclass(frozen=True)
class IonModel:
    position: tuple = (0.0, 0.0)
    blur: ThermalBlur = None
    drift: DriftModel = None


@dataclass(frozen=True)
class ImagingConfig:
    n: int = 20  # scan indices 0..n on each axis
    pitch: float = 50e-9
    center: tuple = (0.0, 0.0)
    shots: int = C.SHOTS
    cooling_time: float = C.COOLING_TIME
    pump_time: float = C.PUMP_TIME
    detect_time: float = C.DETECT_TIME
    pulse: DepletionPulse = DepletionPulse(C.IMAGING_S_MAX, C.IMAGING_PULSE)
    mode: str = "rate"
    seed: int = 0

    def __post_init__(self):
        if self.shots < 1 or int(self.shots) != self.shots:
            raise ValidationError(f"shots must be a positive integer (got {self.shots})")
        if not self.pitch > 0:
            raise ValidationError("scan pitch must be positive")
        if self.n < 1:
            raise ValidationError("scan needs at least 2 points per axis")
        if min(self.cooling_time, self.pump_time, self.detect_time) < 0:
            raise ValidationError("sequence times must be non-negative")

    @property
    def axis(self):
        return (np.arange(self.n + 1) - 0.5 * self.n) * self.pitch

    @property
    def x(self):
        return self.center[0] + self.axis

    @property
    def y(self):
        return self.center[1] + self.axis

    def offsets(self):
        """Donut-center positions, shape (n+1, n+1, 2) indexed [iy, ix]."""
        xx, yy = np.meshgrid(self.x, self.y)
        return np.stack([xx, yy], axis=-1)

    @property
    def dwell(self):
        """Wall time per pixel: every shot cools, pumps, depletes and detects."""
        return self.shots * (self.cooling_time + self.pump_time + self.pulse.t_d + self.detect_time)


@dataclass(frozen=True)
class ScanImage:
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    shots: int = C.SHOTS
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.shape != (len(self.y), len(self.x)):
            raise ValidationError("count matrix does not match the scan axes")
        if np.any(counts < 0) or np.any(counts > self.shots):
            raise ValidationError("dark counts must lie in [0, shots]")
        for name in ("x", "y", "counts"):
            a = np.array(getattr(self, name))
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    @property
    def probabilities(self):
        return self.counts / self.shots

    @property
    def pitch(self):
        return float(self.x[1] - self.x[0])


def config_hash(obj):
    """Stable short hash of a (nested) dataclass configuration."""
    return hashlib.sha256(_canonical(obj).encode()).hexdigest()[:16]


def _canonical(obj):
    if is_dataclass(obj):
        inner = ",".join(f"{f.name}={_canonical(getattr(obj, f.name))}" for f in fields(obj))
        return f"{type(obj).__name__}({inner})"
    if isinstance(obj, (list, tuple)):
        return "(" + ",".join(_canonical(v) for v in obj) + ")"
    if isinstance(obj, float):
        return repr(obj)
    return repr(obj)


def readout_sample(p_dark_true, shots, model=ReadoutModel(), rng=None):
    """Fraction of ``shots`` single-shot detections that read dark."""
    if not 0 <= p_dark_true <= 1:
        raise ValidationError("probability must lie in [0, 1]")
    rng = np.random.default_rng() if rng is None else rng
    return int(rng.binomial(int(shots), model.p_eff(p_dark_true))) / shots


def _pixel_rngs(seed, n, stream=0):
    # one independent generator per pixel, so any evaluation order agrees
    root = np.random.SeedSequence(seed, spawn_key=(stream,))
    return [np.random.default_rng(s) for s in root.spawn(n)]


def _draw_counts(p_eff, shots, rngs, threads):
    def one(i):
        return rngs[i].binomial(shots, p_eff[i])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return np.array(list(pool.map(one, range(len(rngs)))))
    return np.array([one(i) for i in range(len(rngs))])


def run_imaging(cfg=ImagingConfig(), beam=None, phys=None, ion=IonModel(), readout=ReadoutModel(),
                system=None, lookup=None, threads=1):
    """Raster-scan the donut over the ion and read every pixel out with ``shots`` shots."""
    beam = BeamProfile.from_valley_fwhm(C.FWHM01, cfg.pulse.s, C.EXTINCTION_RATIO) if beam is None else beam
    phys = DepletionPhysics.calibrated() if phys is None else phys
    offsets = cfg.offsets()
    shape = offsets.shape[:2]
    npix = shape[0] * shape[1]
    flat = offsets.reshape(npix, 2)

    if ion.drift is not None:
        times = (np.arange(npix) + 0.5) * cfg.dwell
        drift_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
        drift = ion.drift.positions(times, drift_rng)
    else:
        drift = np.zeros((npix, 2))
    ion_pos = np.asarray(ion.position, dtype=float) + drift  # (npix, 2)

    blur = ion.blur
    rngs = _pixel_rngs(cfg.seed, npix)
    kw = dict(mode=cfg.mode, system=system, lookup=lookup)
    if blur is not None and blur.per_shot:
        counts = np.empty(npix, dtype=np.int64)
        for i in range(npix):
            delta = rngs[i].normal(0.0, blur.rms, (cfg.shots, 2)) if blur.rms > 0 else np.zeros((cfg.shots, 2))
            p = depletion_map(beam, cfg.pulse, phys, (0.0, 0.0), flat[i] - ion_pos[i] - delta, **kw)
            counts[i] = int(np.sum(rngs[i].random(cfg.shots) < readout.p_eff(p)))
        p_true = None
    else:
        disp, w = (np.zeros((1, 2)), np.ones(1)) if blur is None else blur.nodes()
        rel = flat[:, None, :] - ion_pos[:, None, :] - disp[None, :, :]
        p_true = depletion_map(beam, cfg.pulse, phys, (0.0, 0.0), rel, **kw) @ w
        p_true = np.clip(p_true, 0.0, 1.0)
        counts = _draw_counts(readout.p_eff(p_true), cfg.shots, rngs, threads if ion.drift is None else 1)

    lo, hi = cfg.axis[0] + 3 * cfg.pitch, cfg.axis[-1] - 3 * cfg.pitch
    rel_ion = np.asarray(ion.position) - np.asarray(cfg.center)
    covered = bool(lo <= rel_ion[0] <= hi and lo <= rel_ion[1] <= hi)
    meta = {
        "config_hash": config_hash((cfg, beam, phys, ion, readout)),
        "seed": cfg.seed,
        "coverage_warning": not covered,
        "execution": "sequential" if ion.drift is not None or threads <= 1 else f"parallel({threads})",
        "image_time_s": npix * cfg.dwell,
        "drift_end": tuple(drift[-1]),
    }
    return ScanImage(cfg.x, cfg.y, counts.reshape(shape), cfg.shots, meta)


def drive_amplitude(force, omega_d, omega_y=C.OMEGA_Y, t_d=None, mass=C.ION_MASS):
    """Oscillation amplitude after driving for ``t_d`` from rest.

    Off resonance A = 2F/(m(wy^2 - wd^2)) sin((wy - wd) t_d / 2); the resonant
    limit A = F t_d / (2 m wy) is used when |wd - wy| t_d < 1e-6.
    """
    if not mass > 0:
        raise ValidationError("mass must be positive")
    t_d = C.DRIVE_CYCLES * 2 * math.pi / omega_d if t_d is None else t_d
    if abs(omega_d - omega_y) * t_d < 1e-6:
        return force * t_d / (2.0 * mass * omega_y)
    return (2.0 * force / (mass * (omega_y ** 2 - omega_d ** 2))
            * math.sin((omega_y - omega_d) * t_d / 2.0))


@dataclass(frozen=True)
class MotionConfig:
    omega_y: float = C.OMEGA_Y
    omega_d: float = None  # None -> resonant drive
    drive_cycles: int = C.DRIVE_CYCLES
    drive_force: float = C.DRIVE_FORCE
    mass: float = C.ION_MASS
    phase0: float = 0.0
    delays_per_period: int = 10
    periods: int = 1
    area: float = C.MOTION_AREA
    points: int = C.MOTION_POINTS
    s_max: float = C.MOTION_S_MAX
    t_d: float = C.MOTION_PULSE
    shots: int = C.SHOTS
    center: tuple = (0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        if self.points < 3 or self.delays_per_period < 1 or self.periods < 1:
            raise ValidationError("motion scan needs >= 3 points and >= 1 delay")
        if not self.t_d > 0:
            raise ValidationError("pulse duration must be positive")
        if self.t_d >= self.period / 4:
            raise ConfigurationError(
                f"pulse {self.t_d:.3g} s is not short against the motion period {self.period:.3g} s")

    @property
    def drive_frequency(self):
        return self.omega_y if self.omega_d is None else self.omega_d

    @property
    def period(self):
        return 2 * math.pi / self.omega_y

    @property
    def drive_time(self):
        return self.drive_cycles * 2 * math.pi / self.drive_frequency

    @property
    def pitch(self):
        return self.area / self.points

    @property
    def amplitude(self):
        return drive_amplitude(self.drive_force, self.drive_frequency, self.omega_y, self.drive_time, self.mass)

    def delays(self):
        n = self.delays_per_period * self.periods
        return np.arange(n) * (self.period / self.delays_per_period)

    def position(self, t):
        """Ion y position t seconds after the drive ends."""
        return self.center[1] + self.amplitude * math.cos(self.omega_y * t + self.phase0)

    def imaging(self, index=0):
        # even point count: the grid is symmetric about the center, no point on it
        axis_n = self.points - 1
        return ImagingConfig(n=axis_n, pitch=self.pitch, center=self.center, shots=self.shots,
                             pulse=DepletionPulse(self.s_max, self.t_d), mode="lookup",
                             seed=_child_seed(self.seed, index))


def _child_seed(seed, index):
    return int(np.random.SeedSequence(seed, spawn_key=(2, index)).generate_state(1, np.uint64)[0])


def motion_beam(s_max=C.MOTION_S_MAX):
    return BeamProfile.from_valley_fwhm(C.FWHM01, s_max, C.EXTINCTION_RATIO)


def run_motion(cfg=MotionConfig(), beam=None, phys=None, readout=ReadoutModel(), blur=ThermalBlur(),
               threads=1):
    """One 2-D scan per delay after the drive; the ion is frozen at the pulse midpoint."""
    beam = motion_beam(cfg.s_max) if beam is None else beam
    phys = DepletionPhysics.calibrated() if phys is None else phys
    system = phys.level_system()
    s_top = max(500.0, 1.01 * phys.coupling * (beam.s_max + beam.s0))
    lookup = p0_lookup(system, cfg.t_d, s_max=float(s_top), envelope=RECTANGULAR)
    out = []
    for k, t in enumerate(cfg.delays()):
        y = cfg.position(t + 0.5 * cfg.t_d)
        ion = IonModel(position=(cfg.center[0], y), blur=blur)
        img = run_imaging(cfg.imaging(k), beam, phys, ion, readout, system=system, lookup=lookup,
                          threads=threads)
        img.metadata.update({"delay_s": float(t), "delay_index": k, "ion_y_m": y})
        out.append((float(t), img))
    return out
