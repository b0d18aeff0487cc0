"""Binary (Lee) holograms for a micromirror device and their first diffraction order."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import constants as C
from .errors import ConfigurationError, ValidationError
from .optics import ComplexField, GridSpec

PROPORTIONAL = "proportional"
LINEARIZED = "linearized"


@dataclass(frozen=True)
class BinaryHologram:
    """On/off micromirror pattern over the active region.

    The carrier phase at mirror (row y, column x) is 2*pi*(x + tilt*y)/period.
    """

    bits: np.ndarray = field(repr=False)
    period: float = C.GRATING_PERIOD
    tilt: float = 0.0
    mirror_pitch: float = C.MIRROR_PITCH
    region_origin: tuple = (0, 0)

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise ValidationError("hologram bits must be a 2-D array")
        if self.period < 4:
            raise ValidationError(f"grating period must be >= 4 mirrors (got {self.period})")
        bits = bits.astype(bool, copy=True)
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    @property
    def height(self):
        return self.bits.shape[0]

    @property
    def width(self):
        return self.bits.shape[1]

    @property
    def carrier(self):
        """Carrier spatial frequency (fx, fy) in cycles per mirror."""
        return 1.0 / self.period, self.tilt / self.period

    @property
    def on_fraction(self):
        return float(self.bits.mean())


@dataclass(frozen=True)
class PatchSpec:
    origin: tuple  # (row, column) of the top-left mirror
    size: int = C.PATCH_SIZE
    phase_offset: float = 0.0

    def __post_init__(self):
        if self.size < 1:
            raise ValidationError("patch size must be positive")

    def slices(self):
        r, c = self.origin
        return slice(r, r + self.size), slice(c, c + self.size)

    def overlaps(self, other):
        (r1, c1), (r2, c2) = self.origin, other.origin
        return (r1 < r2 + other.size and r2 < r1 + self.size
                and c1 < c2 + other.size and c2 < c1 + self.size)


@dataclass(frozen=True)
class HologramTiming:
    max_switch_rate: float = C.MAX_SWITCH_RATE
    switch_time: float = C.SWITCH_TIME

    def __post_init__(self):
        # a pattern switch has to fit within one frame of the maximum rate
        if not 0 < self.switch_time * self.max_switch_rate <= 1.1:
            raise ValidationError("switch time does not fit in one frame at the maximum switching rate")


def carrier_cycles(shape, period, tilt=0.0):
    """Carrier phase in cycles for every mirror of a region of ``shape``."""
    y, x = np.indices(shape, dtype=float)
    return (x + tilt * y) / period


_TIE_BIAS = 1e-9  # cycles


def _binarize(cycles, phase, duty):
    # on iff the local fringe phase lies in [-duty/2, duty/2) cycles,
    # i.e. cos(carrier + phase) > cos(pi * duty) with a half-open boundary;
    # the tiny bias makes exact ties break the same way despite rounding
    frac = np.mod(cycles + phase / (2 * math.pi) + 0.5 * duty + _TIE_BIAS, 1.0)
    return frac < duty


def duty_cycle(amplitude, mode=PROPORTIONAL, reference_duty=0.5):
    a = np.asarray(amplitude, dtype=float)
    if mode == PROPORTIONAL:
        return 0.5 * a
    if mode == LINEARIZED:
        return np.arcsin(a * math.sin(math.pi * reference_duty)) / math.pi
    raise ValidationError(f"unknown encoding mode {mode!r}")


def lee_encode(amplitude, phase, period=C.GRATING_PERIOD, mode=PROPORTIONAL, tilt=0.0,
               mirror_pitch=C.MIRROR_PITCH):
    """Binarize a target amplitude in [0, 1] and phase (rad) onto a carrier grating.

    ``proportional``: on-ratio = a/2, first-order amplitude ~ sin(pi a/2).
    ``linearized``: duty chosen so the first-order amplitude is exactly ~ a.
    """
    amplitude = np.asarray(amplitude, dtype=float)
    phase = np.broadcast_to(np.asarray(phase, dtype=float), amplitude.shape)
    if amplitude.ndim != 2:
        raise ValidationError("amplitude map must be 2-D")
    if not np.all(np.isfinite(amplitude)) or amplitude.min() < 0 or amplitude.max() > 1:
        raise ValidationError("amplitude must lie in [0, 1]")
    if not np.all(np.isfinite(phase)):
        raise ValidationError("phase map contains non-finite values")
    duty = duty_cycle(amplitude, mode)
    bits = _binarize(carrier_cycles(amplitude.shape, period, tilt), phase, duty)
    return BinaryHologram(bits, period=period, tilt=tilt, mirror_pitch=mirror_pitch)


def default_iris_radius(holo):
    fx, fy = holo.carrier
    return 0.4 * math.hypot(fx, fy)


def hologram_grid(holo):
    return GridSpec(holo.width, holo.height, holo.mirror_pitch)


def first_order_spectrum(holo, incident=None):
    """Spectrum of (bits x incident) weighted by the square-mirror aperture."""
    field_in = 1.0 if incident is None else _incident_values(holo, incident)
    spec = np.fft.fft2(holo.bits * field_in)
    fy = np.fft.fftfreq(holo.height)[:, None]
    fx = np.fft.fftfreq(holo.width)[None, :]
    return spec * np.sinc(fx) * np.sinc(fy), fx, fy


def _incident_values(holo, incident):
    values = incident.values if isinstance(incident, ComplexField) else np.asarray(incident)
    if values.shape != holo.bits.shape:
        raise ValidationError(f"incident field {values.shape} does not match hologram {holo.bits.shape}")
    return values


def iris_mask(holo, iris_radius=None):
    r = default_iris_radius(holo) if iris_radius is None else iris_radius
    cx, cy = holo.carrier
    if r >= 0.5 * math.hypot(cx, cy):
        raise ConfigurationError("iris reaches the zeroth or second diffraction order")
    if r <= 0:
        raise ConfigurationError("iris radius must be positive")
    fy = np.fft.fftfreq(holo.height)[:, None]
    fx = np.fft.fftfreq(holo.width)[None, :]
    return (fx - cx) ** 2 + (fy - cy) ** 2 <= r * r


def demodulation(holo):
    cx, cy = holo.carrier
    y, x = np.indices(holo.bits.shape, dtype=float)
    return np.exp(-2j * math.pi * (cx * x + cy * y))


def first_order_field(holo, incident=None, iris_radius=None):
    """Field behind the iris that passes only the +1 order, shifted back on axis.

    The result is normalized so that a uniform ideal grating of duty q gives
    amplitude sin(pi q)/pi (times the incident amplitude).
    """
    mask = iris_mask(holo, iris_radius)
    spec, _, _ = first_order_spectrum(holo, incident)
    filtered = np.fft.ifft2(spec * mask)
    return ComplexField(hologram_grid(holo), filtered * demodulation(holo))


def first_order_efficiency(holo, incident=None, iris_radius=None):
    """First-order power behind the iris as a fraction of the power incident on the region."""
    inc = np.ones(holo.bits.shape) if incident is None else _incident_values(holo, incident)
    out = first_order_field(holo, incident, iris_radius)
    return float(np.sum(out.intensity) / np.sum(np.abs(inc) ** 2))


def patch_origins(region=C.DMD_REGION, size=C.PATCH_SIZE):
    """Top-left corners of the patch tiling, as a (n, n, 2) integer array."""
    n = region // size
    idx = np.arange(n) * size
    rows, cols = np.meshgrid(idx, idx, indexing="ij")
    return np.stack([rows, cols], axis=-1)


def sensing_pattern(reference, sample, shift, region=(C.DMD_REGION, C.DMD_REGION),
                    period=C.GRATING_PERIOD, tilt=None, mirror_pitch=C.MIRROR_PITCH):
    """Two-patch interferometry hologram; every other mirror is off.

    Both patches carry the same global 50%-duty carrier; the sample fringes
    are advanced by ``shift`` (fringes move by shift*period/2pi mirrors toward
    +x), which retards the sample's first-order phase by ``shift``. The tilted
    default carrier dithers the fringe position across the rows of a patch so
    that the effective phase step is nearly continuous rather than quantized
    to 2*pi/period.
    """
    if reference.overlaps(sample):
        raise ValidationError("reference and sample patches overlap")
    for p in (reference, sample):
        r, c = p.origin
        if r < 0 or c < 0 or r + p.size > region[0] or c + p.size > region[1]:
            raise ValidationError(f"patch at {p.origin} lies outside the active region")
        if p.size < period:
            raise ValidationError("patch must be at least one grating period wide")
    if tilt is None:
        tilt = C.SENSING_TILT
    cycles = carrier_cycles(region, period, tilt)
    bits = np.zeros(region, dtype=bool)
    for p, phase in ((reference, reference.phase_offset), (sample, sample.phase_offset - shift)):
        sl = p.slices()
        bits[sl] = _binarize(cycles[sl], phase, 0.5)
    return BinaryHologram(bits, period=period, tilt=tilt, mirror_pitch=mirror_pitch)
