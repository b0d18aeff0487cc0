"""Pupil-phase sensing with the ion as a point detector.

A reference patch and a scanned sample patch are switched on together; the
focal-point intensity for three sample phase shifts gives the phase of the
sample relative to the reference. The patch map is unwrapped, interpolated to
mirror resolution and turned into a compensation phase for the donut hologram.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline

from . import constants as C
from .errors import DegenerateInputError, ValidationError
from .hologram import (
    LINEARIZED, BinaryHologram, PatchSpec, _binarize, carrier_cycles, first_order_field, lee_encode,
    sensing_pattern,
)
from .optics import (
    ComplexField, GridSpec, OpticalSystem, focal_grid_for, focus, focus_window, ideal_lg01,
    intensity_at, pupil_waist_for_fwhm,
)

SHIFTS = (0.0, 2 * math.pi / 3, 4 * math.pi / 3)


def wrap(phase):
    """Wrap into (-pi, pi]."""
    return math.pi - np.mod(math.pi - np.asarray(phase, dtype=float), 2 * math.pi)


@dataclass(frozen=True)
class PhaseMap:
    """Phase samples on the patch grid (``cell`` = patch size) or per mirror (``cell`` = 1).

    ``flags`` marks cells whose value was not measured (zero fringe visibility).
    """

    values: np.ndarray = field(repr=False)
    wrapped: bool = False
    cell: int = 1
    flags: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ValidationError("phase map must be 2-D")
        if not np.all(np.isfinite(values)):
            raise ValidationError("phase map contains non-finite values")
        if self.wrapped and (values.max() > math.pi or values.min() <= -math.pi):
            raise ValidationError("wrapped phase map has values outside (-pi, pi]")
        flags = np.zeros(values.shape, bool) if self.flags is None else np.array(self.flags, bool)
        if flags.shape != values.shape:
            raise ValidationError("flag mask does not match the phase map")
        values.flags.writeable = False
        flags.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "flags", flags)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class SensingConfig:
    region: int = C.DMD_REGION
    patch_size: int = C.PATCH_SIZE
    period: float = C.GRATING_PERIOD
    tilt: float = C.SENSING_TILT
    reference: tuple = None  # patch index (row, col); None -> center patch
    shifts: tuple = SHIFTS
    min_visibility: float = 0.05  # |E_sample|/|E_reference| below this is flagged
    noise_counts: float = None  # mean photon counts at full fringe; None -> noiseless
    seed: int = 0

    def __post_init__(self):
        if tuple(self.shifts) != SHIFTS:
            raise ValidationError("sensing uses exactly the three-step shift set")
        if self.region % self.patch_size:
            raise ValidationError("region must be tiled exactly by patches")
        if self.patch_size < self.period:
            raise ValidationError("patch must be at least one grating period wide")
        if self.noise_counts is not None and not self.noise_counts > 0:
            raise ValidationError("noise_counts must be positive")

    @property
    def n_patches(self):
        return self.region // self.patch_size

    @property
    def carrier_tilt(self):
        return self.tilt

    @property
    def reference_index(self):
        if self.reference is None:
            c = self.n_patches // 2
            return (c, c)
        return tuple(int(i) for i in self.reference)

    def patch(self, index, phase_offset=0.0):
        r, c = index
        return PatchSpec((r * self.patch_size, c * self.patch_size), self.patch_size, phase_offset)


def three_step_phase(m0, m1, m2):
    """Phase of m_k = A + B cos(phi - delta_k) for delta_k = 0, 2pi/3, 4pi/3."""
    m0, m1, m2 = (np.asarray(m, dtype=float) for m in (m0, m1, m2))
    num = math.sqrt(3.0) * (m1 - m2)
    den = 2.0 * m0 - m1 - m2
    if np.any((num == 0) & (den == 0)):
        raise DegenerateInputError("zero fringe visibility: m0 = m1 = m2")
    phi = np.arctan2(num, den)
    phi = np.where(phi == -math.pi, math.pi, phi)
    return float(phi) if phi.ndim == 0 else phi


def fringe_modulation(m0, m1, m2):
    """(A, B) of the three-step model."""
    m0, m1, m2 = (np.asarray(m, dtype=float) for m in (m0, m1, m2))
    b = np.hypot(math.sqrt(3.0) * (m1 - m2), 2.0 * m0 - m1 - m2) / 3.0
    return (m0 + m1 + m2) / 3.0, b


def pupil_grid(region, optics):
    """The mirror region imaged onto the objective pupil, filling its diameter."""
    return GridSpec(region, region, optics.pupil_diameter / region)


def pupil_aperture(grid, optics):
    xx, yy = grid.mesh()
    return xx ** 2 + yy ** 2 <= (0.5 * optics.pupil_diameter) ** 2


def _detector_scale(grid, optics):
    # focal field at the optical axis = scale * sum over the masked pupil
    return grid.pitch ** 2 / (optics.wavelength * optics.focal_length)


class _SpectralProbe:
    """Focal-axis field of arbitrary patch holograms under a fixed hidden phase.

    E = sum_f Bhat(f) sinc(f) iris(f) W(f) with W = ifft2(g * demod), which equals
    sampling focus(first_order_field(...) * exp(i aberration)) at the axis.
    """

    def __init__(self, hidden, cfg, optics, incident=None, fft_size=None):
        n = cfg.region
        m = n if fft_size is None else int(fft_size)
        tilt = cfg.carrier_tilt
        self.cfg = cfg
        self.cycles = carrier_cycles((n, n), cfg.period, tilt)
        grid = pupil_grid(n, optics)
        g = np.exp(1j * hidden) * pupil_aperture(grid, optics)
        if incident is not None:
            g = g * incident
        y, x = np.indices((n, n), dtype=float)
        cx, cy = 1.0 / cfg.period, tilt / cfg.period
        w = np.fft.ifft2(g * np.exp(-2j * math.pi * (cx * x + cy * y)), s=(m, m)) * (m * m / (n * n))
        r = 0.4 * math.hypot(cx, cy)
        f = np.fft.fftfreq(m)
        ky = np.nonzero(np.abs(f - cy) <= r)[0]
        kx = np.nonzero(np.abs(f - cx) <= r)[0]
        fy, fx = f[ky][:, None], f[kx][None, :]
        inside = (fx - cx) ** 2 + (fy - cy) ** 2 <= r * r
        self.weight = _detector_scale(grid, optics) * w[np.ix_(ky, kx)] * inside * np.sinc(fx) * np.sinc(fy)
        s = cfg.patch_size
        idx = np.arange(s)
        self._ey = [np.exp(-2j * math.pi * np.outer(f[ky], p * s + idx)) for p in range(cfg.n_patches)]
        self._ex = [np.exp(-2j * math.pi * np.outer(p * s + idx, f[kx])) for p in range(cfg.n_patches)]

    def patch_field(self, index, phase):
        r, c = index
        s = self.cfg.patch_size
        bits = _binarize(self.cycles[r * s:(r + 1) * s, c * s:(c + 1) * s], phase, 0.5)
        spec = self._ey[r] @ bits @ self._ex[c]
        return complex(np.sum(spec * self.weight))


def _direct_intensity(holo, hidden, optics):
    first = first_order_field(holo)
    grid = pupil_grid(holo.width, optics)
    pupil = ComplexField(grid, first.values * np.exp(1j * hidden))
    fgrid = focal_grid_for(grid, optics, pad=2, n=8)
    return intensity_at(focus(pupil, optics, fgrid), (0.0, 0.0))


def _hidden_values(hidden, n):
    values = hidden.values if isinstance(hidden, PhaseMap) else np.asarray(hidden, dtype=float)
    if values.shape != (n, n):
        raise ValidationError(f"hidden aberration {values.shape} does not cover the {n}x{n} region")
    return values


def scan_phase_map(hidden, cfg=SensingConfig(), optics=OpticalSystem(), method="spectral",
                   patches=None):
    """Simulate the full three-step patch scan and return the wrapped patch map.

    ``method="direct"`` builds every sensing hologram and focuses it (slow, used
    as a cross-check); ``"spectral"`` evaluates the same axis intensity from the
    patch spectra only. ``patches`` optionally restricts the scan to a list of
    patch indices (other cells are flagged).
    """
    n = cfg.n_patches
    values = _hidden_values(hidden, cfg.region)
    ref_idx = cfg.reference_index
    rng = np.random.default_rng(cfg.seed) if cfg.noise_counts is not None else None
    out = np.zeros((n, n))
    flags = np.ones((n, n), bool)
    todo = [(r, c) for r in range(n) for c in range(n)] if patches is None else list(patches)

    if method == "spectral":
        probe = _SpectralProbe(values, cfg, optics)
        e_ref = probe.patch_field(ref_idx, 0.0)

        def intensities(idx):
            return [abs(e_ref + probe.patch_field(idx, -d)) ** 2 for d in cfg.shifts], abs(e_ref)
    elif method == "direct":
        ref = cfg.patch(ref_idx)
        e_ref = math.sqrt(_direct_intensity(_reference_only(cfg, ref), values, optics))

        def intensities(idx):
            ms = [_direct_intensity(sensing_pattern(ref, cfg.patch(idx), d, (cfg.region,) * 2, cfg.period,
                                                    cfg.carrier_tilt), values, optics)
                  for d in cfg.shifts]
            return ms, e_ref
    else:
        raise ValidationError(f"unknown scan method {method!r}")

    for idx in todo:
        if tuple(idx) == ref_idx:
            out[ref_idx] = 0.0
            flags[ref_idx] = False
            continue
        ms, a_ref = intensities(tuple(idx))
        if rng is not None:
            scale = cfg.noise_counts / (4.0 * a_ref ** 2)
            ms = [float(rng.poisson(m * scale)) for m in ms]
        _, b = fringe_modulation(*ms)
        # B = 2|E_ref||E_sample|
        full = 2.0 * a_ref ** 2 * (1.0 if rng is None else scale)
        if b <= cfg.min_visibility * full:
            continue
        out[tuple(idx)] = three_step_phase(*ms)
        flags[tuple(idx)] = False
    return PhaseMap(out, wrapped=True, cell=cfg.patch_size, flags=flags)


def _reference_only(cfg, ref):
    bits = np.zeros((cfg.region, cfg.region), bool)
    cycles = carrier_cycles(bits.shape, cfg.period, cfg.carrier_tilt)
    sl = ref.slices()
    bits[sl] = _binarize(cycles[sl], ref.phase_offset, 0.5)
    return BinaryHologram(bits, period=cfg.period, tilt=cfg.carrier_tilt)


def patch_truth(hidden, cfg=SensingConfig()):
    """Patch-mean phase (circular mean) relative to the reference patch, wrapped."""
    values = _hidden_values(hidden, cfg.region)
    n, s = cfg.n_patches, cfg.patch_size
    z = np.exp(1j * values).reshape(n, s, n, s).mean(axis=(1, 3))
    z = z * np.conj(z[cfg.reference_index]) / abs(z[cfg.reference_index])
    return wrap(np.angle(z))


def _inpaint(values, flags):
    # fill flagged cells from the phasor mean of already-known 4-neighbours,
    # sweeping outward until everything is filled
    z = np.exp(1j * values)
    known = ~flags
    if not known.any():
        raise DegenerateInputError("every cell of the phase map is flagged")
    z = np.where(known, z, 0)
    while not known.all():
        acc = np.zeros_like(z)
        cnt = np.zeros(z.shape)
        for axis, step in ((0, 1), (0, -1), (1, 1), (1, -1)):
            zs = np.roll(z, step, axis=axis)
            ks = np.roll(known, step, axis=axis)
            edge = [slice(None)] * 2
            edge[axis] = 0 if step == 1 else -1
            ks[tuple(edge)] = False
            acc += np.where(ks, zs, 0)
            cnt += ks
        fill = (~known) & (cnt > 0)
        mean = acc[fill]
        mag = np.abs(mean)
        mean = np.where(mag > 0, mean / np.where(mag > 0, mag, 1), 1.0)
        z[fill] = mean
        known = known | fill
    return np.angle(z)


def residue_count(wrapped):
    """Number of 2x2 loops whose wrapped phase differences do not sum to zero."""
    v = np.asarray(wrapped, dtype=float)
    d1 = wrap(v[:-1, 1:] - v[:-1, :-1])
    d2 = wrap(v[1:, 1:] - v[:-1, 1:])
    d3 = wrap(v[1:, :-1] - v[1:, 1:])
    d4 = wrap(v[:-1, :-1] - v[1:, :-1])
    q = np.rint((d1 + d2 + d3 + d4) / (2 * math.pi))
    return int(np.count_nonzero(q))


def unwrap_2d(wrapped, reference_row=None):
    """Itoh unwrapping: the reference row first, then every column outward from it.

    Returns ``(unwrapped PhaseMap, residue count)``. Flagged cells are
    inpainted before unwrapping and stay flagged in the output.
    """
    if not isinstance(wrapped, PhaseMap):
        wrapped = PhaseMap(wrap(wrapped), wrapped=True)
    values = wrapped.values
    if wrapped.flags.any():
        values = _inpaint(values, wrapped.flags)
    ny = values.shape[0]
    r0 = ny // 2 if reference_row is None else int(reference_row)
    row = np.unwrap(values[r0])
    out = np.empty_like(values)
    for j in range(values.shape[1]):
        col = values[:, j].copy()
        col[r0] = row[j]
        up = np.unwrap(col[r0::-1])
        down = np.unwrap(col[r0:])
        out[r0::-1, j] = up
        out[r0:, j] = down
    return PhaseMap(out, wrapped=False, cell=wrapped.cell, flags=wrapped.flags), residue_count(values)


def interpolate_to_pixels(patch_map, target=(C.DMD_REGION, C.DMD_REGION)):
    """Bicubic spline through patch-center samples, evaluated at every mirror."""
    if patch_map.wrapped:
        raise ValidationError("interpolate an unwrapped phase map")
    ny, nx = patch_map.shape
    cell = patch_map.cell
    if ny * cell != target[0] or nx * cell != target[1]:
        raise ValidationError(f"{ny}x{nx} patches of {cell} do not tile a {target} region")
    if min(nx, ny) < 4:
        raise ValidationError("bicubic interpolation needs at least 4x4 patches")
    yc = cell * np.arange(ny) + 0.5 * (cell - 1)
    xc = cell * np.arange(nx) + 0.5 * (cell - 1)
    spline = RectBivariateSpline(yc, xc, patch_map.values, kx=3, ky=3, s=0,
                                 bbox=[0, target[0] - 1, 0, target[1] - 1])
    out = spline(np.arange(target[0], dtype=float), np.arange(target[1], dtype=float))
    return PhaseMap(out, wrapped=False, cell=1)


def compensation_phase(measured, target_ideal):
    """Hologram phase whose net pupil phase (after the aberration) is the ideal target."""
    m = measured.values if isinstance(measured, PhaseMap) else np.asarray(measured, float)
    t = target_ideal.values if isinstance(target_ideal, PhaseMap) else np.asarray(target_ideal, float)
    if m.shape != t.shape:
        raise ValidationError(f"measured {m.shape} and target {t.shape} differ in size")
    return PhaseMap(wrap(t - m), wrapped=True, cell=1)


def remove_plane(phase, mask=None):
    """Subtract the least-squares piston + tip + tilt over ``mask``."""
    phase = np.asarray(phase, dtype=float)
    mask = np.ones(phase.shape, bool) if mask is None else mask
    y, x = np.indices(phase.shape, dtype=float)
    a = np.column_stack([np.ones(mask.sum()), x[mask], y[mask]])
    coef, *_ = np.linalg.lstsq(a, phase[mask], rcond=None)
    return phase - (coef[0] + coef[1] * x + coef[2] * y)


def random_smooth_aberration(seed, region=C.DMD_REGION, pv=14 * math.pi, max_step=0.8 * math.pi,
                             patch_size=C.PATCH_SIZE, max_tries=1000):
    """Low-order polynomial phase screen with peak-to-valley ``pv``.

    Tilt dominates; quadratic and cubic terms add curvature. Draws are
    rejected until neighbouring patch centers differ by at most ``max_step``.
    """
    rng = np.random.default_rng(seed)
    t = (np.arange(region) - 0.5 * (region - 1)) / (0.5 * region)
    u, v = np.meshgrid(t, t)
    terms = [u, v, u * u, v * v, u * v, u ** 3, u * u * v, u * v * v, v ** 3]
    sigma = np.array([1.0, 1.0] + [0.35] * 3 + [0.2] * 4)
    centers = (np.arange(region // patch_size) * patch_size + patch_size // 2)
    for _ in range(max_tries):
        coef = rng.normal(0.0, sigma)
        phase = sum(c * p for c, p in zip(coef, terms))
        ptp = np.ptp(phase)
        if ptp == 0:
            continue
        phase = phase * (pv / ptp)
        phase = phase - phase.min() - 0.5 * pv + rng.uniform(-math.pi, math.pi)
        s = phase[np.ix_(centers, centers)]
        step = max(np.abs(np.diff(s, axis=0)).max(), np.abs(np.diff(s, axis=1)).max())
        if step <= max_step:
            return PhaseMap(phase, wrapped=False, cell=1)
    raise ValidationError("could not draw an aberration meeting the step bound")


def donut_target(region=C.DMD_REGION, optics=OpticalSystem(), fwhm00=C.FWHM00):
    """(amplitude in [0,1], ideal LG01 PhaseMap) on the mirror region."""
    grid = pupil_grid(region, optics)
    lg = ideal_lg01(grid, pupil_waist_for_fwhm(fwhm00, optics))
    amp = np.abs(lg.values)
    return amp / amp.max(), PhaseMap(np.angle(lg.values), wrapped=False, cell=1)


def aberrated_pupil(amplitude, holo_phase, hidden, optics=OpticalSystem(), mode=LINEARIZED,
                    period=C.GRATING_PERIOD):
    """Encode, filter the first order and apply the hidden pupil aberration."""
    phase = holo_phase.values if isinstance(holo_phase, PhaseMap) else holo_phase
    holo = lee_encode(amplitude, phase, period=period, mode=mode)
    first = first_order_field(holo)
    hv = hidden.values if isinstance(hidden, PhaseMap) else np.asarray(hidden)
    return ComplexField(pupil_grid(holo.width, optics), first.values * np.exp(1j * hv))


def extinction_ratio(pupil, optics=OpticalSystem(), half_width=3.0e-6, pitch=25e-9):
    """Peak donut intensity over the intensity at the donut center.

    The center is the intensity-weighted centroid of the whole focal pattern,
    which for a ring is the ring center. A scalar vortex keeps an exact zero
    somewhere even when badly aberrated, so the minimum of the pattern is not
    a useful null; the centroid intensity is. Returns ``(ER, fine focal
    field)`` with the fine window centered on the centroid.
    """
    coarse_grid = focal_grid_for(pupil.grid, optics, pad=2)
    coarse = focus(pupil, optics, coarse_grid)
    inten = coarse.intensity
    total = inten.sum()
    if total == 0:
        raise DegenerateInputError("no light in the focal plane")
    xx, yy = coarse_grid.mesh()
    cx, cy = float((inten * xx).sum() / total), float((inten * yy).sum() / total)
    half = int(round(half_width / pitch))
    n = 2 * half + 1
    fine_grid = GridSpec(n, n, pitch, origin=(cx - half * pitch, cy - half * pitch))
    fine = focus_window(pupil, optics, fine_grid)
    peak = max(float(inten.max()), float(fine.intensity.max()))
    null = float(fine.intensity[half, half])
    er = math.inf if null == 0 else peak / null
    return er, fine
