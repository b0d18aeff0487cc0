"""Sampled scalar fields, ideal beam profiles and Fraunhofer focusing.

Arrays are stored row-major as ``values[iy, ix]``; ``GridSpec.origin`` is
the physical (x, y) of sample (0, 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import constants as C
from .errors import AnalysisError, ConfigurationError, OutOfRangeError, ValidationError


def _valley_ratio():
    # half-max of the central valley of s(x) = (x/r0)^2 exp(1 - (x/r0)^2)
    u = brentq(lambda u: u * math.exp(1.0 - u) - 0.5, 1e-9, 1.0)
    return 2.0 * math.sqrt(u)


VALLEY_FWHM_RATIO = _valley_ratio()


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    pitch: float
    origin: tuple = None

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny or self.nx < 2 or self.ny < 2:
            raise ValidationError(f"grid needs nx, ny >= 2 (got {self.nx}, {self.ny})")
        if not (self.pitch > 0 and math.isfinite(self.pitch)):
            raise ValidationError(f"grid pitch must be positive (got {self.pitch})")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        if self.origin is None:
            # FFT convention: a sample sits exactly on (0, 0)
            origin = (-(self.nx // 2) * self.pitch, -(self.ny // 2) * self.pitch)
        else:
            origin = (float(self.origin[0]), float(self.origin[1]))
        object.__setattr__(self, "origin", origin)

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def x(self):
        return self.origin[0] + self.pitch * np.arange(self.nx)

    @property
    def y(self):
        return self.origin[1] + self.pitch * np.arange(self.ny)

    def mesh(self):
        return np.meshgrid(self.x, self.y)

    @property
    def is_centered(self):
        x0, y0 = self.origin
        return (math.isclose(x0, -(self.nx // 2) * self.pitch, rel_tol=1e-12, abs_tol=1e-15 * self.pitch)
                and math.isclose(y0, -(self.ny // 2) * self.pitch, rel_tol=1e-12, abs_tol=1e-15 * self.pitch))


@dataclass(frozen=True)
class ComplexField:
    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.shape != self.grid.shape:
            raise ValidationError(f"field shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("field contains non-finite samples")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def intensity(self):
        return np.abs(self.values) ** 2

    def power(self):
        """Integrated |E|^2 over the grid area."""
        return float(np.sum(self.intensity) * self.grid.pitch ** 2)


@dataclass(frozen=True)
class BeamProfile:
    """Normalized donut profile; ``r0`` is the parameter of the analytic shape,
    the measured half-max width of the central valley is ``valley_fwhm``."""

    r0: float
    s_max: float
    s0: float = 0.0
    fwhm00: float = C.FWHM00

    def __post_init__(self):
        if not self.r0 > 0:
            raise ValidationError("r0 must be positive")
        if self.s_max < 0 or self.s0 < 0:
            raise ValidationError("intensities must be non-negative")

    @classmethod
    def from_extinction(cls, r0, s_max, extinction_ratio, **kw):
        return cls(r0=r0, s_max=s_max, s0=s_max / extinction_ratio, **kw)

    @classmethod
    def from_valley_fwhm(cls, fwhm01, s_max, extinction_ratio=math.inf, **kw):
        s0 = 0.0 if math.isinf(extinction_ratio) else s_max / extinction_ratio
        return cls(r0=fwhm01 / VALLEY_FWHM_RATIO, s_max=s_max, s0=s0, **kw)

    @property
    def extinction_ratio(self):
        return math.inf if self.s0 == 0 else self.s_max / self.s0

    @property
    def valley_fwhm(self):
        return VALLEY_FWHM_RATIO * self.r0

    def scaled(self, factor):
        """Same shape with intensities multiplied by ``factor``."""
        return BeamProfile(self.r0, self.s_max * factor, self.s0 * factor, self.fwhm00)


@dataclass(frozen=True)
class OpticalSystem:
    wavelength: float = C.WAVELENGTH
    numerical_aperture: float = C.NA
    pupil_diameter: float = C.PUPIL_DIAMETER

    def __post_init__(self):
        if not 0 < self.numerical_aperture < 1:
            raise ValidationError("numerical aperture must lie in (0, 1)")
        if not self.wavelength > 0 or not self.pupil_diameter > 0:
            raise ValidationError("wavelength and pupil diameter must be positive")

    @property
    def focal_length(self):
        return self.pupil_diameter / (2.0 * self.numerical_aperture)

    @property
    def airy_zero(self):
        """First zero radius of the Airy pattern, 0.61 lambda/NA."""
        return 3.8317059702075125 / (2 * math.pi) * self.wavelength / self.numerical_aperture


def donut_intensity(x, profile):
    u = (np.asarray(x, dtype=float) / profile.r0) ** 2
    return profile.s0 + profile.s_max * u * np.exp(1.0 - u)


def parabolic_approx(x, profile):
    u = (np.asarray(x, dtype=float) / profile.r0) ** 2
    return profile.s0 + math.e * profile.s_max * u


def ideal_lg01(grid, waist):
    """LG01 vortex: amplitude (r/w) exp(-r^2/w^2) scaled to unit peak, phase = azimuth."""
    if 2 * waist / grid.pitch < 8:
        raise ConfigurationError(f"grid too coarse: {2 * waist / grid.pitch:.1f} samples across the waist")
    half_extent = 0.5 * grid.pitch * (min(grid.nx, grid.ny) - 1)
    if waist > half_extent:
        raise ConfigurationError("waist does not fit within the grid")
    xx, yy = grid.mesh()
    r = np.hypot(xx, yy)
    amp = (r / waist) * np.exp(-(r / waist) ** 2)
    amp /= math.sqrt(0.5) * math.exp(-0.5)
    return ComplexField(grid, amp * np.exp(1j * np.arctan2(yy, xx)))


def focal_grid_for(pupil_grid, system, pad=2, n=None):
    """Focal grid produced by an M-point DFT with M = pad * max(nx, ny)."""
    m = int(pad * max(pupil_grid.nx, pupil_grid.ny))
    pitch = system.wavelength * system.focal_length / (m * pupil_grid.pitch)
    n = m if n is None else int(n)
    return GridSpec(n, n, pitch)


def focus(pupil, system, focal_grid):
    """Scalar Fraunhofer focus of the aperture-masked pupil field.

    The focal grid must be one of the DFT-commensurate grids returned by
    :func:`focal_grid_for` (possibly cropped); energy is conserved exactly when
    the full M x M grid is requested.
    """
    dx = pupil.grid.pitch
    lf = system.wavelength * system.focal_length
    m_float = lf / (focal_grid.pitch * dx)
    m = int(round(m_float))
    if abs(m_float - m) > 1e-6 * m_float:
        raise ConfigurationError("focal pitch is not commensurate with a DFT of the pupil grid")
    if m < 2 * max(pupil.grid.nx, pupil.grid.ny):
        raise ConfigurationError(
            f"focal grid undersampled: zero-padding factor {m / max(pupil.grid.nx, pupil.grid.ny):.2f} < 2")
    if focal_grid.pitch > system.wavelength / (2 * system.numerical_aperture):
        raise ConfigurationError("focal pitch coarser than lambda/(2 NA)")
    if focal_grid.nx > m or focal_grid.ny > m or not focal_grid.is_centered:
        raise ConfigurationError("focal grid must be a centered crop of the DFT grid")

    xx, yy = pupil.grid.mesh()
    inside = xx ** 2 + yy ** 2 <= (0.5 * system.pupil_diameter) ** 2
    masked = np.where(inside, pupil.values, 0.0)

    x0, y0 = pupil.grid.origin
    if abs(x0 / dx - round(x0 / dx)) > 1e-6 or abs(y0 / dx - round(y0 / dx)) > 1e-6:
        raise ConfigurationError("pupil grid must contain the optical axis as a sample")
    ix = (np.arange(pupil.grid.nx) + int(round(x0 / dx))) % m
    iy = (np.arange(pupil.grid.ny) + int(round(y0 / dx))) % m
    buf = np.zeros((m, m), dtype=np.complex128)
    buf[np.ix_(iy, ix)] = masked
    spec = np.fft.fftshift(np.fft.fft2(buf, norm="ortho")) * (dx / focal_grid.pitch)
    r0 = m // 2 - focal_grid.ny // 2
    c0 = m // 2 - focal_grid.nx // 2
    return ComplexField(focal_grid, spec[r0:r0 + focal_grid.ny, c0:c0 + focal_grid.nx])


def intensity_at(field, point):
    """Bilinear interpolation of |E|^2 at ``point`` = (x, y)."""
    g = field.grid
    fx = (point[0] - g.origin[0]) / g.pitch
    fy = (point[1] - g.origin[1]) / g.pitch
    eps = 1e-9
    if not (-eps <= fx <= g.nx - 1 + eps and -eps <= fy <= g.ny - 1 + eps):
        raise OutOfRangeError(f"point {point} outside the sampled grid")
    fx = min(max(fx, 0.0), g.nx - 1.0)
    fy = min(max(fy, 0.0), g.ny - 1.0)
    i0 = min(int(math.floor(fx)), g.nx - 2)
    j0 = min(int(math.floor(fy)), g.ny - 2)
    tx, ty = fx - i0, fy - j0
    inten = field.intensity
    return float((1 - tx) * (1 - ty) * inten[j0, i0] + tx * (1 - ty) * inten[j0, i0 + 1]
                 + (1 - tx) * ty * inten[j0 + 1, i0] + tx * ty * inten[j0 + 1, i0 + 1])


def _crossing(x, v, i, j, level):
    if v[j] == v[i]:
        return x[i]
    return x[i] + (level - v[i]) * (x[j] - x[i]) / (v[j] - v[i])


def fwhm_1d(positions, values, mode="peak"):
    """Width between the half-level crossings around a peak or a valley.

    In ``dip`` mode the valley is the lowest point between the highest
    sample of each half, and the level is halfway between the valley floor
    and the lower of the two walls.
    """
    x = np.asarray(positions, dtype=float)
    v = np.asarray(values, dtype=float)
    if x.shape != v.shape or x.ndim != 1 or x.size < 3:
        raise AnalysisError("need matching 1-D position and value arrays")
    order = np.argsort(x)
    x, v = x[order], v[order]
    if not np.all(np.isfinite(v)) or np.ptp(v) == 0:
        raise AnalysisError("flat profile has no half-maximum crossing")

    if mode == "peak":
        i0 = int(np.argmax(v))
        level = v.min() + 0.5 * (v[i0] - v.min())
        inside = v >= level
    elif mode == "dip":
        mid = v.size // 2
        lw = int(np.argmax(v[:mid]))
        rw = mid + int(np.argmax(v[mid:]))
        i0 = lw + int(np.argmin(v[lw:rw + 1]))
        wall = min(v[lw], v[rw])
        if wall <= v[i0]:
            raise AnalysisError("no valley between the profile walls")
        level = v[i0] + 0.5 * (wall - v[i0])
        inside = v <= level
    else:
        raise ValueError(f"unknown mode {mode!r}")

    left = i0
    while left > 0 and inside[left - 1]:
        left -= 1
    right = i0
    while right < v.size - 1 and inside[right + 1]:
        right += 1
    if left == 0 or right == v.size - 1:
        raise AnalysisError("half-level crossing not found inside the sampled range")
    xl = _crossing(x, v, left - 1, left, level)
    xr = _crossing(x, v, right, right + 1, level)
    return float(xr - xl)


def focus_window(pupil, system, focal_grid):
    """Fraunhofer focus evaluated directly on an arbitrary focal grid.

    Matrix Fourier transform with the same scaling and sign as :func:`focus`;
    use it to zoom into a small region (e.g. a donut null) at fine sampling.
    """
    dx = pupil.grid.pitch
    lf = system.wavelength * system.focal_length
    xx, yy = pupil.grid.mesh()
    inside = xx ** 2 + yy ** 2 <= (0.5 * system.pupil_diameter) ** 2
    masked = np.where(inside, pupil.values, 0.0)
    ex = np.exp(-2j * math.pi * np.outer(pupil.grid.x, focal_grid.x) / lf)
    ey = np.exp(-2j * math.pi * np.outer(focal_grid.y, pupil.grid.y) / lf)
    return ComplexField(focal_grid, (dx * dx / lf) * (ey @ masked @ ex))


def pupil_waist_for_fwhm(fwhm00, system):
    """Pupil 1/e amplitude radius that focuses to a Gaussian spot of FWHM ``fwhm00``."""
    w_focal = fwhm00 / math.sqrt(2 * math.log(2))
    return system.wavelength * system.focal_length / (math.pi * w_focal)
