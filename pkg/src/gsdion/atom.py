"""Dark-state depletion: five-level Lindblad dynamics and the rate-equation limit.

Level indices: 0 = |1> (dark), 1 = |2> (excited), 2..4 = |3>, |4>, |5> (bright).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import constants as C
from ._backend import kernels
from .errors import NumericalError, ValidationError
from .optics import BeamProfile, ComplexField, donut_intensity, intensity_at

RECTANGULAR = "rectangular"
TRAPEZOID = "trapezoid"

MAX_STEP = 0.05  # RK4 step bound in units of 1/max(Gamma, Omega)


@dataclass(frozen=True)
class LevelSystem:
    gamma: float = C.GAMMA
    branching: tuple = (1 / 3, 1 / 3, 0.0, 1 / 3)  # |2> -> |1>, |3>, |4>, |5>

    def __post_init__(self):
        if self.gamma < 0 or min(self.branching) < 0:
            raise ValidationError("rates and branching fractions must be non-negative")
        if len(self.branching) != 4 or abs(sum(self.branching) - 1.0) > 1e-12:
            raise ValidationError("four branching fractions summing to 1 are required")

    n_levels = 5

    def rabi(self, s):
        """Rabi frequency for saturation parameter s = 2 Omega^2 / Gamma^2."""
        return self.gamma * math.sqrt(s / 2.0)

    def hamiltonian(self, s):
        h = np.zeros((5, 5), dtype=np.complex128)
        h[0, 1] = h[1, 0] = 0.5 * self.rabi(s)
        return h

    def collapse_operators(self):
        ops = []
        for target, frac in zip((0, 2, 3, 4), self.branching):
            c = np.zeros((5, 5), dtype=np.complex128)
            c[target, 1] = math.sqrt(frac * self.gamma)
            ops.append(c)
        return ops

    def superoperators(self, s):
        """(LH, LD) acting on row-major vec(rho): d vec/dt = (f(t) LH + LD) vec."""
        eye = np.eye(5)
        h = self.hamiltonian(s)
        lh = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
        ld = np.zeros((25, 25), dtype=np.complex128)
        for c in self.collapse_operators():
            cdc = c.conj().T @ c
            ld += np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T)
        return lh, ld


@dataclass(frozen=True)
class DensityState:
    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=np.complex128)
        if rho.shape != (5, 5):
            raise ValidationError("density matrix must be 5 x 5")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def dark(cls):
        rho = np.zeros((5, 5), dtype=np.complex128)
        rho[0, 0] = 1.0
        return cls(rho)

    @property
    def populations(self):
        return np.real(np.diag(self.rho))

    def check(self, trace_tol=1e-9, herm_tol=1e-12, psd_tol=1e-9):
        """Raise NumericalError if rho is not a valid density matrix."""
        tr = np.trace(self.rho)
        if abs(tr - 1.0) > trace_tol:
            raise NumericalError(f"trace drift {abs(tr - 1.0):.3g}")
        if np.max(np.abs(self.rho - self.rho.conj().T)) > herm_tol:
            raise NumericalError("density matrix lost hermiticity")
        if np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T)).min() < -psd_tol:
            raise NumericalError("density matrix lost positivity")
        return self


@dataclass(frozen=True)
class DepletionPulse:
    s: float
    t_d: float
    envelope: str = RECTANGULAR
    rise: float = C.RISE_TIME
    fall: float = C.FALL_TIME

    def __post_init__(self):
        if self.s < 0:
            raise ValidationError("saturation parameter must be non-negative")
        if not self.t_d > 0:
            raise ValidationError("pulse duration must be positive")
        if self.envelope not in (RECTANGULAR, TRAPEZOID):
            raise ValidationError(f"unknown envelope {self.envelope!r}")
        if self.envelope == TRAPEZOID and self.t_d < self.rise + self.fall:
            raise ValidationError("trapezoid pulse shorter than rise + fall")

    def field_envelope(self, t):
        """Rabi-frequency envelope (0..1) at time t; zero outside [0, t_d]."""
        t = np.asarray(t, dtype=float)
        out = np.where((t >= 0) & (t <= self.t_d), 1.0, 0.0)
        if self.envelope == TRAPEZOID:
            out = np.minimum(out, np.clip(t / self.rise, 0, None))
            out = np.minimum(out, np.clip((self.t_d - t) / self.fall, 0, None))
        return out

    def _kernel_args(self):
        kind = 0 if self.envelope == RECTANGULAR else 1
        return kind, self.rise, self.fall, self.t_d


def saturation_intensity(wavelength=C.WAVELENGTH, gamma=C.GAMMA):
    """Two-level saturation intensity hbar w0^3 Gamma / (12 pi c^2) in W/m^2."""
    w0 = 2 * math.pi * C.C_LIGHT / wavelength
    return C.HBAR * w0 ** 3 * gamma / (12 * math.pi * C.C_LIGHT ** 2)


def resonant_cross_section(wavelength=C.WAVELENGTH):
    return 3 * wavelength ** 2 / (2 * math.pi)


def k_coefficient(beta=C.BETA_BRIGHT, wavelength=C.WAVELENGTH, gamma=C.GAMMA, sigma=None):
    """Depletion rate per unit saturation parameter, beta*sigma*I_sat/(hbar w0)."""
    if beta < 0 or wavelength <= 0 or gamma < 0:
        raise ValidationError("k_coefficient needs non-negative beta, gamma and positive wavelength")
    sigma = resonant_cross_section(wavelength) if sigma is None else sigma
    w0 = 2 * math.pi * C.C_LIGHT / wavelength
    return beta * sigma * saturation_intensity(wavelength, gamma) / (C.HBAR * w0)


@dataclass(frozen=True)
class DepletionPhysics:
    """Rate-model coefficients.

    ``coupling`` scales the nominal saturation parameter of the donut to the
    value that actually drives dark->bright pumping (1.0 = ideal two-level
    coupling). Imaging defaults use the experiment-calibrated value.
    """

    beta: float = C.BETA_BRIGHT
    wavelength: float = C.WAVELENGTH
    gamma: float = C.GAMMA
    k_override: float | None = None
    coupling: float = 1.0

    def __post_init__(self):
        if self.coupling < 0:
            raise ValidationError("coupling must be non-negative")

    @property
    def sigma(self):
        return resonant_cross_section(self.wavelength)

    @property
    def i_sat(self):
        return saturation_intensity(self.wavelength, self.gamma)

    @property
    def k(self):
        if self.k_override is not None:
            return self.k_override
        return k_coefficient(self.beta, self.wavelength, self.gamma)

    @classmethod
    def calibrated(cls, **kw):
        """Physics with the coupling calibrated to the imaging operating point."""
        base = cls(**kw)
        return cls(**{**kw, "coupling": calibrated_coupling(k=base.k)})

    def level_system(self):
        b = 1.0 - self.beta
        return LevelSystem(self.gamma, (b, self.beta / 2, 0.0, self.beta / 2))


def calibrated_coupling(resolution=C.BEST_RESOLUTION, s_max=C.IMAGING_S_MAX, t_d=C.IMAGING_PULSE,
                        fwhm01=C.FWHM01, k=None):
    """Coupling that makes the rate-model resolution fwhm01/sqrt(1 + eta k s t)
    equal ``resolution`` at the operating point (s_max, t_d).

    With the nominal k the quoted operating point would deplete the whole
    image; the calibrated coupling absorbs the unmodelled polarization,
    detuning and beam-overlap factors.
    """
    k = k_coefficient() if k is None else k
    if not 0 < resolution < fwhm01:
        raise ValidationError("target resolution must lie in (0, fwhm01)")
    return ((fwhm01 / resolution) ** 2 - 1.0) / (k * s_max * t_d)


def _nsteps(t, step):
    return max(1, int(math.ceil(t / step - 1e-9)))


def lindblad_evolve(system, pulse, t_end, n_record=1, step=None, rho0=None):
    """Integrate the master equation from ``rho0`` (default |1><1|) to ``t_end``.

    Returns (times, rhos) with ``n_record`` evenly spaced records after t=0.
    The fixed RK4 step never exceeds 0.05/max(Gamma, Omega) unless ``step`` is given.
    """
    if t_end < 0:
        raise ValidationError("integration time must be non-negative")
    rho0 = DensityState.dark().rho if rho0 is None else np.asarray(rho0, dtype=np.complex128)
    if t_end == 0 or system.gamma == 0 and pulse.s == 0:
        return np.array([0.0, t_end]), np.array([rho0, rho0])
    h_max = MAX_STEP / max(system.gamma, system.rabi(pulse.s)) if step is None else step
    n_record = max(1, int(n_record))
    per_record = _nsteps(t_end / n_record, h_max)
    nsteps = per_record * n_record
    lh, ld = system.superoperators(pulse.s)
    kind, rise, fall, total = pulse._kernel_args()
    rows, cols = np.nonzero((lh != 0) | (ld != 0))
    vecs = kernels.lindblad_rk4(rows.astype(np.int32), cols.astype(np.int32),
                                np.ascontiguousarray(lh[rows, cols]), np.ascontiguousarray(ld[rows, cols]),
                                np.ascontiguousarray(rho0.reshape(-1)), float(t_end), nsteps,
                                kind, rise, fall, total, per_record)
    rhos = np.asarray(vecs).reshape(-1, 5, 5)
    times = np.linspace(0.0, t_end, n_record + 1)
    if not np.all(np.isfinite(rhos)):
        raise NumericalError("master-equation integration diverged")
    drift = np.max(np.abs(np.trace(rhos, axis1=1, axis2=2) - 1.0))
    pops = np.real(np.diagonal(rhos, axis1=1, axis2=2))
    if drift > 1e-6 or pops.min() < -1e-6 or pops.max() > 1 + 1e-6:
        raise NumericalError(f"step size too large: trace drift {drift:.3g}, population range "
                             f"[{pops.min():.3g}, {pops.max():.3g}]")
    return times, rhos


def lindblad_p0(system, pulse, t=None, step=None):
    """Dark-state population rho_11 after time t (default: end of pulse)."""
    t = pulse.t_d if t is None else t
    if t < 0 or t > pulse.t_d * (1 + 1e-12):
        raise ValidationError("t must lie within the pulse")
    _, rhos = lindblad_evolve(system, pulse, t, step=step)
    return float(np.real(rhos[-1, 0, 0]))


def rate_p0(s_local, t_d, phys):
    """Dark-state survival exp(-k s t_D) of the rate-equation model."""
    s_local = np.asarray(s_local, dtype=float)
    if np.any(s_local < 0):
        raise ValidationError("saturation parameter must be non-negative")
    out = np.exp(-phys.k * s_local * t_d)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class P0Lookup:
    """Tabulated lindblad_p0(s) at a fixed pulse duration, linearly interpolated."""

    s_grid: np.ndarray
    p0: np.ndarray

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s > self.s_grid[-1] * (1 + 1e-12)):
            raise ValidationError(f"s beyond lookup range {self.s_grid[-1]}")
        return np.interp(s, self.s_grid, self.p0)


@lru_cache(maxsize=16)
def p0_lookup(system, t_d, s_max=500.0, n=1001, envelope=RECTANGULAR):
    s_grid = np.linspace(0.0, s_max, n)
    p0 = np.array([lindblad_p0(system, DepletionPulse(s, t_d, envelope)) for s in s_grid])
    s_grid.flags.writeable = False
    p0.flags.writeable = False
    return P0Lookup(s_grid, p0)


def local_saturation(beam, offsets, ion_position=(0.0, 0.0)):
    """Nominal saturation parameter at the ion for each donut-center offset."""
    offsets = np.asarray(offsets, dtype=float)
    rel = np.asarray(ion_position, dtype=float) - offsets
    if isinstance(beam, BeamProfile):
        return donut_intensity(np.hypot(rel[..., 0], rel[..., 1]), beam)
    if isinstance(beam, ComplexField):
        flat = rel.reshape(-1, 2)
        return np.array([intensity_at(beam, p) for p in flat]).reshape(rel.shape[:-1])
    raise ValidationError("beam must be a BeamProfile or a ComplexField of I/I_sat")


def depletion_map(beam, pulse, phys, ion_position=(0.0, 0.0), offsets=((0.0, 0.0),), mode="rate",
                  system=None, lookup=None):
    """Dark-state survival for each donut-center offset (shape offsets.shape[:-1]).

    The local intensity comes from ``beam``; ``pulse`` supplies duration and
    envelope. ``mode`` is ``rate`` (closed form), ``master`` (one Lindblad
    integration per distinct s) or ``lookup`` (tabulated Lindblad, see
    :func:`p0_lookup`).
    """
    s = phys.coupling * local_saturation(beam, offsets, ion_position)
    if mode == "rate":
        return np.exp(-phys.k * s * pulse.t_d)
    system = phys.level_system() if system is None else system
    if mode == "lookup":
        table = lookup or p0_lookup(system, pulse.t_d, envelope=pulse.envelope,
                                    s_max=max(500.0, float(np.max(s)) * 1.01))
        return table(s)
    if mode == "master":
        flat = s.reshape(-1)
        uniq, inv = np.unique(flat, return_inverse=True)
        vals = np.array([lindblad_p0(system, DepletionPulse(v, pulse.t_d, pulse.envelope,
                                                            pulse.rise, pulse.fall)) for v in uniq])
        return vals[inv].reshape(s.shape)
    raise ValidationError(f"unknown depletion mode {mode!r}")
