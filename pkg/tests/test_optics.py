import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import jn_zeros

from gsdion.errors import AnalysisError, ConfigurationError, OutOfRangeError, ValidationError
from gsdion.optics import (VALLEY_FWHM_RATIO, BeamProfile, ComplexField, GridSpec, OpticalSystem,
                           donut_intensity, focal_grid_for, focus, focus_window, fwhm_1d, ideal_lg01,
                           intensity_at, parabolic_approx, pupil_waist_for_fwhm)

SYS = OpticalSystem()


def _pupil_grid(n=140, per_diameter=128):
    return GridSpec(n, n, SYS.pupil_diameter / per_diameter)


def _uniform(grid):
    return ComplexField(grid, np.ones(grid.shape, dtype=complex))


# --- grids and fields ----------------------------------------------------

def test_grid_invariants():
    with pytest.raises(ValidationError):
        GridSpec(1, 5, 1.0)
    with pytest.raises(ValidationError):
        GridSpec(4, 4, 0.0)
    g = GridSpec(5, 4, 0.5)
    assert g.shape == (4, 5)
    assert g.x[2] == 0.0 and g.y[2] == 0.0
    assert g.is_centered


def test_field_rejects_bad_values():
    g = GridSpec(3, 3, 1.0)
    with pytest.raises(ValidationError):
        ComplexField(g, np.zeros((4, 3)))
    with pytest.raises(ValidationError):
        ComplexField(g, np.full((3, 3), np.nan))


# --- donut profile -------------------------------------------------------

def test_donut_center_and_peak():
    p = BeamProfile(r0=1e-6, s_max=10.0, s0=0.38)
    assert donut_intensity(0.0, p) == pytest.approx(0.38)
    assert donut_intensity(1e-6, p) == pytest.approx(10.38, rel=1e-15)


def test_donut_valley_half_width():
    # u e^(1-u) = 1/2 has the root u = 0.2319
    p = BeamProfile(r0=1.0, s_max=1.0)
    x = math.sqrt(0.2319)
    assert donut_intensity(x, p) == pytest.approx(0.5, abs=2e-4)
    assert VALLEY_FWHM_RATIO == pytest.approx(0.963, abs=1e-3)
    xs = np.linspace(-1.0, 1.0, 4001)
    assert fwhm_1d(xs, donut_intensity(xs, p), mode="dip") == pytest.approx(VALLEY_FWHM_RATIO, abs=5e-4)


def test_parabolic_approx():
    p = BeamProfile(r0=1.0, s_max=1.0)
    assert parabolic_approx(0.0, p) == 0.0
    assert parabolic_approx(0.1, p) == pytest.approx(math.e * 0.01)
    dev = 1 - donut_intensity(0.2, p) / parabolic_approx(0.2, p)
    assert dev == pytest.approx(1 - math.exp(-0.04), rel=1e-12)
    x = 1e-3
    assert abs(parabolic_approx(x, p) / donut_intensity(x, p) - 1) < 1e-5


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-7, 1e-5), st.floats(0.1, 500), st.floats(0, 5), st.floats(0, 3))
def test_donut_even_and_peaked_at_r0(r0, s_max, s0, u):
    p = BeamProfile(r0=r0, s_max=s_max, s0=s0)
    x = u * r0
    assert donut_intensity(x, p) == pytest.approx(donut_intensity(-x, p), rel=1e-14)
    assert donut_intensity(x, p) <= donut_intensity(r0, p) * (1 + 1e-14)


def test_beam_profile_extinction():
    p = BeamProfile.from_extinction(1e-6, 14.0, 26.0)
    assert p.extinction_ratio == pytest.approx(26.0, rel=1e-15)
    assert BeamProfile(1e-6, 1.0).extinction_ratio == math.inf
    with pytest.raises(ValidationError):
        BeamProfile(0.0, 1.0)
    with pytest.raises(ValidationError):
        BeamProfile(1e-6, -1.0)
    q = BeamProfile.from_valley_fwhm(1.41e-6, 14.0, 26.0)
    assert q.valley_fwhm == pytest.approx(1.41e-6)


# --- LG01 ----------------------------------------------------------------

def test_lg01_null_peak_and_charge():
    g = GridSpec(201, 201, 0.05)
    w = 2.0
    f = ideal_lg01(g, w)
    assert abs(f.values[100, 100]) == 0.0
    assert np.max(np.abs(f.values)) <= 1.0 + 1e-12
    row = np.abs(f.values[100, 100:])
    assert abs(g.x[100 + np.argmax(row)] - w / math.sqrt(2)) <= g.pitch
    # winding along a square loop around the center
    ring = [(100 - 20, j) for j in range(80, 121)] + [(i, 120) for i in range(81, 121)]
    ring += [(120, j) for j in range(119, 79, -1)] + [(i, 80) for i in range(119, 79, -1)]
    ph = np.array([np.angle(f.values[i, j]) for i, j in ring])
    total = np.sum(np.angle(np.exp(1j * np.diff(ph))))
    assert abs(abs(total) - 2 * math.pi) < 1e-6


def test_lg01_grid_checks():
    with pytest.raises(ConfigurationError):
        ideal_lg01(GridSpec(64, 64, 1.0), 3.0)
    with pytest.raises(ConfigurationError):
        ideal_lg01(GridSpec(64, 64, 0.01), 10.0)


# --- focusing ------------------------------------------------------------

def test_airy_first_zero():
    pg = _pupil_grid()
    fg = focal_grid_for(pg, SYS, pad=8)
    foc = focus(_uniform(pg), SYS, fg)
    c = fg.nx // 2
    prof = foc.intensity[c, c:]
    i = 1
    while prof[i + 1] < prof[i]:
        i += 1
    expected = jn_zeros(1, 1)[0] / (2 * math.pi) * SYS.wavelength / SYS.numerical_aperture
    assert abs(i * fg.pitch - expected) <= fg.pitch
    assert SYS.airy_zero == pytest.approx(expected, rel=1e-12)


def test_focus_conserves_energy():
    pg = _pupil_grid()
    rng = np.random.default_rng(1)
    vals = rng.normal(size=pg.shape) + 1j * rng.normal(size=pg.shape)
    xx, yy = pg.mesh()
    vals[xx ** 2 + yy ** 2 > (SYS.pupil_diameter / 2) ** 2] = 0
    fg = focal_grid_for(pg, SYS, pad=2)
    foc = focus(ComplexField(pg, vals), SYS, fg)
    e_in = np.sum(np.abs(vals) ** 2) * pg.pitch ** 2
    e_out = np.sum(foc.intensity) * fg.pitch ** 2
    assert e_out == pytest.approx(e_in, rel=1e-9)


def test_vortex_null_survives_focus():
    pg = _pupil_grid()
    lg = ideal_lg01(pg, 0.3 * SYS.pupil_diameter)
    fg = focal_grid_for(pg, SYS, pad=4)
    foc = focus(lg, SYS, fg)
    c = fg.nx // 2
    assert foc.intensity[c, c] < 1e-6 * foc.intensity.max()


def test_tilt_translates_pattern():
    pg = _pupil_grid()
    xx, _ = pg.mesh()
    a = 3.2  # cycles across the pupil -> a * M * dx / D = 14 focal pixels
    fg = focal_grid_for(pg, SYS, pad=4)
    shift = int(round(a * 4 * max(pg.nx, pg.ny) * pg.pitch / SYS.pupil_diameter))
    base = focus(_uniform(pg), SYS, fg).intensity
    tilted = focus(ComplexField(pg, np.exp(2j * math.pi * a * xx / SYS.pupil_diameter)), SYS, fg).intensity
    moved = np.roll(base, shift, axis=1)
    corr = np.sum(moved * tilted) / math.sqrt(np.sum(moved ** 2) * np.sum(tilted ** 2))
    assert corr >= 0.999


def test_focus_rejects_undersampling():
    pg = _pupil_grid()
    fg = focal_grid_for(pg, SYS, pad=1)
    with pytest.raises(ConfigurationError):
        focus(_uniform(pg), SYS, fg)


def test_focus_window_matches_focus():
    pg = _pupil_grid()
    lg = ideal_lg01(pg, 0.3 * SYS.pupil_diameter)
    fg = focal_grid_for(pg, SYS, pad=2, n=41)
    a = focus(lg, SYS, fg).values
    b = focus_window(lg, SYS, fg).values
    assert np.max(np.abs(a - b)) < 1e-9 * np.max(np.abs(a))


def test_pupil_waist_gives_requested_spot():
    # same focal length, wide aperture: the Gaussian is not truncated
    wide = OpticalSystem(pupil_diameter=2 * SYS.pupil_diameter, numerical_aperture=0.2)
    pg = GridSpec(256, 256, wide.pupil_diameter / 200)
    w = pupil_waist_for_fwhm(2.34e-6, wide)
    xx, yy = pg.mesh()
    fg = GridSpec(161, 161, 40e-9)
    foc = focus_window(ComplexField(pg, np.exp(-(xx ** 2 + yy ** 2) / w ** 2)), wide, fg)
    assert fwhm_1d(fg.x, foc.intensity[80]) == pytest.approx(2.34e-6, rel=0.03)


# --- sampling ------------------------------------------------------------

def test_intensity_at():
    g = GridSpec(3, 3, 1.0)
    vals = np.array([[1, 2, 3], [4, 5, 6], [7, 8, 9]], dtype=complex)
    f = ComplexField(g, vals)
    assert intensity_at(f, (0.0, 0.0)) == 25.0
    flat = ComplexField(g, np.full((3, 3), 2.0 + 0j))
    assert intensity_at(flat, (0.5, 0.5)) == pytest.approx(4.0)
    ramp = ComplexField(g, np.sqrt(np.tile([1.0, 3.0, 5.0], (3, 1))).astype(complex))
    assert intensity_at(ramp, (-0.5, 0.0)) == pytest.approx(2.0)
    with pytest.raises(OutOfRangeError):
        intensity_at(f, (2.0, 0.0))


def test_fwhm_gaussian_and_flat():
    x = np.linspace(-5, 5, 201)
    sigma = 0.7
    assert fwhm_1d(x, np.exp(-x ** 2 / (2 * sigma ** 2))) == pytest.approx(2.3548 * sigma, abs=0.05)
    with pytest.raises(AnalysisError):
        fwhm_1d(x, np.zeros_like(x))
