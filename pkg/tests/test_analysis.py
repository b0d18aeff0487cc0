"""Gaussian and trajectory fits, resolution formulas."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsdion import analysis as AN
from gsdion import constants as C
from gsdion.errors import AnalysisError, DegenerateInputError, ValidationError
from gsdion.sequencer import MotionConfig

AXIS = (np.arange(10) - 4.5) * 125e-9  # motion grid


def _synthetic(x0=31e-9, y0=-47e-9, wx=380e-9, wy=350e-9, amp=0.8, off=0.05, x=AXIS, y=AXIS):
    xx, yy = np.meshgrid(x, y)
    return off + amp * np.exp(-AN.FOUR_LN2 * ((xx - x0) ** 2 / wx ** 2 + (yy - y0) ** 2 / wy ** 2))


# --- 2-D Gaussian ----------------------------------------------------------------

def test_noiseless_fit_exact():
    v = _synthetic()
    fit = AN.fit_gaussian2d((AXIS, AXIS, v))
    assert fit.converged
    assert abs(fit.center[0] - 31e-9) < 1e-12 and abs(fit.center[1] + 47e-9) < 1e-12
    assert fit.fwhm_x == pytest.approx(380e-9, rel=1e-9)
    assert fit.fwhm_y == pytest.approx(350e-9, rel=1e-9)
    assert fit.amplitude == pytest.approx(0.8, rel=1e-9)
    assert fit.offset == pytest.approx(0.05, abs=1e-9)
    assert all(e >= 0 for e in fit.stderr.values())


def test_dip_polarity():
    v = _synthetic(amp=-0.6, off=0.9)
    fit = AN.fit_gaussian2d((AXIS, AXIS, v), polarity="dip")
    assert fit.converged and fit.amplitude == pytest.approx(-0.6, rel=1e-8)


@settings(max_examples=20, deadline=None)
@given(dx=st.floats(-1e-5, 1e-5), dy=st.floats(-1e-5, 1e-5))
def test_fit_translation_equivariant(dx, dy):
    v = _synthetic()
    base = AN.fit_gaussian2d((AXIS, AXIS, v))
    moved = AN.fit_gaussian2d((AXIS + dx, AXIS + dy, v))
    assert moved.center[0] - base.center[0] == pytest.approx(dx, abs=1e-12)
    assert moved.center[1] - base.center[1] == pytest.approx(dy, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(c=st.floats(0.01, 100))
def test_fit_scale_invariant(c):
    rng = np.random.default_rng(2)
    v = _synthetic() + rng.normal(0, 0.02, (10, 10))
    a = AN.fit_gaussian2d((AXIS, AXIS, v))
    b = AN.fit_gaussian2d((AXIS, AXIS, c * v))
    assert b.center[0] == pytest.approx(a.center[0], abs=1e-13)
    assert b.fwhm_y == pytest.approx(a.fwhm_y, rel=1e-6)
    assert b.amplitude == pytest.approx(c * a.amplitude, rel=1e-6)


def test_jacobian_matches_finite_differences(rng):
    xx, yy = np.meshgrid(np.linspace(-3, 3, 7), np.linspace(-3, 3, 7))
    x, y = xx.ravel(), yy.ravel()
    for _ in range(10):
        p = np.array([rng.uniform(-1, 1), rng.uniform(0.2, 2), rng.uniform(-1, 1), rng.uniform(-1, 1),
                      rng.uniform(1, 4), rng.uniform(1, 4)])
        jac = AN.gaussian2d_jacobian(p, x, y)
        for i in range(6):
            h = 1e-6 * max(1.0, abs(p[i]))
            up, dn = p.copy(), p.copy()
            up[i] += h
            dn[i] -= h
            fd = (AN.gaussian2d_model(up, x, y) - AN.gaussian2d_model(dn, x, y)) / (2 * h)
            assert np.max(np.abs(fd - jac[:, i])) <= 1e-6 * max(1.0, np.max(np.abs(jac[:, i])))


def test_fit_errors():
    with pytest.raises(DegenerateInputError):
        AN.fit_gaussian2d((AXIS, AXIS, np.full((10, 10), 0.3)))
    with pytest.raises(ValidationError):
        AN.fit_gaussian2d((AXIS[:2], AXIS[:2], np.eye(2)))
    v = _synthetic()
    v[3, 3] = np.nan
    with pytest.raises(ValidationError):
        AN.fit_gaussian2d((AXIS, AXIS, v))
    with pytest.raises(ValidationError):
        AN.fit_gaussian2d((AXIS, AXIS, _synthetic()), polarity="sideways")


def test_noise_only_image_does_not_crash():
    rng = np.random.default_rng(3)
    fit = AN.fit_gaussian2d((AXIS, AXIS, rng.binomial(100, 0.05, (10, 10)) / 100, 100))
    assert isinstance(fit.converged, bool)


def test_binomial_weights_floor():
    w = AN.binomial_weights(np.array([0.0, 0.5, 1.0]), 100)
    assert w[0] == w[2] == pytest.approx(1e4)
    assert w[1] == pytest.approx(400.0)


def test_image_fwhm_raises_on_failure():
    with pytest.raises(DegenerateInputError):
        AN.image_fwhm((AXIS, AXIS, np.zeros((10, 10))))
    mean, fit = AN.image_fwhm((AXIS, AXIS, _synthetic()))
    assert mean == pytest.approx(365e-9, rel=1e-8)
    assert issubclass(AnalysisError, Exception)


def test_center_precision_monte_carlo():
    cfg = MotionConfig()
    rng = np.random.default_rng(7)
    p_eff = lambda p: p * 0.95 + (1 - p) * 0.05  # noqa: E731
    errs = []
    for _ in range(100):
        x0, y0 = rng.uniform(-100e-9, 100e-9, 2)
        p = _synthetic(x0, y0, 370e-9, 370e-9, amp=1.0, off=0.0)
        v = rng.binomial(cfg.shots, p_eff(p)) / cfg.shots
        fit = AN.fit_gaussian2d((AXIS, AXIS, v, cfg.shots))
        errs.append(math.hypot(fit.center[0] - x0, fit.center[1] - y0))
    assert np.median(errs) <= 15e-9


# --- resolution formulas ----------------------------------------------------------

def test_resolution_predicted_examples():
    assert AN.resolution_predicted(0.0, 1e-6, 4.1e7) == C.FWHM01
    assert AN.resolution_predicted(3.0, 1.0, 1.0) == pytest.approx(C.FWHM01 / 2)
    assert AN.fwhm01_from_fwhm00(2.34e-6, 1.67) == pytest.approx(1.401e-6, rel=1e-3)
    with pytest.raises(ValidationError):
        AN.resolution_predicted(-1.0, 1e-6, 4.1e7)


@given(a=st.floats(0, 100), b=st.floats(1e-3, 100))
def test_resolution_predicted_decreasing(a, b):
    assert AN.resolution_predicted(a + b, 1e-6, 4.1e7) < AN.resolution_predicted(a, 1e-6, 4.1e7)


def test_resolution_limit_examples():
    assert AN.resolution_limit(26, 0.05, 1.41e-6) == pytest.approx(159e-9, abs=2e-9)
    r = AN.resolution_limit(1000, 0.001, 1.41e-6 * 0.1 / 0.6)
    assert 2.5e-9 <= r <= 3.7e-9
    assert AN.resolution_limit(104, 0.05) == pytest.approx(AN.resolution_limit(26, 0.05) / 2, rel=1e-14)
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(ValidationError):
            AN.resolution_limit(26, bad)
    with pytest.raises(ValidationError):
        AN.resolution_limit(0.0, 0.05)


@given(er=st.floats(1, 1e4), d=st.floats(0.1, 100))
def test_resolution_limit_decreasing(er, d):
    assert AN.resolution_limit(er + d, 0.05) < AN.resolution_limit(er, 0.05)


def test_improvement_ratio():
    assert AN.improvement_ratio(2.34e-6, 175e-9) == pytest.approx(13.37, abs=0.01)
    assert AN.improvement_ratio(1.0, 1.0) == 1.0
    with pytest.raises(ValidationError):
        AN.improvement_ratio(0.0, 1.0)


def test_resolution_point_validation():
    with pytest.raises(ValidationError):
        AN.ResolutionPoint(1.0, -1.0, 1.0)


# --- trajectory ---------------------------------------------------------------------

T0 = C.MOTION_PERIOD


def test_trajectory_exact():
    t = np.arange(10) * T0 / 10
    y = 5e-9 + 104e-9 * np.cos(2 * math.pi * t / (0.97 * T0) + 0.4)
    fit = AN.fit_trajectory(t, y)
    assert fit.converged
    assert fit.amplitude == pytest.approx(104e-9, rel=1e-9)
    assert fit.period == pytest.approx(0.97 * T0, rel=1e-9)
    assert fit.phase == pytest.approx(0.4, abs=1e-9)
    assert fit.offset == pytest.approx(5e-9, rel=1e-7)
    assert np.allclose(fit(t), y, atol=1e-18)


def test_trajectory_negative_amplitude_normalized():
    t = np.arange(10) * T0 / 10
    fit = AN.fit_trajectory(t, -80e-9 * np.cos(2 * math.pi * t / T0))
    assert fit.amplitude > 0
    assert abs(abs(fit.phase) - math.pi) < 1e-6


@pytest.mark.parametrize("periods,tol", [(1, 0.07), (2, 0.02)])
def test_trajectory_period_noise(periods, tol):
    rng = np.random.default_rng(periods)
    n = 10 * periods
    t = np.arange(n) * T0 / 10
    errs = []
    for _ in range(200):
        y = 104.5e-9 * np.cos(2 * math.pi * t / T0) + rng.normal(0, 15e-9, n)
        errs.append(abs(AN.fit_trajectory(t, y).period / T0 - 1))
    assert np.median(errs) <= tol


def test_trajectory_validation():
    t = np.arange(10) * T0 / 10
    with pytest.raises(ValidationError):
        AN.fit_trajectory(t[:4], np.zeros(4))
    with pytest.raises(ValidationError):
        AN.fit_trajectory(t[:6] * 0.5, np.zeros(6))
    with pytest.raises(ValidationError):
        AN.fit_trajectory(t, np.full(10, np.nan))
    with pytest.raises(ValidationError):
        AN.fit_trajectory(t, np.zeros(9))
