"""Acceptance criteria, one test each; every test reports a PASS/FAIL line."""

import filecmp
import math
import time

import numpy as np
import pytest

from gsdion import aberration as AB
from gsdion import analysis as AN
from gsdion import cli
from gsdion import constants as C
from gsdion.atom import DepletionPhysics, DepletionPulse, LevelSystem, lindblad_p0, rate_p0
from gsdion.config import parse_config
from gsdion.hologram import LINEARIZED, PROPORTIONAL, first_order_efficiency, first_order_field, lee_encode
from gsdion.optics import BeamProfile
from gsdion.sequencer import ImagingConfig, IonModel, MotionConfig, ReadoutModel, ThermalBlur, drive_amplitude
from gsdion.sequencer import run_imaging, run_motion
from gsdion.stabilizer import LoopConfig, frequency_drift, simulate_loop, within_budget

NM = 1e9


def test_c01_depletion_benchmark(criterion):
    t0 = time.perf_counter()
    p = lindblad_p0(LevelSystem(), DepletionPulse(100.0, 50e-9))
    dt = time.perf_counter() - t0
    ok = 0.01 < p < 0.05 and dt < 1.0
    assert criterion(1, ok, f"lindblad_p0(s=100, 50 ns) = {p:.4f} (band 0.01..0.05), {dt:.2f} s")


def test_c02_rate_master_consistency(criterion):
    phys = DepletionPhysics()
    system = phys.level_system()
    worst = 0.0
    for s in np.geomspace(0.01, 0.1, 5):
        for t_d in np.geomspace(1e-6, 10e-6, 5):
            worst = max(worst, abs(rate_p0(s, t_d, phys) - lindblad_p0(system, DepletionPulse(s, t_d))))
    assert criterion(2, worst < 0.02, f"max |rate - master| = {worst:.4f} over 5x5 grid (< 0.02)")


def test_c03_resolution_limit(criterion):
    r = AN.resolution_limit(26, 0.05, 1.41e-6)
    assert criterion(3, abs(r - 159e-9) <= 2e-9, f"resolution_limit(26, 0.05, 1.41 um) = {r * NM:.1f} nm")


def test_c04_end_to_end_imaging(criterion, tmp_path):
    cfg = parse_config("", kind="image", out_dir=str(tmp_path))
    assert cfg["imaging"]["pitch_m"] <= 60e-9
    t0 = time.perf_counter()
    cli.run(cfg)
    dt = time.perf_counter() - t0
    lines = (tmp_path / "fit.csv").read_text().splitlines()
    row = {k: float(v) for k, v in zip(lines[0].split(","), lines[1].split(","))}
    fx, fy = row["fwhm_x_m"], row["fwhm_y_m"]
    ratio = AN.improvement_ratio(C.FWHM00, fx)
    ok = row["converged"] == 1 and 150e-9 <= fx <= 220e-9 and ratio >= 10 and dt < 60
    assert criterion(4, ok, f"FWHM_x = {fx * NM:.1f} nm (FWHM_y {fy * NM:.1f}), improvement {ratio:.2f}, "
                            f"{dt:.1f} s")


def test_c05_resolution_law(criterion):
    k, s_max, pitch = 4.1e7, 20.0, 10e-9
    phys = DepletionPhysics(k_override=k)
    beam = BeamProfile.from_valley_fwhm(C.FWHM01, s_max)
    worst, checked = 0.0, 0
    for t_d in np.geomspace(0.1e-6, 1e-6, 8):
        cfg = ImagingConfig(n=40, pitch=pitch, pulse=DepletionPulse(s_max, t_d), seed=1)
        measured, _ = AN.image_fwhm(run_imaging(cfg, beam, phys, IonModel()))
        predicted = AN.resolution_predicted(s_max, t_d, k)
        if predicted >= 4 * pitch:
            checked += 1
            worst = max(worst, abs(measured / predicted - 1))
    ok = checked >= 6 and worst <= 0.15
    assert criterion(5, ok, f"max relative deviation {worst:.3f} over {checked} sweep points (<= 0.15)")


def _motion_fit(cfg):
    images = run_motion(cfg)
    t = np.array([tk for tk, _ in images])
    y = np.array([AN.fit_gaussian2d(img).center[1] for _, img in images])
    return AN.fit_trajectory(t, y, cfg.period)


def test_c06_motion_amplitude(criterion):
    a = drive_amplitude(6.9e-21, C.OMEGA_Y, C.OMEGA_Y, 73.5e-6, 171 * C.AMU)
    cfg = MotionConfig()
    fit = _motion_fit(cfg)
    ok = abs(a - 104.5e-9) <= 0.5e-9 and abs(fit.amplitude - cfg.amplitude) <= 12e-9
    assert criterion(6, ok, f"analytic A = {a * NM:.2f} nm, fitted A = {fit.amplitude * NM:.1f} nm")


def test_c07_trajectory_period(criterion):
    t0 = time.perf_counter()
    med = {}
    for periods in (1, 2):
        errs = []
        for seed in range(200):
            cfg = MotionConfig(periods=periods, seed=seed)
            errs.append(abs(_motion_fit(cfg).period / cfg.period - 1))
        med[periods] = float(np.median(errs))
    dt = time.perf_counter() - t0
    ok = med[1] <= 0.07 and med[2] <= 0.02 and dt < 300
    assert criterion(7, ok, f"median period error {med[1]:.3f} (1 period), {med[2]:.3f} (2 periods), "
                            f"{dt:.0f} s")


def test_c08_fit_precision(criterion):
    cfg = MotionConfig()
    rng = np.random.default_rng(8)
    beam = BeamProfile.from_valley_fwhm(C.FWHM01, cfg.s_max, C.EXTINCTION_RATIO)
    errs = []
    for trial in range(500):
        pos = tuple(rng.uniform(-cfg.pitch, cfg.pitch, 2))
        img = run_imaging(cfg.imaging(trial), beam, DepletionPhysics.calibrated(),
                          IonModel(pos, ThermalBlur()), ReadoutModel(0.05))
        fit = AN.fit_gaussian2d(img)
        errs.append(math.hypot(fit.center[0] - pos[0], fit.center[1] - pos[1]))
    med = float(np.median(errs))
    assert criterion(8, med <= 15e-9, f"median center error {med * NM:.2f} nm over 500 trials (<= 15 nm)")


def test_c09_aberration_round_trip(criterion):
    optics = AB.OpticalSystem()
    aperture = AB.pupil_aperture(AB.pupil_grid(C.DMD_REGION, optics), optics)
    hidden = AB.random_smooth_aberration(0)
    unwrapped, _ = AB.unwrap_2d(AB.scan_phase_map(hidden))
    pixels = AB.interpolate_to_pixels(unwrapped)
    diff = AB.remove_plane(pixels.values - hidden.values, aperture)
    rms = float(np.sqrt(np.mean(diff[aperture] ** 2)))
    amp, target = AB.donut_target()
    er, _ = AB.extinction_ratio(AB.aberrated_pupil(amp, AB.compensation_phase(pixels, target), hidden))
    ok = rms <= 0.314 and er >= 20
    assert criterion(9, ok, f"recovery RMS {rms:.4f} rad (<= 0.314), compensated ER {er:.0f} (>= 20)")


def test_c10_three_step(criterion):
    rng = np.random.default_rng(10)
    phi = rng.uniform(-math.pi, math.pi, 1000)
    a = rng.uniform(0.5, 10, 1000)
    b = a * rng.uniform(0.01, 1, 1000)
    ms = [a + b * np.cos(phi - d) for d in AB.SHIFTS]
    err = float(np.max(np.abs(AB.wrap(AB.three_step_phase(*ms) - phi))))
    gain, offset = rng.uniform(0.1, 10), rng.uniform(-5, 5)
    inv = float(np.max(np.abs(AB.wrap(AB.three_step_phase(*[gain * m + offset for m in ms]) - phi))))
    ok = err < 1e-12 and inv < 1e-9
    assert criterion(10, ok, f"max error {err:.2e} rad, after gain/background {inv:.2e} rad")


def test_c11_lee_encoding(criterion):
    amp, target = AB.donut_target()
    want = amp * np.exp(1j * target.values)
    got = first_order_field(lee_encode(amp, target.values, mode=LINEARIZED)).values
    fid = abs(np.vdot(want, got)) / (np.linalg.norm(want) * np.linalg.norm(got))
    n = C.DMD_REGION
    eff = first_order_efficiency(lee_encode(np.ones((n, n)), np.zeros((n, n)), mode=PROPORTIONAL))
    ok = fid >= 0.95 and abs(eff * math.pi ** 2 - 1) <= 0.02
    assert criterion(11, ok, f"LG01 fidelity {fid:.4f} (>= 0.95), 50% grating first order {eff:.5f} "
                             f"(1/pi^2 = {1 / math.pi ** 2:.5f})")


def test_c12_unwrapping(criterion):
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(50):
        u = np.cumsum(rng.uniform(-2.8, 2.8, (33, 1)), axis=0) + np.cumsum(rng.uniform(-2.8, 2.8, (1, 33)), axis=1)
        un, _ = AB.unwrap_2d(AB.wrap(u))
        worst = max(worst, float(np.ptp(un.values - u)))
    assert criterion(12, worst < 1e-9, f"max spread of unwrap(wrap(u)) - u = {worst:.2e} over 50 maps")


def test_c13_stabilizer(criterion):
    closed, ratios, freq = [], [], []
    for seed in range(20):
        c = simulate_loop(seed=seed)
        o = simulate_loop(cfg=LoopConfig().open(), seed=seed)
        closed.append(c.std_ppm)
        ratios.append(o.std_ppm / c.std_ppm)
        freq.append(within_budget(frequency_drift(c.rel_error)))
    ok = max(closed) <= 100 and min(ratios) >= 10 and all(freq)
    assert criterion(13, ok, f"closed-loop std max {max(closed):.1f} ppm, min open/closed ratio "
                             f"{min(ratios):.1f}, budget ok on {sum(freq)}/20 seeds")


KINDS = ["sense-aberration", "synth-hologram", "simulate-spot", "deplete", "image", "motion", "stabilize"]


def _run_all(root, inputs):
    for kind in KINDS:
        cli.run(parse_config("", kind=kind, seed=3, out_dir=str(root / kind)))
    # the report reads the same manifests both times so its config is identical
    cli.run(parse_config(f"[report]\nmanifests = {inputs / 'image' / 'manifest.txt'}, "
                         f"{inputs / 'motion' / 'manifest.txt'}\n", kind="report", seed=3,
                         out_dir=str(root / "report")))


def test_c14_determinism(criterion, tmp_path):
    _run_all(tmp_path / "a", tmp_path / "a")
    _run_all(tmp_path / "b", tmp_path / "a")
    csvs = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
    same = [filecmp.cmp(tmp_path / "a" / p, tmp_path / "b" / p, shallow=False) for p in csvs]
    ok = len(csvs) > 20 and all(same)
    assert criterion(14, ok, f"{sum(same)}/{len(csvs)} CSV files byte-identical across two runs")


@pytest.mark.parametrize("seed", range(20))
def test_compensation_monotone_suite(seed):
    amp, target = AB.donut_target()
    hidden = AB.random_smooth_aberration(1000 + seed)
    unwrapped, _ = AB.unwrap_2d(AB.scan_phase_map(hidden))
    comp = AB.compensation_phase(AB.interpolate_to_pixels(unwrapped), target)
    before, _ = AB.extinction_ratio(AB.aberrated_pupil(amp, AB.wrap(target.values), hidden))
    after, _ = AB.extinction_ratio(AB.aberrated_pupil(amp, comp, hidden))
    assert after >= before
