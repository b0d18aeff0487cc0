"""Command-line entry point: one experiment per invocation, driven by a config file.

Exit codes
----------
0  success
1  unexpected failure (I/O, internal error)
2  parse error (bad flags, malformed config, unknown key, unit suffix, range)
3  configuration error (values individually valid but jointly unusable)
4  numerical error (integrator or solver left its accuracy envelope)
5  analysis error (fit failed, degenerate data)
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import aberration as ab
from . import analysis as an
from . import constants as C
from . import fileio as fio
from . import stabilizer as st
from .atom import DepletionPhysics, DepletionPulse, calibrated_coupling, lindblad_evolve
from .config import KINDS, FORMATS, RunConfig, parse_config
from .errors import AnalysisError, GsdError, ParseError
from .hologram import first_order_efficiency, first_order_field, lee_encode
from .optics import (BeamProfile, ComplexField, GridSpec, OpticalSystem, focus_window, fwhm_1d,
                     pupil_waist_for_fwhm)
from .sequencer import (DriftModel, ImagingConfig, IonModel, MotionConfig, ReadoutModel, ThermalBlur,
                        run_imaging, run_motion)

MANIFEST = "manifest.txt"
EXIT_OK = 0
EXIT_INTERNAL = 1


@dataclass(frozen=True)
class RunManifest:
    config: RunConfig
    version: str
    files: tuple  # (name, sha256) pairs, in emission order
    path: Path = None

    def to_text(self):
        lines = ["# gsdion run manifest", f"# version: {self.version}", f"# seed: {self.config.seed}", ""]
        lines.append(self.config.to_text())
        lines += [f"# file: {name} sha256: {digest}" for name, digest in self.files]
        return "\n".join(lines) + "\n"


def read_manifest(path):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    cfg = parse_config(text, out_dir=str(path.parent))
    files, version = [], ""
    for line in text.splitlines():
        if line.startswith("# file: "):
            name, _, digest = line[len("# file: "):].partition(" sha256: ")
            files.append((name, digest))
        elif line.startswith("# version: "):
            version = line[len("# version: "):]
    return RunManifest(cfg, version, tuple(files), path)


# --- builders from the resolved config --------------------------------------

def build_optics(cfg):
    o = cfg["optics"]
    return OpticalSystem(o["wavelength_m"], o["numerical_aperture"], o["pupil_diameter_m"])


def build_physics(cfg):
    p = cfg["physics"]
    base = DepletionPhysics(beta=p["beta"], wavelength=cfg["optics"]["wavelength_m"],
                            gamma=2 * math.pi * p["linewidth_hz"],
                            k_override=None if p["k_per_s"] == "auto" else p["k_per_s"])
    coupling = p["coupling"]
    if coupling == "auto":
        coupling = calibrated_coupling(p["calibration_resolution_m"], C.IMAGING_S_MAX, C.IMAGING_PULSE,
                                       cfg["optics"]["fwhm01_m"], base.k)
    return DepletionPhysics(base.beta, base.wavelength, base.gamma, base.k_override, coupling)


def build_pulse(cfg):
    p = cfg["pulse"]
    return DepletionPulse(p["s_max"], p["t_d_s"], p["envelope"], p["rise_s"], p["fall_s"])


def build_beam(cfg, s_max):
    o = cfg["optics"]
    return BeamProfile.from_valley_fwhm(o["fwhm01_m"], s_max, o["extinction_ratio"], fwhm00=o["fwhm00_m"])


def build_blur(cfg):
    t = cfg["thermal"]
    return ThermalBlur(t["rms_m"], t["order"], t["per_shot"]) if t["enabled"] else None


def build_ion(cfg):
    d, i = cfg["drift"], cfg["imaging"]
    drift = DriftModel(d["speed_m_per_s"], d["bound_m"], d["persistence_s"]) if d["enabled"] else None
    return IonModel((i["ion_x_m"], i["ion_y_m"]), build_blur(cfg), drift)


def build_imaging(cfg):
    i = cfg["imaging"]
    return ImagingConfig(n=i["n"], pitch=i["pitch_m"], center=(i["center_x_m"], i["center_y_m"]),
                         shots=i["shots"], cooling_time=i["cooling_s"], pump_time=i["pump_s"],
                         detect_time=i["detect_s"], pulse=build_pulse(cfg), mode=i["mode"], seed=cfg.seed)


def build_motion(cfg):
    m = cfg["motion"]
    return MotionConfig(omega_y=2 * math.pi * m["trap_hz"],
                        omega_d=None if m["drive_hz"] == "auto" else 2 * math.pi * m["drive_hz"],
                        drive_cycles=m["drive_cycles"], drive_force=m["force_n"], mass=m["mass_u"] * C.AMU,
                        phase0=m["phase_rad"], delays_per_period=m["delays_per_period"],
                        periods=m["periods"], area=m["area_m"], points=m["points"], s_max=m["s_max"],
                        t_d=m["t_d_s"], shots=m["shots"], seed=cfg.seed)


def build_sensing(cfg):
    s, h = cfg["sensing"], cfg["hologram"]
    return ab.SensingConfig(region=h["region"], patch_size=s["patch_size"], period=h["period"],
                            tilt=s["tilt"], min_visibility=s["min_visibility"],
                            noise_counts=s["noise_counts"] or None, seed=cfg.seed)


def build_loop(cfg):
    s = cfg["stabilizer"]
    walk = st._reference_walk_step(s["rate_hz"]) if s["walk_step"] == "auto" else s["walk_step"]
    plant = st.PlantModel(v_nominal=s["set_point_v"], walk_step=walk, white=s["white"], step=s["step"],
                          step_time=s["step_time_s"])
    loop = st.LoopConfig(rate=s["rate_hz"], set_point=s["set_point_v"], kp=s["kp"], ki=s["ki"],
                         kd=s["kd"], adc_lsb=s["adc_lsb_v"], dac_bits=s["dac_bits"],
                         dac_span=(s["dac_min_v"], s["dac_max_v"]), attenuation_db=s["attenuation_db"],
                         actuator_gain=s["actuator_gain"])
    return plant, loop


# --- experiments ---------------------------------------------------------------

class _Outputs:
    """Collects emitted files so that the manifest lists every one of them."""

    def __init__(self, cfg):
        self.dir = Path(cfg.out_dir)
        self.csv = cfg.format in ("csv", "both")
        self.pgm = cfg.format in ("pgm", "both")
        self.names = []

    def path(self, name):
        self.names.append(name)
        return self.dir / name

    def table(self, name, header, rows):
        fio.write_csv(self.path(name), header, rows)

    def image(self, stem, x, y, values):
        if self.csv:
            fio.write_image_csv(x, y, values, self.path(stem + ".csv"))
        if self.pgm:
            fio.write_pgm16(values, self.path(stem + ".pgm"))


def _summary(out, name, pairs):
    out.table(name, ["quantity", "value"], [(k, v) for k, v in pairs])


def exp_sense_aberration(cfg, out):
    optics = build_optics(cfg)
    scfg = build_sensing(cfg)
    region = scfg.region
    hidden = ab.random_smooth_aberration(cfg.seed, region, cfg["sensing"]["pv_rad"],
                                         patch_size=scfg.patch_size)
    wrapped = ab.scan_phase_map(hidden, scfg, optics, method=cfg["sensing"]["method"])
    unwrapped, residues = ab.unwrap_2d(wrapped)
    pixels = ab.interpolate_to_pixels(unwrapped, (region, region))
    aperture = ab.pupil_aperture(ab.pupil_grid(region, optics), optics)
    diff = ab.remove_plane(pixels.values - hidden.values, aperture)
    rms = float(np.sqrt(np.mean(diff[aperture] ** 2)))

    amp, target = ab.donut_target(region, optics, cfg["optics"]["fwhm00_m"])
    period = cfg["hologram"]["period"]
    comp = ab.compensation_phase(pixels, target)
    er_before, fine_before = ab.extinction_ratio(
        ab.aberrated_pupil(amp, ab.wrap(target.values), hidden, optics, period=period), optics)
    er_after, fine_after = ab.extinction_ratio(
        ab.aberrated_pupil(amp, comp, hidden, optics, period=period), optics)

    fio.write_phase_map(wrapped, out.path("phase_wrapped.txt"))
    fio.write_phase_map(unwrapped, out.path("phase_unwrapped.txt"))
    fio.write_phase_map(pixels, out.path("phase_pixels.txt"))
    out.image("focus_before", fine_before.grid.x, fine_before.grid.y, fine_before.intensity)
    out.image("focus_after", fine_after.grid.x, fine_after.grid.y, fine_after.intensity)
    _summary(out, "summary.csv", [
        ("residues", residues),
        ("flagged_patches", int(wrapped.flags.sum())),
        ("recovery_rms_rad", rms),
        ("extinction_before", er_before),
        ("extinction_after", er_after),
    ])


def _target_pupil(cfg, optics):
    region = cfg["hologram"]["region"]
    amp, target = ab.donut_target(region, optics, cfg["optics"]["fwhm00_m"])
    return region, amp, target


def _iris(cfg, holo):
    return cfg["hologram"]["iris_fraction"] * math.hypot(*holo.carrier)


def exp_synth_hologram(cfg, out):
    optics = build_optics(cfg)
    h = cfg["hologram"]
    region, amp, target = _target_pupil(cfg, optics)
    holo = lee_encode(amp, target.values, period=h["period"], mode=h["mode"], tilt=h["tilt"])
    first = first_order_field(holo, iris_radius=_iris(cfg, holo))
    want = amp * np.exp(1j * target.values)
    fidelity = abs(np.vdot(want, first.values)) / (np.linalg.norm(want) * np.linalg.norm(first.values))
    fio.write_hologram(holo, out.path("hologram.pbm"))
    out.names.append("hologram.txt")
    if out.pgm:
        fio.write_pgm16(first.intensity, out.path("first_order.pgm"))
    _summary(out, "summary.csv", [
        ("on_fraction", holo.on_fraction),
        ("first_order_efficiency", first_order_efficiency(holo, iris_radius=_iris(cfg, holo))),
        ("fidelity", float(fidelity)),
    ])


def exp_simulate_spot(cfg, out):
    optics = build_optics(cfg)
    h, sp = cfg["hologram"], cfg["spot"]
    region, amp, target = _target_pupil(cfg, optics)
    grid = ab.pupil_grid(region, optics)
    xx, yy = grid.mesh()
    w = pupil_waist_for_fwhm(cfg["optics"]["fwhm00_m"], optics)
    gauss = np.exp(-(xx ** 2 + yy ** 2) / w ** 2)

    half = int(round(sp["half_width_m"] / sp["pitch_m"]))
    fgrid = GridSpec(2 * half + 1, 2 * half + 1, sp["pitch_m"])
    fields = {}
    for name, a, phase in (("gaussian", gauss, np.zeros_like(gauss)), ("donut", amp, target.values)):
        holo = lee_encode(a, phase, period=h["period"], mode=h["mode"], tilt=h["tilt"])
        first = first_order_field(holo, iris_radius=_iris(cfg, holo))
        fields[name] = focus_window(ComplexField(grid, first.values), optics, fgrid)
    ig, idn = fields["gaussian"].intensity, fields["donut"].intensity
    peak = ig.max()
    x = fgrid.x
    fwhm00 = fwhm_1d(x, ig[half])
    fwhm01 = fwhm_1d(x, idn[half], mode="dip")
    er = idn.max() / idn[half, half] if idn[half, half] > 0 else math.inf
    out.table("profile.csv", ["x_m", "gaussian", "donut"],
              [(xi, a / peak, b / peak) for xi, a, b in zip(x, ig[half], idn[half])])
    out.image("spot_gaussian", x, fgrid.y, ig / peak)
    out.image("spot_donut", x, fgrid.y, idn / peak)
    _summary(out, "summary.csv", [
        ("fwhm00_m", fwhm00), ("valley_fwhm_m", fwhm01), ("extinction_on_axis", er)])


def exp_deplete(cfg, out):
    phys = build_physics(cfg)
    d, p = cfg["deplete"], cfg["pulse"]
    system = phys.level_system()
    n = d["points"] - 1
    cols = []
    times = None
    for s in d["s_values"]:
        pulse = DepletionPulse(s, d["t_end_s"], p["envelope"], p["rise_s"], p["fall_s"])
        times, rhos = lindblad_evolve(system, pulse, d["t_end_s"], n_record=n)
        cols.append(np.real(rhos[:, 0, 0]))
    header = ["t_s"] + [f"p0_s{s:g}" for s in d["s_values"]]
    out.table("deplete.csv", header, [(t, *vals) for t, *vals in zip(times, *cols)])


def _fit_row(fit):
    return (fit.center[0], fit.center[1], fit.fwhm_x, fit.fwhm_y, fit.amplitude, fit.offset,
            1 if fit.converged else 0)


FIT_HEADER = ["x0_m", "y0_m", "fwhm_x_m", "fwhm_y_m", "amplitude", "offset", "converged"]


def exp_image(cfg, out):
    icfg = build_imaging(cfg)
    phys = build_physics(cfg)
    beam = build_beam(cfg, icfg.pulse.s)
    img = run_imaging(icfg, beam, phys, build_ion(cfg), ReadoutModel(cfg["readout"]["error"]),
                      threads=cfg.threads)
    out.image("image", img.x, img.y, img.probabilities)
    fit = an.fit_gaussian2d(img)
    if not fit.converged:
        raise AnalysisError("Gaussian fit of the scan image did not converge")
    predicted = an.resolution_predicted(icfg.pulse.s, icfg.pulse.t_d, phys.coupling * phys.k,
                                        cfg["optics"]["fwhm01_m"])
    out.table("fit.csv", FIT_HEADER + ["predicted_m", "improvement", "coverage_warning"],
              [_fit_row(fit) + (predicted, an.improvement_ratio(cfg["optics"]["fwhm00_m"], fit.fwhm_x),
                                1 if img.metadata["coverage_warning"] else 0)])


def exp_motion(cfg, out):
    mcfg = build_motion(cfg)
    phys = build_physics(cfg)
    beam = build_beam(cfg, mcfg.s_max)
    frames = run_motion(mcfg, beam, phys, ReadoutModel(cfg["readout"]["error"]), build_blur(cfg),
                        threads=cfg.threads)
    rows, ts, ys = [], [], []
    for k, (t, img) in enumerate(frames):
        out.image(f"image_d{k:02d}", img.x, img.y, img.probabilities)
        fit = an.fit_gaussian2d(img)
        rows.append((k, t) + _fit_row(fit))
        if fit.converged:
            ts.append(t)
            ys.append(fit.center[1])
    out.table("fits.csv", ["delay_index", "t_s"] + FIT_HEADER, rows)
    if len(ts) < 5:
        raise AnalysisError(f"only {len(ts)} converged frames; trajectory fit needs 5")
    traj = an.fit_trajectory(np.array(ts), np.array(ys), mcfg.period)
    if not traj.converged:
        raise AnalysisError("trajectory fit did not converge")
    out.table("trajectory.csv", ["t_s", "y_fit_m", "y_model_m"],
              [(t, y, float(traj(t))) for t, y in zip(ts, ys)])
    _summary(out, "trajectory_fit.csv", [
        ("amplitude_m", traj.amplitude), ("amplitude_err_m", traj.stderr["amplitude"]),
        ("period_s", traj.period), ("period_err_s", traj.stderr["period"]),
        ("phase_rad", traj.phase), ("offset_m", traj.offset),
        ("amplitude_model_m", mcfg.amplitude), ("period_model_s", mcfg.period)])


def exp_stabilize(cfg, out):
    s = cfg["stabilizer"]
    plant, loop = build_loop(cfg)
    closed = st.simulate_loop(plant, loop, s["duration_s"], seed=cfg.seed)
    opened = st.simulate_loop(plant, loop.open(), s["duration_s"], seed=cfg.seed)
    drift = st.frequency_drift(closed.rel_error, 2 * math.pi * s["trap_hz"])
    out.table("stabilize.csv", ["t_s", "rel_error", "actuator_v"],
              zip(closed.t, closed.rel_error, closed.actuator))
    _summary(out, "summary.csv", [
        ("closed_std_ppm", closed.std_ppm), ("open_std_ppm", opened.std_ppm),
        ("spikes", closed.spikes()), ("diverged", 1 if closed.diverged else 0),
        ("frequency_std_hz", drift.std_hz),
        ("within_budget", 1 if st.within_budget(drift, s["budget_hz"]) else 0)])


def exp_report(cfg, out):
    paths = cfg["report"]["manifests"]
    if not paths:
        raise ParseError("report needs at least one manifest ([report] manifests or positional paths)")
    fit_rows, res_rows, traj = [], [], []
    for mpath in paths:
        man = read_manifest(mpath)
        mc = man.config
        base = Path(mpath).parent
        images = [name for name, _ in man.files if name.startswith("image") and name.endswith(".csv")]
        if mc.kind == "image":
            shots, pulse = mc["imaging"]["shots"], build_pulse(mc)
            control = [(pulse.s, pulse.t_d)]
        elif mc.kind == "motion":
            mcfg = build_motion(mc)
            shots, delays = mcfg.shots, mcfg.delays()
            control = [(mcfg.s_max, mcfg.t_d)] * len(images)
        else:
            continue
        phys = build_physics(mc)
        ts, ys = [], []
        for k, name in enumerate(images):
            x, y, vals = fio.read_image_csv(base / name)
            fit = an.fit_gaussian2d((x, y, vals, shots))
            s_max, t_d = control[k]
            fit_rows.append((str(mpath), name, s_max, t_d) + _fit_row(fit))
            if mc.kind == "image" and fit.converged:
                pred = an.resolution_predicted(s_max, t_d, phys.coupling * phys.k, mc["optics"]["fwhm01_m"])
                res_rows.append((s_max * t_d, fit.fwhm_x, pred))
            if mc.kind == "motion" and fit.converged:
                ts.append(float(delays[int(name[len("image_d"):-4])]))
                ys.append(fit.center[1])
        if mc.kind == "motion" and len(ts) >= 5:
            tf = an.fit_trajectory(np.array(ts), np.array(ys), mcfg.period)
            traj += [(t, yv, float(tf(t))) for t, yv in zip(ts, ys)]
    out.table("fits.csv", ["manifest", "file", "s_max", "t_d_s"] + FIT_HEADER, fit_rows)
    out.table("resolution.csv", ["control_s", "measured_m", "predicted_m"], res_rows)
    out.table("trajectory.csv", ["t_s", "y_fit_m", "y_model_m"], traj)


EXPERIMENTS = {
    "sense-aberration": exp_sense_aberration,
    "synth-hologram": exp_synth_hologram,
    "simulate-spot": exp_simulate_spot,
    "deplete": exp_deplete,
    "image": exp_image,
    "motion": exp_motion,
    "stabilize": exp_stabilize,
    "report": exp_report,
}


def run(cfg):
    """Run the configured experiment, write its outputs and the manifest."""
    out = _Outputs(cfg)
    out.dir.mkdir(parents=True, exist_ok=True)
    EXPERIMENTS[cfg.kind](cfg, out)
    files = tuple((name, fio.sha256(out.dir / name)) for name in out.names)
    manifest = RunManifest(cfg, __version__, files, out.dir / MANIFEST)
    fio._write(manifest.path, manifest.to_text())
    return manifest


def _parser():
    p = argparse.ArgumentParser(prog="gsdion", description="Trapped-ion GSD imaging simulator.",
                                epilog="exit codes: 0 ok, 1 internal, 2 parse, 3 configuration, "
                                       "4 numerical, 5 analysis")
    p.add_argument("kind", nargs="?", choices=KINDS, help="experiment (overrides [run] kind)")
    p.add_argument("manifests", nargs="*", help="run manifests (report only)")
    p.add_argument("--config", metavar="PATH", help="configuration file")
    p.add_argument("--seed", type=int, help="master seed (overrides the file)")
    p.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    p.add_argument("--threads", type=int, help="cap on concurrent workers")
    p.add_argument("--format", choices=FORMATS, help="image outputs: csv, pgm or both")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)  # argparse exits with 2 on bad flags
    try:
        text = Path(args.config).read_text(encoding="utf-8") if args.config else ""
        if args.threads is not None and args.threads < 1:
            raise ParseError("--threads must be >= 1")
        cfg = parse_config(text, kind=args.kind, seed=args.seed, out_dir=args.out, threads=args.threads,
                           fmt_=args.format)
        if args.manifests:
            if cfg.kind != "report":
                raise ParseError("positional manifests are only accepted by 'report'")
            vals = dict(cfg.values)
            vals["report"] = {"manifests": tuple(args.manifests)}
            cfg = RunConfig(cfg.kind, cfg.seed, cfg.out_dir, cfg.threads, cfg.format, vals)
        manifest = run(cfg)
    except GsdError as exc:
        print(f"gsdion: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, UnicodeDecodeError) as exc:
        print(f"gsdion: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    print(f"wrote {len(manifest.files)} files and {manifest.path}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
