"""Run configuration: a line-based ``[section]`` / ``key = value`` format.

Physical quantities carry their unit in the key suffix (``_m``, ``_s``,
``_hz``, ``_v``, ...). Values are plain numbers; ``auto`` selects a derived
default where a key allows it. Comments start with ``#``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import constants as C
from .errors import ParseError
from .fileio import fmt

KINDS = ("sense-aberration", "synth-hologram", "simulate-spot", "deplete", "image", "motion",
         "stabilize", "report")
FORMATS = ("csv", "pgm", "both")
UNIT_SUFFIXES = ("m_per_s", "per_s", "m", "s", "hz", "v", "rad", "db", "n", "u")
AUTO = "auto"


@dataclass(frozen=True)
class Key:
    kind: str  # int | float | bool | choice | floats | paths
    default: object
    lo: float = None
    hi: float = None
    choices: tuple = ()
    auto: bool = False  # accepts the literal "auto"
    lo_open: bool = False


def _f(default, lo=None, hi=None, auto=False, lo_open=False):
    # store float defaults as floats so they print as they parse
    default = default if default in (None, AUTO) else float(default)
    return Key("float", default, lo, hi, auto=auto, lo_open=lo_open)


def _i(default, lo=None, hi=None):
    return Key("int", default, lo, hi)


def _c(default, *choices):
    return Key("choice", default, choices=choices)


SCHEMA = {
    "run": {
        "kind": Key("choice", None, choices=KINDS),
        "seed": _i(0, 0, 2 ** 63 - 1),
        "threads": _i(1, 1, 256),
        "format": _c("both", *FORMATS),
    },
    "optics": {
        "wavelength_m": _f(C.WAVELENGTH, 0, lo_open=True),
        "numerical_aperture": _f(C.NA, 0, 1, lo_open=True),
        "pupil_diameter_m": _f(C.PUPIL_DIAMETER, 0, lo_open=True),
        "fwhm00_m": _f(C.FWHM00, 0, lo_open=True),
        "fwhm01_m": _f(C.FWHM01, 0, lo_open=True),
        "extinction_ratio": _f(C.EXTINCTION_RATIO, 1),
    },
    "physics": {
        "beta": _f(C.BETA_BRIGHT, 0, 1),
        "linewidth_hz": _f(C.GAMMA / (2 * math.pi), 0, lo_open=True),
        "k_per_s": _f(AUTO, 0, lo_open=True, auto=True),
        "coupling": _f(AUTO, 0, auto=True),
        "calibration_resolution_m": _f(C.BEST_RESOLUTION, 0, lo_open=True),
    },
    "pulse": {
        "s_max": _f(C.IMAGING_S_MAX, 0),
        "t_d_s": _f(C.IMAGING_PULSE, 0, lo_open=True),
        "envelope": _c("rectangular", "rectangular", "trapezoid"),
        "rise_s": _f(C.RISE_TIME, 0, lo_open=True),
        "fall_s": _f(C.FALL_TIME, 0, lo_open=True),
    },
    "imaging": {
        "n": _i(20, 2, 400),
        "pitch_m": _f(50e-9, 0, lo_open=True),
        "shots": _i(C.SHOTS, 1),
        "cooling_s": _f(C.COOLING_TIME, 0),
        "pump_s": _f(C.PUMP_TIME, 0),
        "detect_s": _f(C.DETECT_TIME, 0),
        "mode": _c("rate", "rate", "master", "lookup"),
        "center_x_m": _f(0.0),
        "center_y_m": _f(0.0),
        "ion_x_m": _f(0.0),
        "ion_y_m": _f(0.0),
    },
    "readout": {
        "error": _f(C.READOUT_ERROR, 0, 0.5),
    },
    "thermal": {
        "enabled": Key("bool", True),
        "rms_m": _f(C.WAVEPACKET_RMS, 0),
        "order": _i(7, 1, 40),
        "per_shot": Key("bool", False),
    },
    "drift": {
        "enabled": Key("bool", True),
        "speed_m_per_s": _f(C.DRIFT_SPEED, 0),
        "bound_m": _f(C.DRIFT_BOUND, 0, lo_open=True),
        "persistence_s": _f((C.DRIFT_BOUND / C.DRIFT_SPEED) ** 2 / 160.0, 0, lo_open=True),
    },
    "motion": {
        "trap_hz": _f(C.OMEGA_Y / (2 * math.pi), 0, lo_open=True),
        "drive_hz": _f(AUTO, 0, lo_open=True, auto=True),
        "drive_cycles": _i(C.DRIVE_CYCLES, 1),
        "force_n": _f(C.DRIVE_FORCE),
        "mass_u": _f(C.ION_MASS / C.AMU, 0, lo_open=True),
        "phase_rad": _f(0.0),
        "delays_per_period": _i(10, 1),
        "periods": _i(1, 1),
        "area_m": _f(C.MOTION_AREA, 0, lo_open=True),
        "points": _i(C.MOTION_POINTS, 3),
        "s_max": _f(C.MOTION_S_MAX, 0),
        "t_d_s": _f(C.MOTION_PULSE, 0, lo_open=True),
        "shots": _i(C.SHOTS, 1),
    },
    "hologram": {
        "region": _i(C.DMD_REGION, 16, 1080),
        "period": _f(C.GRATING_PERIOD, 4),
        "tilt": _f(0.0),
        "mode": _c("proportional", "proportional", "linearized"),
        "iris_fraction": _f(0.4, 0, 0.5, lo_open=True),
    },
    "sensing": {
        "patch_size": _i(C.PATCH_SIZE, 4),
        "tilt": _f(C.SENSING_TILT),
        "min_visibility": _f(0.05, 0, 1),
        "noise_counts": _f(0.0, 0),
        "pv_rad": _f(14 * math.pi, 0),
        "method": _c("spectral", "spectral", "direct"),
    },
    "spot": {
        "half_width_m": _f(3e-6, 0, lo_open=True),
        "pitch_m": _f(25e-9, 0, lo_open=True),
    },
    "deplete": {
        "s_values": Key("floats", (1.0, 10.0, 100.0, 400.0), 0),
        "t_end_s": _f(100e-9, 0, lo_open=True),
        "points": _i(101, 2, 100000),
    },
    "stabilizer": {
        "rate_hz": _f(C.LOOP_RATE, 0, lo_open=True),
        "set_point_v": _f(C.SET_POINT, 0, lo_open=True),
        "kp": _f(0.0),
        "ki": _f(15.0),
        "kd": _f(0.0),
        "adc_lsb_v": _f(C.ADC_RESOLUTION, 0, lo_open=True),
        "dac_bits": _i(C.DAC_BITS, 1, 32),
        "dac_min_v": _f(-1.0),
        "dac_max_v": _f(1.0),
        "attenuation_db": _f(C.ATTENUATION_DB, 0),
        "actuator_gain": _f(1.0),
        "duration_s": _f(3600.0, 0, lo_open=True),
        "walk_step": _f(AUTO, 0, auto=True),
        "white": _f(20e-6, 0),
        "step": _f(0.0),
        "step_time_s": _f(0.0, 0),
        "trap_hz": _f(C.OMEGA_Y / (2 * math.pi), 0, lo_open=True),
        "budget_hz": _f(C.FREQUENCY_BUDGET, 0, lo_open=True),
    },
    "report": {
        "manifests": Key("paths", ()),
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration. ``values[section][key]`` holds typed values."""

    kind: str
    seed: int = 0
    out_dir: str = "out"
    threads: int = 1
    format: str = "both"
    values: dict = field(default_factory=dict, repr=False)

    def __getitem__(self, section):
        return self.values[section]

    def to_text(self):
        """Canonical text of the resolved config; parses back to an equal config."""
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            for key in keys:
                if section == "run":
                    val = {"kind": self.kind, "seed": self.seed, "threads": self.threads,
                           "format": self.format}[key]
                else:
                    val = self.values[section][key]
                lines.append(f"{key} = {_render(val)}")
            lines.append("")
        return "\n".join(lines)


def _render(val):
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, (tuple, list)):
        return ", ".join(v if isinstance(v, str) else fmt(v) for v in val)
    if isinstance(val, str):
        return val
    return fmt(val)


def _split_suffix(key):
    for suf in UNIT_SUFFIXES:
        if key.endswith("_" + suf):
            return key[: -len(suf) - 1], suf
    return key, None


def _unit_hint(section, key):
    """Known key in ``section`` with the same stem but another (or no) unit suffix."""
    stem, _ = _split_suffix(key)
    for known in SCHEMA[section]:
        kstem, ksuf = _split_suffix(known)
        if known == key or ksuf is None:
            continue
        # 't_d', 't_d_ms' and 't_d_s' share the stem 't_d'
        if kstem == stem or key.startswith(kstem + "_"):
            return known
    return None


def _convert(spec, raw, line, key):
    if spec.auto and raw == AUTO:
        return AUTO
    try:
        if spec.kind == "int":
            val = int(raw)
        elif spec.kind == "float":
            val = float(raw)
            if not math.isfinite(val):
                raise ValueError("not finite")
        elif spec.kind == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError("expected true or false")
            return low in ("true", "1", "yes")
        elif spec.kind == "choice":
            if raw not in spec.choices:
                raise ValueError(f"expected one of {', '.join(spec.choices)}")
            return raw
        elif spec.kind == "floats":
            val = tuple(float(v) for v in raw.split(",") if v.strip())
            if not val:
                raise ValueError("empty list")
            for v in val:
                _check_range(spec, v, line, key)
            return val
        elif spec.kind == "paths":
            return tuple(v.strip() for v in raw.split(",") if v.strip())
        else:  # pragma: no cover
            raise ValueError(f"unsupported kind {spec.kind}")
    except ValueError as exc:
        raise ParseError(f"{key}: invalid value {raw!r} ({exc})", line) from None
    _check_range(spec, val, line, key)
    return val


def _check_range(spec, val, line, key):
    lo, hi = spec.lo, spec.hi
    if lo is not None and (val < lo or (spec.lo_open and val == lo)):
        op = ">" if spec.lo_open else ">="
        raise ParseError(f"{key} = {val} out of range (must be {op} {lo})", line)
    if hi is not None and val > hi:
        raise ParseError(f"{key} = {val} out of range (must be <= {hi})", line)


def defaults():
    return {sec: {k: spec.default for k, spec in keys.items()} for sec, keys in SCHEMA.items()}


def parse_config(text, kind=None, seed=None, out_dir="out", threads=None, fmt_=None):
    """Parse config text into a :class:`RunConfig` with every default filled.

    ``kind``/``seed``/``threads``/``fmt_`` given here override the file.
    Errors are :class:`ParseError` carrying the offending line number.
    """
    values = defaults()
    seen = set()
    section = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(f"malformed section header {raw_line.strip()!r}", lineno)
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ParseError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw_line.strip()!r}", lineno)
        if section is None:
            raise ParseError("key outside of any [section]", lineno)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA[section]:
            hint = _unit_hint(section, key)
            if hint is not None:
                raise ParseError(f"unit-suffix mismatch: [{section}] {key} (expected {hint})", lineno)
            raise ParseError(f"unknown key [{section}] {key}", lineno)
        if (section, key) in seen:
            raise ParseError(f"duplicate key [{section}] {key}", lineno)
        seen.add((section, key))
        if raw == "" and SCHEMA[section][key].kind != "paths":
            raise ParseError(f"{key}: missing value", lineno)
        values[section][key] = _convert(SCHEMA[section][key], raw, lineno, key)

    run = values.pop("run")
    kind = kind or run["kind"]
    if kind is None:
        raise ParseError("experiment kind not given (set [run] kind or pass it on the command line)")
    if kind not in KINDS:
        raise ParseError(f"unknown experiment kind {kind!r}")
    return RunConfig(
        kind=kind,
        seed=run["seed"] if seed is None else _seed(seed),
        out_dir=out_dir,
        threads=run["threads"] if threads is None else threads,
        format=run["format"] if fmt_ is None else fmt_,
        values=values,
    )


def _seed(seed):
    seed = int(seed)
    if seed < 0:
        raise ParseError(f"seed must be non-negative (got {seed})")
    return seed
