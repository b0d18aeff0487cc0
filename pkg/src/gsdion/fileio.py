"""Plain-text and bitmap interchange formats.

Floats are written with ``repr`` (shortest round-trip form), '.' decimal and
LF line endings so that files are byte-reproducible.
"""

from __future__ import annotations

import hashlib
import math
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .hologram import BinaryHologram
from .optics import ComplexField, GridSpec


def fmt(x):
    """Shortest round-trip text for a number."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --- complex fields -------------------------------------------------------

def format_field(field):
    g = field.grid
    lines = [f"{g.nx} {g.ny} {fmt(g.pitch)} {fmt(g.origin[0])} {fmt(g.origin[1])}"]
    for row in field.values:
        lines.append(" ".join(f"{fmt(v.real)},{fmt(v.imag)}" for v in row))
    return "\n".join(lines) + "\n"


def write_field(field, path):
    return _write(path, format_field(field))


def parse_field(text):
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty field file", 1)
    head = lines[0].split()
    if len(head) not in (3, 5):
        raise ParseError("header must be 'nx ny pitch [x0 y0]'", 1)
    try:
        nx, ny, pitch = int(head[0]), int(head[1]), float(head[2])
        origin = (float(head[3]), float(head[4])) if len(head) == 5 else None
    except ValueError as exc:
        raise ParseError(f"bad header: {exc}", 1) from None
    if len(lines) - 1 != ny:
        raise ParseError(f"expected {ny} rows, found {len(lines) - 1}", len(lines))
    values = np.empty((ny, nx), dtype=np.complex128)
    for i, line in enumerate(lines[1:]):
        cells = line.split()
        if len(cells) != nx:
            raise ParseError(f"expected {nx} values, found {len(cells)}", i + 2)
        try:
            for j, cell in enumerate(cells):
                re, im = cell.split(",")
                values[i, j] = complex(float(re), float(im))
        except ValueError:
            raise ParseError(f"malformed 're,im' pair {cell!r}", i + 2) from None
    return ComplexField(GridSpec(nx, ny, pitch, origin), values)


def read_field(path):
    return parse_field(Path(path).read_text(encoding="utf-8"))


# --- real matrices (phase maps, images) ----------------------------------

def format_matrix(values, header=""):
    values = np.asarray(values, dtype=float)
    lines = [header] if header else []
    lines += [" ".join(fmt(v) for v in row) for row in values]
    return "\n".join(lines) + "\n"


def write_phase_map(pm, path):
    ny, nx = pm.shape
    head = f"{nx} {ny} {pm.cell} {'wrapped' if pm.wrapped else 'unwrapped'}"
    return _write(path, format_matrix(pm.values, head))


def read_phase_map(path):
    from .aberration import PhaseMap

    lines = Path(path).read_text(encoding="utf-8").splitlines()
    try:
        nx, ny, cell, kind = lines[0].split()
        values = np.array([[float(v) for v in ln.split()] for ln in lines[1:]])
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed phase map: {exc}", 1) from None
    if values.shape != (int(ny), int(nx)):
        raise ParseError("phase map size does not match its header", 1)
    return PhaseMap(values, wrapped=(kind == "wrapped"), cell=int(cell))


def format_image_csv(x, y, values):
    """Probability matrix with x coordinates as header and y as first column."""
    lines = ["y_m\\x_m," + ",".join(fmt(v) for v in x)]
    for yi, row in zip(y, np.asarray(values)):
        lines.append(fmt(yi) + "," + ",".join(fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def write_image_csv(x, y, values, path):
    return _write(path, format_image_csv(x, y, values))


def read_image_csv(path):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    try:
        x = np.array([float(v) for v in lines[0].split(",")[1:]])
        rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed image CSV {path}: {exc}", 1) from None
    arr = np.array(rows)
    return x, arr[:, 0], arr[:, 1:]


def format_csv(header, rows):
    out = [",".join(header)]
    out += [",".join(v if isinstance(v, str) else fmt(v) for v in row) for row in rows]
    return "\n".join(out) + "\n"


def write_csv(path, header, rows):
    return _write(path, format_csv(header, rows))


# --- bitmaps --------------------------------------------------------------

def write_pgm16(intensity, path):
    """16-bit binary PGM, max-normalized (an all-zero image stays zero)."""
    a = np.asarray(intensity, dtype=float)
    if a.ndim != 2 or not np.all(np.isfinite(a)):
        raise ValidationError("PGM export needs a finite 2-D array")
    peak = a.max()
    scaled = np.zeros(a.shape) if peak <= 0 else np.clip(a, 0, None) / peak
    data = np.rint(scaled * 65535).astype(">u2")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = f"P5\n{a.shape[1]} {a.shape[0]}\n65535\n".encode("ascii")
    path.write_bytes(head + data.tobytes())
    return path


def read_pgm16(path):
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ParseError("not a binary PGM", 1)
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=">u2").reshape(h, w).astype(np.uint16)


def write_hologram(holo, path):
    """PBM (P4) bitmap plus a ``.txt`` sidecar with the carrier parameters."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    h, w = holo.bits.shape
    # PBM: 1 = black; we store "on" mirrors as 1
    packed = np.packbits(holo.bits, axis=1)
    path.write_bytes(f"P4\n{w} {h}\n".encode("ascii") + packed.tobytes())
    side = path.with_suffix(".txt")
    _write(side, "\n".join([
        f"period = {fmt(holo.period)}",
        f"tilt = {fmt(holo.tilt)}",
        f"mirror_pitch_m = {fmt(holo.mirror_pitch)}",
        f"region_origin = {holo.region_origin[0]} {holo.region_origin[1]}",
        f"region_size = {w} {h}",
    ]) + "\n")
    return path, side


def read_hologram(path):
    path = Path(path)
    raw = path.read_bytes()
    parts = raw.split(b"\n", 2)
    if parts[0] != b"P4":
        raise ParseError("not a binary PBM", 1)
    w, h = map(int, parts[1].split())
    bits = np.unpackbits(np.frombuffer(parts[2], dtype=np.uint8).reshape(h, -1), axis=1)[:, :w]
    meta = {}
    for i, line in enumerate(path.with_suffix(".txt").read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        if "=" not in line:
            raise ParseError("sidecar lines must be 'key = value'", i + 1)
        k, v = (s.strip() for s in line.split("=", 1))
        meta[k] = v
    size = tuple(int(v) for v in meta["region_size"].split())
    if size != (w, h):
        raise ParseError("sidecar region size does not match the bitmap", 1)
    origin = tuple(int(v) for v in meta["region_origin"].split())
    return BinaryHologram(bits.astype(bool), period=float(meta["period"]), tilt=float(meta["tilt"]),
                          mirror_pitch=float(meta["mirror_pitch_m"]), region_origin=origin)


def is_close_text(a, b):
    """Numeric equality of two formatted floats (helper for tests)."""
    return math.isclose(float(a), float(b), rel_tol=0, abs_tol=0)
