"""File formats: numeric CSV, 16-bit PGM frames with JSON sidecars."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .exceptions import ParseError
from .imaging import CameraModel, Frame


def format_value(v) -> str:
    """Round-trip decimal text for numbers; ``str`` for everything else."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def write_csv(path, header, rows) -> Path:
    """Write ``rows`` under ``header`` with ``\\n`` line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])
    return path


def write_columns(path, columns: dict) -> Path:
    """Write equal-length columns given as ``{name: values}``."""
    names = list(columns)
    data = [np.asarray(columns[n]).ravel() for n in names]
    if len({len(d) for d in data}) > 1:
        raise ValueError("columns must have equal length")
    return write_csv(path, names, zip(*data))


def read_csv(path, required=None, numeric=True):
    """Read a header-first CSV into ``{name: ndarray}``.

    Cells of numeric columns must parse as floats; failures raise
    :class:`ParseError` with the 1-based line and column.  Columns whose
    name is in ``numeric`` (when it is a collection) or all columns (when
    ``True``) are converted.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8 text ({exc.reason})", str(path)) from None
    rows = list(csv.reader(text.splitlines()))
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise ParseError("missing header", str(path), 1, 1)
    header = [h.strip() for h in rows[0]]
    for name in required or ():
        if name not in header:
            raise ParseError(f"missing column {name!r}", str(path), 1, 1)
    cols = {h: [] for h in header}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", str(path), lineno,
                             min(len(row), len(header)) + 1)
        for col, (h, cell) in enumerate(zip(header, row), start=1):
            convert = numeric is True or (numeric and h in numeric)
            if convert:
                try:
                    cols[h].append(float(cell))
                except ValueError:
                    raise ParseError(f"cannot parse {cell!r} as a number", str(path), lineno, col) from None
            else:
                cols[h].append(cell.strip())
    return {h: np.asarray(v, dtype=float if (numeric is True or (numeric and h in numeric)) else object)
            for h, v in cols.items()}


def write_pgm(path, pixels) -> Path:
    """Binary 16-bit grey PGM (big-endian, maxval 65535)."""
    px = np.asarray(pixels)
    if px.ndim != 2:
        raise ValueError("pixels must be 2-D")
    if px.min(initial=0) < 0 or px.max(initial=0) > 65535:
        raise ValueError("pixel values must lie in [0, 65535]")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = f"P5\n{px.shape[1]} {px.shape[0]}\n65535\n".encode("ascii")
    path.write_bytes(head + px.astype(">u2").tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError("truncated PGM header", str(path))
        tokens.append(data[start:pos].decode("ascii", "replace"))
    pos += 1
    if tokens[0] != "P5":
        raise ParseError(f"not a binary PGM (magic {tokens[0]!r})", str(path), 1, 1)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ParseError("malformed PGM header", str(path)) from None
    dtype = ">u2" if maxval > 255 else "u1"
    n = width * height * np.dtype(dtype).itemsize
    if len(data) - pos < n:
        raise ParseError("truncated PGM pixel data", str(path))
    return np.frombuffer(data[pos:pos + n], dtype=dtype).reshape(height, width).astype(np.int64)


def write_frame(path, frame: Frame, seed=None) -> Path:
    """``<name>.pgm`` plus ``<name>.json`` with origin, camera and seed."""
    path = Path(path).with_suffix(".pgm")
    write_pgm(path, frame.pixels)
    c = frame.camera
    meta = {"origin_nm": [float(frame.origin[0]), float(frame.origin[1])], "pixel_size_nm": c.pixel_size,
            "psf_sigma_nm": c.psf_sigma, "read_noise": c.read_noise, "background_rate": c.background_rate,
            "seed": seed}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_frame(path) -> Frame:
    """Read a frame; the sidecar is optional (defaults: origin 0, default camera)."""
    path = Path(path)
    pixels = read_pgm(path)
    side = path.with_suffix(".json")
    if not side.exists():
        return Frame(pixels)
    try:
        meta = json.loads(side.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, str(side), exc.lineno, exc.colno) from None
    cam = CameraModel(pixel_size=meta.get("pixel_size_nm", 100.0),
                      read_noise=meta.get("read_noise", 0.0),
                      background_rate=meta.get("background_rate", 0.0),
                      psf_sigma=meta.get("psf_sigma_nm", CameraModel().psf_sigma))
    return Frame(pixels, tuple(meta.get("origin_nm", (0.0, 0.0))), cam)
