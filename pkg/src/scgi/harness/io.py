"""File formats: curve CSV, 16-bit PGM, frame stacks with manifests, reports."""
from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np

from ..errors import DomainError, ScgiError
from ..optics import Grid

__all__ = [
    "ManifestError",
    "write_curves_csv",
    "read_curves_csv",
    "write_pgm",
    "read_pgm",
    "write_frame_stack",
    "FrameStack",
    "read_manifest",
    "write_key_values",
    "read_key_values",
]

CSV_HEADER = ("beta_m", "gi", "scgi")


class ManifestError(ScgiError):
    pass


def _fmt(x) -> str:
    return format(float(x), ".9g")


def write_curves_csv(path, beta, gi, scgi, header=CSV_HEADER):
    rows = np.column_stack([beta, gi, scgi])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_curves_csv(path):
    """Return (header, array of shape (rows, columns))."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader if row])
    return header, data


def write_pgm(path, image):
    """Binary P5 graymap scaled to maxval 65535."""
    img = np.asarray(image, dtype=float)
    if img.ndim == 1:
        img = img[None, :]
    lo, hi = float(img.min()), float(img.max())
    scaled = np.zeros(img.shape) if hi == lo else (img - lo) / (hi - lo)
    data = np.rint(scaled * 65535).astype(">u2")
    rows, cols = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n65535\n".encode("ascii"))
        fh.write(data.tobytes())


def _pgm_tokens(buf: bytes, count: int):
    tokens, pos = [], 2
    while len(tokens) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ManifestError("truncated PGM header")
        tokens.append(int(buf[start:pos]))
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    """Read a P5 (binary) or P2 (ASCII) graymap as a (rows, cols) float array."""
    buf = Path(path).read_bytes()
    magic = buf[:2]
    if magic not in (b"P5", b"P2"):
        raise ManifestError(f"{path}: not a PGM file")
    (cols, rows, maxval), pos = _pgm_tokens(buf, 3)
    if not 0 < maxval < 65536:
        raise ManifestError(f"{path}: invalid maxval {maxval}")
    if magic == b"P2":
        vals = np.array(buf[pos:].split(), dtype=float)
    else:
        dtype = ">u2" if maxval > 255 else "u1"
        vals = np.frombuffer(buf, dtype=dtype, count=rows * cols, offset=pos).astype(float)
    if vals.size != rows * cols:
        raise ManifestError(f"{path}: expected {rows * cols} samples, found {vals.size}")
    return vals.reshape(rows, cols)


def write_key_values(path, items):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for k, v in items:
            fh.write(f"{k} = {v}\n")


def read_key_values(path) -> list[tuple[str, str]]:
    items = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ManifestError(f"{path}: malformed line {line!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            items.append((k, v))
    return items


def write_frame_stack(directory, intensities, buckets, beta_grid: Grid, stem="frames"):
    """Write frames as raw little-endian float64 rows plus buckets and manifest.

    Returns the manifest path.
    """
    directory = Path(directory)
    pix = directory / f"{stem}.f64"
    np.asarray(intensities, dtype="<f8").tofile(pix)
    bpath = directory / f"{stem}_buckets.csv"
    with open(bpath, "w", encoding="utf-8", newline="") as fh:
        fh.write("frame,bucket\n")
        for i, b in enumerate(buckets):
            fh.write(f"{i},{float(b)!r}\n")
    manifest = directory / f"{stem}_manifest.txt"
    write_key_values(manifest, [
        ("pixel_count", beta_grid.count),
        ("beta_start_m", repr(beta_grid.start)),
        ("beta_step_m", repr(beta_grid.step)),
        ("buckets", bpath.name),
        ("pixels", pix.name),
    ])
    return manifest


class FrameStack:
    """Random-access view over the frames listed in a manifest."""

    def __init__(self, parts, buckets, grid: Grid | None):
        self.parts = parts
        self.offsets = np.cumsum([0] + [p.shape[0] for p in parts])
        self.buckets = np.asarray(buckets, dtype=float)
        self.grid = grid
        self.pixel_count = parts[0].shape[1]

    def __len__(self):
        return int(self.offsets[-1])

    def __call__(self, start: int, stop: int):
        chunks = []
        for part, off in zip(self.parts, self.offsets[:-1]):
            lo, hi = max(start, off), min(stop, off + part.shape[0])
            if lo < hi:
                chunks.append(np.asarray(part[lo - off:hi - off], dtype=float))
        I = np.concatenate(chunks) if len(chunks) > 1 else chunks[0]
        B = self.buckets[start:stop]
        if np.any(I < 0.0) or not np.all(np.isfinite(I)):
            raise DomainError(f"frames {start}..{stop - 1} contain negative or non-finite intensities")
        return I, B


def _read_buckets(path):
    values = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[-1].strip():
                continue
            try:
                values.append(float(row[-1]))
            except ValueError:
                if values:
                    raise ManifestError(f"{path}: non-numeric bucket value {row[-1]!r}") from None
                # header line
    b = np.array(values)
    if np.any(b < 0.0) or not np.all(np.isfinite(b)):
        raise DomainError(f"{path}: negative or non-finite bucket values")
    return b


def read_manifest(path) -> FrameStack:
    """Load a manifest of per-frame pixel files and a bucket CSV.

    Keys: ``pixels`` (repeatable; ``.f64`` raw float64 rows or ``.pgm``
    rows), ``buckets``, ``pixel_count``, optional ``pgm_scale`` and the
    reference grid ``beta_start_m`` / ``beta_step_m``.
    """
    path = Path(path)
    base = path.parent
    items = read_key_values(path)
    pixels = [v for k, v in items if k == "pixels"]
    meta = {k: v for k, v in items if k != "pixels"}
    unknown = set(meta) - {"pixel_count", "buckets", "pgm_scale", "beta_start_m", "beta_step_m"}
    if unknown:
        raise ManifestError(f"{path}: unknown manifest keys {sorted(unknown)}")
    if not pixels or "buckets" not in meta:
        raise ManifestError(f"{path}: manifest needs 'pixels' and 'buckets' entries")
    pgm_scale = float(meta.get("pgm_scale", 1.0))
    count = int(meta["pixel_count"]) if "pixel_count" in meta else None
    parts = []
    for name in pixels:
        p = base / name
        if p.suffix.lower() == ".pgm":
            arr = read_pgm(p) * pgm_scale
        else:
            if count is None:
                raise ManifestError(f"{path}: raw pixel files need pixel_count")
            size = os.path.getsize(p)
            if size % (8 * count):
                raise ManifestError(f"{p}: size {size} is not a multiple of {count} float64 pixels")
            arr = np.memmap(p, dtype="<f8", mode="r").reshape(-1, count)
        if count is None:
            count = arr.shape[1]
        if arr.shape[1] != count:
            raise ManifestError(f"{p}: {arr.shape[1]} pixels per frame, expected {count}")
        parts.append(arr)
    buckets = _read_buckets(base / meta["buckets"])
    n_frames = sum(a.shape[0] for a in parts)
    if n_frames != buckets.size:
        raise ManifestError(f"{path}: {n_frames} frames but {buckets.size} bucket values")
    grid = None
    if "beta_start_m" in meta and "beta_step_m" in meta:
        grid = Grid(float(meta["beta_start_m"]), float(meta["beta_step_m"]), count)
    return FrameStack(parts, buckets, grid)
