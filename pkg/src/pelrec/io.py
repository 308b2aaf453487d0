"""PGM frames, ``.flo`` flow files, CSV tables and key=value manifests.

All writers go through a temporary file in the destination directory followed
by an atomic rename, so an interrupted run never leaves a half-written output.
"""

from __future__ import annotations

import contextlib
import csv
import os
import re
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError
from .fields import DisplacementField, Status

__all__ = [
    "FLOW_MAGIC",
    "UNKNOWN_FLOW",
    "read_pgm",
    "write_pgm",
    "read_flow",
    "write_flow",
    "write_csv",
    "read_manifest",
    "write_manifest",
    "atomic_open",
]

FLOW_MAGIC = b"PIEH"
UNKNOWN_FLOW = 1e9

_WS = b" \t\n\r\v\f"


@contextlib.contextmanager
def atomic_open(path, mode="wb", **kwargs):
    """Open a temp file next to `path` and rename it over `path` on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, mode, **kwargs) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _header_tokens(data: bytes, count: int):
    """Read `count` whitespace-separated header tokens, skipping ``#`` comments.

    Returns the tokens and the offset just past the last one.
    """
    tokens = []
    pos = 2
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos] in _WS:
            pos += 1
        if pos < n and data[pos] == ord("#"):
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < n and data[pos] not in _WS and data[pos] != ord("#"):
            pos += 1
        if start == pos:
            raise FormatError(f"truncated PGM header at byte {pos}")
        tok = data[start:pos]
        if not tok.isdigit():
            raise FormatError(f"malformed PGM header token {tok!r} at byte {start}")
        tokens.append(int(tok))
    return tokens, pos


def read_pgm(path) -> np.ndarray:
    """Read a binary (``P5``) or ASCII (``P2``) PGM with maxval <= 255.

    Intensities are returned as stored (no rescaling by maxval) in a float64
    ``(height, width)`` array.

    Raises
    ------
    FormatError
        Bad magic, malformed or truncated data, or maxval > 255; the message
        names the byte offset where parsing failed.
    """
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P5", b"P2"):
        raise FormatError(f"bad PGM magic {magic!r} at byte 0")
    (width, height, maxval), pos = _header_tokens(data, 3)
    if width < 1 or height < 1:
        raise FormatError(f"invalid PGM dimensions {width}x{height} before byte {pos}")
    if not 0 < maxval <= 255:
        raise FormatError(f"unsupported PGM depth: maxval {maxval} before byte {pos} (only <= 255)")
    size = width * height

    if magic == b"P5":
        if pos >= len(data) or data[pos] not in _WS:
            raise FormatError(f"missing whitespace after PGM header at byte {pos}")
        pos += 1
        if len(data) - pos < size:
            raise FormatError(f"truncated PGM raster: expected {size} bytes from byte {pos}, found {len(data) - pos}")
        pixels = np.frombuffer(data, dtype=np.uint8, count=size, offset=pos)
    else:
        samples = [m for m in re.finditer(rb"#[^\r\n]*|[^\s#]+", data[pos:]) if not m.group().startswith(b"#")]
        if len(samples) < size:
            raise FormatError(f"truncated PGM raster: expected {size} samples after byte {pos}, found {len(samples)}")
        for m in samples[:size]:
            if not m.group().isdigit():
                raise FormatError(f"malformed PGM sample {m.group()!r} at byte {pos + m.start()}")
        pixels = np.array([int(m.group()) for m in samples[:size]], dtype=np.int64)
    if pixels.max(initial=0) > maxval:
        raise FormatError(f"PGM sample exceeds maxval {maxval}")
    return pixels.reshape(height, width).astype(np.float64)


def write_pgm(path, frame, binary: bool = True) -> None:
    """Write `frame` as an 8-bit PGM; values are rounded and clipped to ``[0, 255]``."""
    frame = np.asarray(frame, dtype=np.float64)
    pixels = np.clip(np.rint(frame), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    with atomic_open(path, "wb") as fh:
        if binary:
            fh.write(b"P5\n%d %d\n255\n" % (w, h))
            fh.write(pixels.tobytes())
        else:
            fh.write(b"P2\n%d %d\n255\n" % (w, h))
            for row in pixels:
                fh.write(b" ".join(b"%d" % v for v in row) + b"\n")


def write_flow(path, field: DisplacementField) -> None:
    """Write a ``.flo`` file: ``PIEH``, int32 width and height, float32 ``(dx, dy)`` pairs.

    All values are little-endian.  Skipped pixels are written as ``(1e9, 1e9)``.
    """
    vec = np.array(field.vectors, dtype="<f4")
    vec[~field.valid] = UNKNOWN_FLOW
    with atomic_open(path, "wb") as fh:
        fh.write(FLOW_MAGIC)
        fh.write(np.array([field.width, field.height], dtype="<i4").tobytes())
        fh.write(vec.tobytes())


def read_flow(path) -> DisplacementField:
    """Read a ``.flo`` file; sentinel pixels come back as skipped with vector ``(0, 0)``."""
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise FormatError(f"truncated flow header: {len(data)} bytes")
    if data[:4] != FLOW_MAGIC:
        raise FormatError(f"bad flow magic {data[:4]!r} at byte 0")
    width, height = (int(v) for v in np.frombuffer(data, dtype="<i4", count=2, offset=4))
    if width < 1 or height < 1:
        raise FormatError(f"invalid flow dimensions {width}x{height} at byte 4")
    expected = 12 + 8 * width * height
    if len(data) != expected:
        raise FormatError(f"flow payload size mismatch: expected {expected} bytes, found {len(data)}")
    vec = np.frombuffer(data, dtype="<f4", offset=12).reshape(height, width, 2).astype(np.float64)
    unknown = np.any(np.abs(vec) >= UNKNOWN_FLOW, axis=-1) | ~np.all(np.isfinite(vec), axis=-1)
    vec[unknown] = 0.0
    status = np.where(unknown, Status.SKIPPED, Status.CONVERGED).astype(np.uint8)
    return DisplacementField(vec, status)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    """RFC-4180 CSV with a header row and CRLF line endings."""
    with atomic_open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_manifest(path, items: dict) -> None:
    """UTF-8 ``key=value`` lines in insertion order."""
    with atomic_open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in items.items():
            fh.write(f"{key}={_fmt(value)}\n")


def read_manifest(path) -> dict[str, str]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    items = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        items[key.strip()] = value.strip()
    return items
