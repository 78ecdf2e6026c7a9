"""Binary PGM (P5, maxval 255) reader/writer.

The byte layout is fixed and endianness-free: one byte per pixel, row-major.
Intensities in [0, 1] quantize as round(p * 255).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def float_to_u8(pixels: np.ndarray) -> np.ndarray:
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)


def u8_to_float(pixels: np.ndarray) -> np.ndarray:
    return pixels.astype(np.float32) / np.float32(255.0)


def write_pgm(path: str | Path, pixels: np.ndarray) -> None:
    """Write a 2D array (uint8, or floats in [0,1]) as binary PGM."""
    if pixels.ndim != 2:
        raise ValueError("PGM writer expects a 2D array")
    if pixels.dtype != np.uint8:
        pixels = float_to_u8(pixels)
    h, w = pixels.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(pixels.tobytes())


def pgm_bytes(pixels: np.ndarray) -> bytes:
    if pixels.dtype != np.uint8:
        pixels = float_to_u8(pixels)
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary PGM into a uint8 array; rejects non-P5 and maxval != 255."""
    data = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        if pos >= len(data):
            raise ValueError(f"truncated PGM header: {path}")
        ch = data[pos : pos + 1]
        if ch == b"#":  # comment until end of line
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
            continue
        if ch.isspace():
            pos += 1
            continue
        end = pos
        while end < len(data) and not data[end : end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
        if len(fields) < 4:
            continue
        pos += 1  # single whitespace after maxval precedes raster
    magic, w_s, h_s, maxval_s = fields
    if magic != b"P5":
        raise ValueError(f"not a binary PGM (P5): {path}")
    w, h, maxval = int(w_s), int(h_s), int(maxval_s)
    if maxval != 255:
        raise ValueError(f"unsupported PGM maxval {maxval}: {path}")
    raster = data[pos : pos + w * h]
    if len(raster) != w * h:
        raise ValueError(f"truncated PGM raster: {path}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()
