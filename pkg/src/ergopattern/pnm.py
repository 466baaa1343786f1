"""Minimal Netpbm codec: graymaps in (P2, P5), graymaps and pixmaps out (P5, P6)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ImageFormatError

_WS = b" \t\r\n\v\f"


def _tokens(data: bytes, count: int, pos: int):
    """Read ``count`` header tokens starting at ``pos``, skipping comments."""
    out = []
    n = len(data)
    while len(out) < count:
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
            raise ImageFormatError("truncated header")
        out.append(data[start:pos])
    return out, pos


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read an 8- or 16-bit graymap; returns (pixels as int array, maxval)."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc}") from exc
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise ImageFormatError(f"{path}: not a graymap (magic {magic!r})")
    try:
        (w, h, maxval), pos = _tokens(data, 3, 2)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise ImageFormatError(f"{path}: bad header") from exc
    if w <= 0 or h <= 0 or not 0 < maxval < 65536:
        raise ImageFormatError(f"{path}: bad dimensions or maxval ({w}x{h}, {maxval})")
    if magic == b"P5":
        pos += 1  # single whitespace byte ends the header
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        nbytes = w * h * dtype.itemsize
        raster = data[pos:pos + nbytes]
        if len(raster) != nbytes:
            raise ImageFormatError(f"{path}: expected {nbytes} raster bytes, found {len(raster)}")
        pixels = np.frombuffer(raster, dtype=dtype).astype(np.int64).reshape(h, w)
    else:
        try:
            vals, _ = _tokens(data, w * h, pos)
            pixels = np.array([int(v) for v in vals], dtype=np.int64).reshape(h, w)
        except (ValueError, ImageFormatError) as exc:
            raise ImageFormatError(f"{path}: bad ASCII raster") from exc
    if pixels.max(initial=0) > maxval:
        raise ImageFormatError(f"{path}: pixel exceeds maxval {maxval}")
    return pixels, maxval


def write_pgm(path, pixels, maxval: int = 255, binary: bool = True) -> Path:
    pixels = np.asarray(pixels)
    if pixels.ndim != 2 or 0 in pixels.shape:
        raise ImageFormatError(f"cannot write an image of shape {pixels.shape}")
    h, w = pixels.shape
    pixels = np.clip(np.rint(pixels), 0, maxval).astype(np.int64)
    path = Path(path)
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        path.write_bytes(b"P5\n%d %d\n%d\n" % (w, h, maxval) + pixels.astype(dtype).tobytes())
    else:
        lines = [f"P2\n{w} {h}\n{maxval}"] + [" ".join(str(v) for v in row) for row in pixels]
        path.write_text("\n".join(lines) + "\n")
    return path


def write_ppm(path, rgb) -> Path:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or 0 in rgb.shape[:2]:
        raise ImageFormatError(f"cannot write a pixmap of shape {rgb.shape}")
    h, w, _ = rgb.shape
    path = Path(path)
    path.write_bytes(b"P6\n%d %d\n255\n" % (w, h) + np.clip(np.rint(rgb), 0, 255).astype("u1").tobytes())
    return path


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:2] != b"P6":
        raise ImageFormatError(f"{path}: not a binary pixmap")
    (w, h, maxval), pos = _tokens(data, 3, 2)
    w, h = int(w), int(h)
    raster = data[pos + 1:pos + 1 + 3 * w * h]
    return np.frombuffer(raster, dtype="u1").reshape(h, w, 3)
