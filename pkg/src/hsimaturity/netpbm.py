"""Minimal binary Netpbm (PGM ``P5`` / PPM ``P6``) reading and writing."""

from pathlib import Path

import numpy as np


def _payload_dtype(maxval):
    if not 0 < maxval < 65536:
        raise ValueError(f"maxval must be in 1..65535, got {maxval}")
    return np.dtype(">u2") if maxval > 255 else np.dtype("u1")


def _write(path, magic, data, maxval):
    height, width = data.shape[:2]
    if data.min(initial=0) < 0 or data.max(initial=0) > maxval:
        raise ValueError(f"pixel values outside 0..{maxval}")
    header = f"{magic}\n{width} {height}\n{maxval}\n".encode("ascii")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(data, dtype=_payload_dtype(maxval)).tobytes())


def write_pgm(path, image, maxval=None):
    """Write an integer ``(height, width)`` array as a binary graymap.

    ``maxval`` defaults to 255, or 65535 when values exceed 255.
    """
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("graymap must be 2-D")
    if maxval is None:
        maxval = 255 if image.max(initial=0) <= 255 else 65535
    _write(path, "P5", image.astype(np.int64), maxval)


def write_ppm(path, rgb, maxval=255):
    """Write ``(height, width, 3)`` data; floats in [0, 1] are scaled to ``maxval``."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("pixmap must be (height, width, 3)")
    if rgb.dtype.kind == "f":
        rgb = np.rint(np.clip(rgb, 0.0, 1.0) * maxval)
    _write(path, "P6", rgb.astype(np.int64), maxval)


def _read_tokens(buf, count):
    tokens, pos = [], 0
    while len(tokens) < count:
        while buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while buf[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        tokens.append(buf[start:pos])
    return tokens, pos + 1  # one whitespace byte separates header and raster


def read_netpbm(path):
    """Return the integer raster of a ``P5``/``P6`` file and its maxval."""
    buf = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _read_tokens(buf, 4)
    width, height, maxval = int(w), int(h), int(maxval)
    channels = {b"P5": 1, b"P6": 3}.get(magic)
    if channels is None:
        raise ValueError(f"unsupported Netpbm magic {magic!r}")
    dtype = _payload_dtype(maxval)
    data = np.frombuffer(buf, dtype=dtype, count=width * height * channels, offset=pos)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return data.reshape(shape).astype(np.int64), maxval
