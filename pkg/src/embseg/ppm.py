"""Minimal portable-pixmap read/write for demo inputs and visualization output.

Handles binary P6 (color) and P5 (gray) with maxval <= 255. This is
deliberately not a general image codec; anything fancier should be converted
to PPM before being fed to the CLI.
"""

from pathlib import Path

import numpy as np

from .errors import FormatError


def write_ppm(path, rgb):
    """Write an H x W x 3 array of values in [0,1] as a binary P6 file."""
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise FormatError(f"expected H x W x 3 image, got shape {arr.shape}")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise FormatError("pixel values must lie in [0, 1]")
    data = np.rint(arr * 255.0).astype(np.uint8)
    header = f"P6\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + data.tobytes())


def _read_header_tokens(raw, count):
    # PPM headers are whitespace-separated tokens with '#' comments to EOL.
    tokens = []
    pos = 0
    while len(tokens) < count:
        if pos >= len(raw):
            raise FormatError("truncated pixmap header")
        ch = raw[pos:pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            while pos < len(raw) and raw[pos:pos + 1] != b"\n":
                pos += 1
        else:
            start = pos
            while pos < len(raw) and not raw[pos:pos + 1].isspace():
                pos += 1
            tokens.append(raw[start:pos])
    return tokens, pos + 1  # skip the single whitespace after the last token


def read_ppm(path):
    """Read a binary P6/P5 file into an H x W x 3 float array in [0,1].

    Grayscale input is expanded to three identical channels.
    """
    raw = Path(path).read_bytes()
    if raw[:2] not in (b"P5", b"P6"):
        raise FormatError(f"{path}: unsupported pixmap type {raw[:2]!r}")
    (magic, w, h, maxval), offset = _read_header_tokens(raw, 4)
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval < 1 or maxval > 255:
        raise FormatError(f"{path}: maxval {maxval} out of supported range")
    channels = 3 if magic == b"P6" else 1
    expected = w * h * channels
    payload = raw[offset:offset + expected]
    if len(payload) != expected:
        raise FormatError(f"{path}: pixel payload is {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, channels) / maxval
    if channels == 1:
        data = np.repeat(data, 3, axis=2)
    return data
