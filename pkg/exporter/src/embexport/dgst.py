"""Reading and writing the segmentation engine's tensor container.

The container is a 24-byte little-endian header (magic ``DGST``, version,
kind, height, width, channel count) followed by the row-major payload.
Kind 0 carries float32 embedding fields shaped (H, W, N); kind 2 carries
uint32 label maps with a single channel. This module implements only what
the exporter needs: writing embeddings and reading label maps.
"""

import struct

import numpy as np

from .errors import ExportError

_MAGIC = b"DGST"
_VERSION = 1
_HEADER = struct.Struct("<4s5I")
_KIND_EMBEDDING = 0
_KIND_LABELS = 2


def write_embedding(path, field):
    """Write a float32 (H, W, N) array as a kind-0 tensor file."""
    arr = np.ascontiguousarray(field, dtype=np.float32)
    if arr.ndim != 3:
        raise ExportError(f"embedding field must be 3-dimensional, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ExportError("embedding field contains non-finite values")
    h, w, n = arr.shape
    header = _HEADER.pack(_MAGIC, _VERSION, _KIND_EMBEDDING, h, w, n)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes())


def read_labels(path):
    """Read a kind-2 tensor file and return its uint32 (H, W) label map."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ExportError(f"{path}: truncated header")
    magic, version, kind, h, w, n = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ExportError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise ExportError(f"{path}: unsupported version {version}")
    if kind != _KIND_LABELS:
        raise ExportError(f"{path}: expected a label tensor, got kind {kind}")
    if n != 1:
        raise ExportError(f"{path}: label tensor must have one channel, got {n}")
    expected = _HEADER.size + h * w * 4
    if len(raw) != expected:
        raise ExportError(f"{path}: payload size {len(raw) - _HEADER.size} does not match header")
    return np.frombuffer(raw, dtype="<u4", offset=_HEADER.size).reshape(h, w).copy()
