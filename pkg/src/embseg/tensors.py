"""Core dense-array types and bit-exact DGST file I/O.

Every stage of the pipeline exchanges data through three immutable array
types: EmbeddingField (H x W x N float32), ScalarField (H x W float32) and
LabelMap (H x W contiguous non-negative integers). All three serialize to a
single binary container.

DGST container layout (all integers little-endian):

    magic   4 bytes  "DGST"
    version u32      1
    kind    u32      0 = embedding (float32), 1 = scalar (float32), 2 = labels (u32)
    H, W, N u32      N is 1 for scalar and label kinds
    payload H*W*N little-endian 4-byte elements, row-major (y, x, channel)
"""

import struct
from pathlib import Path

import numpy as np

from ._validation import as_float_array, check_range
from .errors import (
    BadMagicError,
    InvariantError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)

MAGIC = b"DGST"
VERSION = 1
KIND_EMBEDDING = 0
KIND_SCALAR = 1
KIND_LABELS = 2

_HEADER = struct.Struct("<4s5I")  # magic, version, kind, H, W, N


class EmbeddingField:
    """Per-pixel N-dimensional vector field, shape (H, W, N) float32.

    Values are finite and the array is read-only after construction, so
    instances are safe to share across parallel workers.
    """

    kind = KIND_EMBEDDING

    def __init__(self, data):
        arr = as_float_array(data, "embedding", ndim=3)
        arr.setflags(write=False)
        self.data = arr

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def depth(self):
        return self.data.shape[2]

    def vector(self, y, x):
        """The depth-N vector at pixel (y, x)."""
        return self.data[y, x]

    def __eq__(self, other):
        return isinstance(other, EmbeddingField) and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"EmbeddingField({self.height}x{self.width}x{self.depth})"


class ScalarField:
    """Single-channel float field, shape (H, W) float32, finite values.

    Used both for edge strength (values in [0,1]) and distance transforms
    (values >= 0); those range constraints are checked where the field is
    consumed, not here.
    """

    kind = KIND_SCALAR

    def __init__(self, data):
        arr = as_float_array(data, "scalar field", ndim=2)
        arr.setflags(write=False)
        self.data = arr

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    def __eq__(self, other):
        return isinstance(other, ScalarField) and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"ScalarField({self.height}x{self.width})"


class LabelMap:
    """Integer segmentation map, shape (H, W).

    Labels must form the contiguous set {0, ..., K-1} with every label
    present at least once; construction rejects anything else. Use
    relabel_contiguous() to normalize arbitrary non-negative labels first.
    """

    kind = KIND_LABELS

    def __init__(self, labels):
        arr = np.array(labels, order="C", copy=True)
        if not np.issubdtype(arr.dtype, np.integer):
            raise InvariantError(f"labels must be integers, got dtype {arr.dtype}")
        if arr.ndim != 2 or any(s < 1 for s in arr.shape):
            raise InvariantError(f"label map must be 2-dimensional and non-empty, got {arr.shape}")
        arr = arr.astype(np.int64)
        if arr.min() < 0:
            raise InvariantError("labels must be non-negative")
        present = np.unique(arr)
        k = int(arr.max()) + 1
        if present.size != k:
            missing = sorted(set(range(k)) - set(present.tolist()))
            raise InvariantError(
                f"labels must be contiguous 0..{k - 1}; missing {missing[:8]}"
            )
        arr.setflags(write=False)
        self.labels = arr

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def width(self):
        return self.labels.shape[1]

    @property
    def segment_count(self):
        return int(self.labels.max()) + 1

    def __eq__(self, other):
        return isinstance(other, LabelMap) and np.array_equal(self.labels, other.labels)

    def __repr__(self):
        return f"LabelMap({self.height}x{self.width}, K={self.segment_count})"


def relabel_contiguous(labels):
    """Map arbitrary integer labels to contiguous {0..K-1}, preserving the partition.

    Distinct input values keep their relative order (smallest value becomes 0).
    """
    arr = np.asarray(labels)
    _, inverse = np.unique(arr, return_inverse=True)
    return LabelMap(inverse.reshape(arr.shape))


def save_tensor(field, path):
    """Write a field to `path` in the DGST container format (bit-exact roundtrip)."""
    if isinstance(field, EmbeddingField):
        h, w, n = field.data.shape
        payload = field.data.astype("<f4").tobytes()
    elif isinstance(field, ScalarField):
        h, w = field.data.shape
        n = 1
        payload = field.data.astype("<f4").tobytes()
    elif isinstance(field, LabelMap):
        h, w = field.labels.shape
        n = 1
        if field.labels.max() > 0xFFFFFFFF:
            raise InvariantError("labels exceed the u32 range of the container")
        payload = field.labels.astype("<u4").tobytes()
    else:
        raise InvariantError(f"cannot serialize {type(field).__name__}")
    header = _HEADER.pack(MAGIC, VERSION, field.kind, h, w, n)
    Path(path).write_bytes(header + payload)


def load_tensor(path):
    """Read a DGST file, returning the field type declared by its header.

    Raises BadMagicError, UnsupportedVersionError, TruncatedPayloadError or
    InvariantError depending on what is wrong; label payloads are relabeled
    to contiguous {0..K-1} (partition preserved).
    """
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a DGST file (magic {raw[:4]!r})")
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: header truncated at {len(raw)} bytes")
    _, version, kind, h, w, n = _HEADER.unpack_from(raw)
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: container version {version}, expected {VERSION}")
    if kind not in (KIND_EMBEDDING, KIND_SCALAR, KIND_LABELS):
        raise InvariantError(f"{path}: unknown tensor kind {kind}")
    if min(h, w, n) < 1:
        raise InvariantError(f"{path}: degenerate dimensions H={h} W={w} N={n}")
    if kind != KIND_EMBEDDING and n != 1:
        raise InvariantError(f"{path}: kind {kind} requires N=1, header says N={n}")
    expected = h * w * n * 4
    payload = raw[_HEADER.size:]
    if len(payload) != expected:
        raise TruncatedPayloadError(
            f"{path}: payload is {len(payload)} bytes, header declares {expected}"
        )
    if kind == KIND_LABELS:
        values = np.frombuffer(payload, dtype="<u4").reshape(h, w)
        return relabel_contiguous(values)
    values = np.frombuffer(payload, dtype="<f4")
    if not np.all(np.isfinite(values)):
        raise InvariantError(f"{path}: payload contains NaN or Inf")
    if kind == KIND_SCALAR:
        return ScalarField(values.reshape(h, w))
    return EmbeddingField(values.reshape(h, w, n))


def embedding_from_colors(image):
    """Treat an H x W x 3 color image (channels in [0,1]) as a depth-3 embedding field.

    This is the RGB baseline for pair classification: vectors are the raw
    color triples, channel for channel.
    """
    arr = as_float_array(image, "color image", ndim=3)
    if arr.shape[2] != 3:
        raise InvariantError(f"color image needs exactly 3 channels, got {arr.shape[2]}")
    check_range(arr, 0.0, 1.0, "color image")
    return EmbeddingField(arr)


def resize_bilinear(emb, height, width):
    """Bilinearly resample an EmbeddingField to a new grid size.

    Sample positions follow the half-pixel convention (output pixel centers
    mapped into the source grid, clamped at the borders), so resizing to the
    same size is the identity.
    """
    src = emb.data.astype(np.float64)
    sh, sw = src.shape[:2]
    if (sh, sw) == (height, width):
        return EmbeddingField(src)

    def axis_coords(dst_len, src_len):
        pos = (np.arange(dst_len) + 0.5) * (src_len / dst_len) - 0.5
        pos = np.clip(pos, 0.0, src_len - 1.0)
        lo = np.floor(pos).astype(np.int64)
        lo = np.minimum(lo, src_len - 2) if src_len > 1 else np.zeros_like(lo)
        frac = pos - lo
        return lo, frac

    y0, fy = axis_coords(height, sh)
    x0, fx = axis_coords(width, sw)
    if sh == 1:
        rows = src[np.zeros(height, dtype=np.int64)]
    else:
        rows = src[y0] * (1 - fy)[:, None, None] + src[y0 + 1] * fy[:, None, None]
    if sw == 1:
        out = rows[:, np.zeros(width, dtype=np.int64)]
    else:
        out = rows[:, x0] * (1 - fx)[None, :, None] + rows[:, x0 + 1] * fx[None, :, None]
    return EmbeddingField(out)
