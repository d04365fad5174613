"""Deterministic synthetic scenes: ground-truth partitions, embedding fields,
edge-strength maps, and an exact Euclidean distance transform.

These generators are the desk-scale stand-ins for hand-annotated data. All of
them are pure functions of their config: identical seeds give identical
outputs, byte for byte.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ._validation import check_non_negative, check_range
from .errors import InvariantError
from .tensors import EmbeddingField, LabelMap, ScalarField

_SITE_RETRIES = 32
_DIRECTION_RETRIES = 100


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for one synthetic scene.

    separation is the pairwise distance between segment centers in embedding
    space; noise_sigma the per-channel Gaussian noise around them.
    """

    rng_seed: int = 0
    height: int = 64
    width: int = 64
    segment_count: int = 5
    depth: int = 8
    separation: float = 8.0
    noise_sigma: float = 1.0

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise InvariantError("grid must be at least 1x1")
        if not 1 <= self.segment_count <= self.height * self.width:
            raise InvariantError("segment_count must be in [1, height*width]")
        if self.depth < 1:
            raise InvariantError("embedding depth must be >= 1")
        check_non_negative(self.separation, "separation")
        check_non_negative(self.noise_sigma, "noise_sigma")


def voronoi_labels_from_sites(height, width, sites):
    """Partition the grid by nearest site (Euclidean; ties go to the lower site index)."""
    sites = np.asarray(sites, dtype=np.int64)
    ys, xs = np.mgrid[0:height, 0:width]
    d2 = (ys[None] - sites[:, 0, None, None]) ** 2 + (xs[None] - sites[:, 1, None, None]) ** 2
    return LabelMap(np.argmin(d2, axis=0))


def generate_segmentation(cfg):
    """Voronoi partition induced by K sites drawn uniformly from the seeded generator."""
    rng = np.random.default_rng(cfg.rng_seed)
    k = cfg.segment_count
    for _ in range(_SITE_RETRIES):
        flat = rng.integers(0, cfg.height * cfg.width, size=k)
        if np.unique(flat).size == k:
            sites = np.stack([flat // cfg.width, flat % cfg.width], axis=1)
            return voronoi_labels_from_sites(cfg.height, cfg.width, sites)
    raise InvariantError(f"could not draw {k} distinct sites in {_SITE_RETRIES} attempts")


def generate_oversegmentation(cfg, fine_count):
    """Fine Voronoi partition of `fine_count` cells grouped into cfg.segment_count segments.

    Returns (labels, fine_labels). Each fine cell's group is the segment site
    nearest its own site, so cells nest inside segments exactly; resampling
    guarantees every segment owns at least one cell. Edge strength derived from
    fine_labels over-segments the ground truth in labels, which is what the
    seed-merging stage trains on.
    """
    k = cfg.segment_count
    if fine_count < k:
        raise InvariantError(f"fine_count {fine_count} must be >= segment_count {k}")
    if fine_count > cfg.height * cfg.width:
        raise InvariantError("fine_count exceeds the pixel count")
    rng = np.random.default_rng(cfg.rng_seed)
    group_sites = None
    for _ in range(_SITE_RETRIES):
        flat = rng.integers(0, cfg.height * cfg.width, size=k)
        if np.unique(flat).size == k:
            group_sites = np.stack([flat // cfg.width, flat % cfg.width], axis=1)
            break
    if group_sites is None:
        raise InvariantError(f"could not draw {k} distinct sites in {_SITE_RETRIES} attempts")
    for _ in range(_SITE_RETRIES):
        flat = rng.integers(0, cfg.height * cfg.width, size=fine_count)
        if np.unique(flat).size != fine_count:
            continue
        fine_sites = np.stack([flat // cfg.width, flat % cfg.width], axis=1)
        d2 = ((fine_sites[:, None, :] - group_sites[None, :, :]) ** 2).sum(axis=2)
        group_of_cell = np.argmin(d2, axis=1)
        if np.unique(group_of_cell).size != k:
            continue  # some segment got no cell; redraw
        fine = voronoi_labels_from_sites(cfg.height, cfg.width, fine_sites)
        labels = LabelMap(group_of_cell[fine.labels])
        return labels, fine
    raise InvariantError(
        f"could not cover all {k} segments with {fine_count} cells in {_SITE_RETRIES} attempts"
    )


def _segment_centers(k, depth, separation, rng):
    # Orthogonal placement: scaling each basis vector by separation/sqrt(2)
    # makes every pairwise center distance exactly `separation`.
    if k <= depth:
        centers = np.zeros((k, depth))
        centers[np.arange(k), np.arange(k)] = separation / np.sqrt(2.0)
        return centers
    for _ in range(_DIRECTION_RETRIES):
        dirs = rng.normal(size=(k, depth))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        centers = separation * dirs
        d = np.linalg.norm(centers[:, None] - centers[None, :], axis=2)
        if separation == 0 or d[~np.eye(k, dtype=bool)].min() >= separation:
            return centers
    raise InvariantError(
        f"cannot place {k} centers at pairwise distance >= {separation} in {depth} dimensions"
    )


def generate_embeddings(labels, cfg):
    """Embedding field whose vectors cluster by segment: center + Gaussian noise.

    Segment centers sit at pairwise distance >= separation (exactly equal to it
    for the orthogonal placement used when K <= N).
    """
    rng = np.random.default_rng(cfg.rng_seed)
    centers = _segment_centers(labels.segment_count, cfg.depth, cfg.separation, rng)
    field = centers[labels.labels]
    field = field + rng.normal(0.0, cfg.noise_sigma, size=field.shape)
    return EmbeddingField(field)


def segment_centers(cfg, segment_count=None):
    """The centers generate_embeddings would use, for test oracles and analysis."""
    rng = np.random.default_rng(cfg.rng_seed)
    k = cfg.segment_count if segment_count is None else segment_count
    return _segment_centers(k, cfg.depth, cfg.separation, rng)


def _boundary_pixels(labels):
    arr = labels.labels
    bnd = np.zeros(arr.shape, dtype=bool)
    bnd[:-1, :] |= arr[:-1, :] != arr[1:, :]
    bnd[1:, :] |= arr[1:, :] != arr[:-1, :]
    bnd[:, :-1] |= arr[:, :-1] != arr[:, 1:]
    bnd[:, 1:] |= arr[:, 1:] != arr[:, :-1]
    return bnd


def edge_strength_from_labels(labels, halo=0.0):
    """Edge strength 1.0 wherever a pixel has a 4-neighbor of a different label,
    decaying linearly to 0 over `halo` pixels of Euclidean distance."""
    check_non_negative(halo, "halo")
    bnd = _boundary_pixels(labels)
    if not bnd.any():
        return ScalarField(np.zeros(bnd.shape, dtype=np.float32))
    if halo == 0:
        return ScalarField(bnd.astype(np.float32))
    dist = ndimage.distance_transform_edt(~bnd)
    return ScalarField(np.maximum(0.0, 1.0 - dist / halo))


def exact_distance_transform(edge_strength, tau=0.5):
    """Exact Euclidean distance to the nearest boundary pixel (strength > tau).

    Boundary pixels map to 0. Raises if thresholding leaves no boundary at all,
    since the distance is undefined then.
    """
    values = edge_strength.data if isinstance(edge_strength, ScalarField) else np.asarray(edge_strength)
    mask = values > tau
    if not mask.any():
        raise InvariantError(f"no boundary pixels above tau={tau}; distance transform undefined")
    return ScalarField(ndimage.distance_transform_edt(~mask))


def generate_color_image(labels, rng_seed, noise_sigma=0.1):
    """Render a label map with a random color palette plus per-pixel noise.

    Feeds the RGB pair-classification baseline: unlike the embedding field,
    nothing keeps two segments' palette entries apart, so colors can collide.
    Output is clipped to [0, 1].
    """
    check_non_negative(noise_sigma, "noise_sigma")
    rng = np.random.default_rng(rng_seed)
    palette = rng.uniform(0.0, 1.0, size=(labels.segment_count, 3))
    img = palette[labels.labels] + rng.normal(0.0, noise_sigma, size=(labels.height, labels.width, 3))
    img = np.clip(img, 0.0, 1.0)
    check_range(img, 0.0, 1.0, "color image")
    return img
