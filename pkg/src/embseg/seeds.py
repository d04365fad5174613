"""Initial seed regions from a distance-transform field.

Stage 1a of the pipeline: threshold the DT, take 4-connected components,
erode with disks at multiple scales, and keep the non-overlapping components
starting from the coarsest scale. Eroded extents are kept as-is; unassigned
pixels are claimed later by the unary/CRF stages.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptySeedError, InvariantError
from .tensors import relabel_contiguous

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class SeedGenConfig:
    epsilon: float = 1.5
    erosion_radii: tuple = (15, 7, 0)
    min_region_area: int = 10

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvariantError("epsilon must be > 0")
        radii = tuple(self.erosion_radii)
        if not radii or any(r < 0 for r in radii):
            raise InvariantError("erosion radii must be non-negative")
        if any(a <= b for a, b in zip(radii, radii[1:])):
            raise InvariantError("erosion radii must be strictly descending")
        if self.min_region_area < 1:
            raise InvariantError("min_region_area must be >= 1")
        object.__setattr__(self, "erosion_radii", radii)


class SeedRegionSet:
    """Disjoint pixel regions over one grid, each stored as sorted flat indices.

    provenance carries one tag per region (erosion radius for generated seeds,
    member indices for merged ones). Connectivity is validated for generated
    seeds; merged unions are allowed to be spatially disconnected.
    """

    def __init__(self, shape, regions, provenance=None, check_connectivity=True):
        h, w = shape
        if h < 1 or w < 1:
            raise InvariantError("grid must be at least 1x1")
        regions = [np.array(sorted(np.asarray(r, dtype=np.int64).ravel())) for r in regions]
        total = 0
        for r in regions:
            if r.size == 0:
                raise InvariantError("every region must be non-empty")
            if r.min() < 0 or r.max() >= h * w:
                raise InvariantError("region pixel index out of range")
            if np.unique(r).size != r.size:
                raise InvariantError("region contains duplicate pixels")
            total += r.size
        if regions and np.unique(np.concatenate(regions)).size != total:
            raise InvariantError("regions must be pairwise disjoint")
        if check_connectivity:
            for idx, r in enumerate(regions):
                if not _is_four_connected(r, h, w):
                    raise InvariantError(f"region {idx} is not 4-connected")
        if provenance is None:
            provenance = [None] * len(regions)
        if len(provenance) != len(regions):
            raise InvariantError("provenance must tag every region")
        self.shape = (h, w)
        self.regions = regions
        self.provenance = list(provenance)

    def __len__(self):
        return len(self.regions)

    @property
    def height(self):
        return self.shape[0]

    @property
    def width(self):
        return self.shape[1]

    def centroids(self):
        """(V, 2) array of mean (y, x) positions, one row per region."""
        w = self.width
        return np.array([[(r // w).mean(), (r % w).mean()] for r in self.regions])

    def to_label_map(self):
        """Region index + 1 per pixel, 0 for unassigned, compacted to a LabelMap."""
        flat = np.zeros(self.height * self.width, dtype=np.int64)
        for idx, r in enumerate(self.regions):
            flat[r] = idx + 1
        return relabel_contiguous(flat.reshape(self.shape))


def _is_four_connected(flat_indices, h, w):
    members = set(flat_indices.tolist())
    start = flat_indices[0]
    seen = {start}
    stack = [start]
    while stack:
        p = stack.pop()
        y, x = divmod(p, w)
        for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
            if 0 <= ny < h and 0 <= nx < w:
                q = ny * w + nx
                if q in members and q not in seen:
                    seen.add(q)
                    stack.append(q)
    return len(seen) == len(members)


def _components(mask):
    labeled, count = ndimage.label(mask, structure=FOUR_CONNECTED)
    flat = labeled.ravel()
    order = np.argsort(flat, kind="stable")
    sorted_labels = flat[order]
    regions = []
    for comp in range(1, count + 1):
        lo = np.searchsorted(sorted_labels, comp, side="left")
        hi = np.searchsorted(sorted_labels, comp, side="right")
        regions.append(np.sort(order[lo:hi]))
    return regions


def threshold_components(dt, epsilon):
    """4-connected components of the mask {dt > epsilon}.

    An empty mask yields an empty region set; only the multi-scale generator
    treats emptiness as an error.
    """
    values = dt.data
    if values.min() < 0:
        raise InvariantError("distance transform must be non-negative")
    regions = _components(values > epsilon)
    return SeedRegionSet(values.shape, regions, provenance=[0] * len(regions))


def erode_disk(mask, radius):
    """Keep a pixel iff the full Euclidean disk of `radius` around it lies in the mask.

    The image border counts as outside. Comparison happens in the squared
    integer domain, so results are exact for any real radius; radius 0 is the
    identity.
    """
    mask = np.asarray(mask, dtype=bool)
    if radius < 0:
        raise InvariantError("radius must be >= 0")
    if radius == 0:
        return mask.copy()
    # One ring of padding suffices: the nearest outside pixel of any interior
    # pixel is the clamped projection onto the border ring.
    padded = np.pad(mask, 1, constant_values=False)
    _, (iy, ix) = ndimage.distance_transform_edt(padded, return_indices=True)
    yy, xx = np.indices(padded.shape)
    d2 = (iy - yy) ** 2 + (ix - xx) ** 2
    kept = d2 > radius * radius
    return (kept & padded)[1:-1, 1:-1]


def multiscale_seed_regions(dt, cfg):
    """Seeds from disk erosions at multiple scales, coarsest first.

    A component is accepted iff it shares no pixel with previously accepted
    components and has at least min_region_area pixels; rejected components
    do not block later scales.
    """
    values = dt.data
    if values.min() < 0:
        raise InvariantError("distance transform must be non-negative")
    mask = values > cfg.epsilon
    occupied = np.zeros(mask.size, dtype=bool)
    regions, provenance = [], []
    for radius in cfg.erosion_radii:
        for comp in _components(erode_disk(mask, radius)):
            if comp.size < cfg.min_region_area:
                continue
            if occupied[comp].any():
                continue
            occupied[comp] = True
            regions.append(comp)
            provenance.append(radius)
    if not regions:
        raise EmptySeedError(
            f"no seed regions: epsilon={cfg.epsilon}, radii={cfg.erosion_radii}, "
            f"min_area={cfg.min_region_area}"
        )
    return SeedRegionSet(values.shape, regions, provenance=provenance)
