"""Geodesic distances on the 8-connected pixel graph weighted by edge strength.

Traversing between neighbors p and q costs step_len * (g(p) + g(q)) / 2 with
step_len 1 on the axes and sqrt(2) on diagonals. There is no additive spatial
term: with g identically zero every distance is zero, so these distances are a
pure boundary-crossing penalty (spatial proximity enters the pipeline through
the CRF kernels instead).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

from ._parallel import worker_count
from ._validation import check_range
from .errors import InvariantError
from .tensors import ScalarField

_SQRT2 = float(np.sqrt(2.0))


@dataclass(frozen=True)
class GeodesicField:
    """Distances from one source region to every pixel.

    distances is (H, W) float64; +inf marks pixels unreachable from the source
    (impossible on a full grid, possible under masks). source is a caller tag.
    """

    distances: np.ndarray
    source: object = None

    def __post_init__(self):
        arr = np.asarray(self.distances, dtype=np.float64)
        if arr.ndim != 2:
            raise InvariantError("geodesic distances must be a 2-d field")
        if np.isnan(arr).any() or (arr[np.isfinite(arr)] < 0).any():
            raise InvariantError("geodesic distances must be >= 0 (inf allowed)")
        arr.setflags(write=False)
        object.__setattr__(self, "distances", arr)

    def to_scalar_field(self):
        """Serialize with +inf mapped to the largest finite real32."""
        capped = np.where(np.isfinite(self.distances), self.distances, np.finfo(np.float32).max)
        return ScalarField(np.minimum(capped, np.finfo(np.float32).max))


def _strength_values(edge_strength):
    values = edge_strength.data if isinstance(edge_strength, ScalarField) else np.asarray(edge_strength)
    values = values.astype(np.float64)
    check_range(values, 0.0, 1.0, "edge strength")
    return values


def _grid_graph(values):
    h, w = values.shape
    g = values.ravel()
    rows, cols, costs = [], [], []
    # (dy, dx, step length); reverse arcs added explicitly so the CSR graph
    # can be traversed as directed with symmetric weights.
    for dy, dx, step in ((0, 1, 1.0), (1, 0, 1.0), (1, 1, _SQRT2), (1, -1, _SQRT2)):
        ys, xs = np.mgrid[0:h, 0:w]
        ok = (ys + dy < h) & (xs + dx >= 0) & (xs + dx < w)
        p = (ys[ok] * w + xs[ok]).ravel()
        q = p + dy * w + dx
        cost = step * 0.5 * (g[p] + g[q])
        rows.extend((p, q))
        cols.extend((q, p))
        costs.extend((cost, cost))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    costs = np.concatenate(costs)
    return sparse.csr_matrix((costs, (rows, cols)), shape=(h * w, h * w))


def _as_flat_sources(source, h, w):
    src = np.asarray(source)
    if src.ndim == 2 and src.shape[1] == 2:
        src = src[:, 0] * w + src[:, 1]
    src = src.astype(np.int64).ravel()
    if src.size == 0:
        raise InvariantError("source region must be non-empty")
    if src.min() < 0 or src.max() >= h * w:
        raise InvariantError("source pixel out of range")
    return src


def geodesic_field(edge_strength, source, tag=None):
    """Multi-source exact Dijkstra distances from `source` to every pixel.

    source is an array of flat pixel indices, or an (n, 2) array of (y, x)
    coordinates.
    """
    values = _strength_values(edge_strength)
    h, w = values.shape
    src = _as_flat_sources(source, h, w)
    graph = _grid_graph(values)
    dist = dijkstra(graph, directed=True, indices=src, min_only=True)
    return GeodesicField(dist.reshape(h, w), source=tag)


def geodesic_fields_for_seeds(edge_strength, seed_set):
    """One GeodesicField per seed region, computed on a shared read-only graph.

    Parallel across regions; DGS_THREADS caps the pool size.
    """
    values = _strength_values(edge_strength)
    h, w = values.shape
    graph = _grid_graph(values)

    def one(item):
        index, region = item
        src = _as_flat_sources(region, h, w)
        dist = dijkstra(graph, directed=True, indices=src, min_only=True)
        return GeodesicField(dist.reshape(h, w), source=index)

    items = list(enumerate(seed_set.regions))
    workers = worker_count(len(items))
    if workers == 1 or len(items) == 1:
        return [one(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, items))


def region_geodesic(edge_strength, a, b):
    """Shortest geodesic distance between two pixel sets.

    Symmetric by construction: the pair is canonicalized by each set's minimum
    flat index before running Dijkstra, so (a, b) and (b, a) take the exact
    same float path.
    """
    values = _strength_values(edge_strength)
    h, w = values.shape
    a = _as_flat_sources(a, h, w)
    b = _as_flat_sources(b, h, w)
    if a.min() > b.min():
        a, b = b, a
    dist = geodesic_field(values, a).distances.ravel()
    return float(dist[b].min())
