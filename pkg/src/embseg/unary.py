"""Per-seed Gaussian models and the posterior field over merged seeds.

Each seed region gets a diagonal Gaussian (mean + per-channel variance) in
embedding space. A pixel's log-likelihood for seed j combines the Mahalanobis
distance of its embedding vector and the geodesic distance to the region:

    log z_ij = -C_r * D_r(i, j) - C_g * D_g(i, j)

Posteriors are the softmax over seeds (equal priors; the likelihood's
normalizing constant cancels and is never computed).
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvariantError
from .tensors import relabel_contiguous

# Smallest positive normal float64: rows are clipped here before renormalizing
# so posterior entries stay strictly positive even when softmax underflows.
_TINY = np.finfo(np.float64).tiny


@dataclass(frozen=True)
class UnaryParams:
    c_r: float = 1.25
    c_g: float = 0.5
    variance_floor: float = 1e-4

    def __post_init__(self):
        if self.c_r < 0 or self.c_g < 0:
            raise InvariantError("C_r and C_g must be >= 0")
        if self.c_r == 0 and self.c_g == 0:
            raise InvariantError("at least one of C_r, C_g must be > 0")
        if not self.variance_floor > 0:
            raise InvariantError("variance_floor must be > 0")


@dataclass(frozen=True)
class GaussianSegmentModel:
    """Diagonal Gaussians, one per seed: means (K, N) and variances (K, N)."""

    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        variances = np.asarray(self.variances, dtype=np.float64)
        if means.shape != variances.shape or means.ndim != 2:
            raise InvariantError("means and variances must both be (K, N)")
        if not (np.all(np.isfinite(means)) and np.all(np.isfinite(variances))):
            raise InvariantError("model parameters must be finite")
        if variances.min() <= 0:
            raise InvariantError("variances must be > 0 (was the floor applied?)")
        means.setflags(write=False)
        variances.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def segment_count(self):
        return self.means.shape[0]


class UnaryField:
    """Per-pixel posterior over K seeds, shape (H, W, K).

    Rows sum to 1 within 1e-6 and every entry is strictly positive (clipped at
    the smallest normal float before renormalization).
    """

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64, copy=True)
        if arr.ndim != 3 or any(s < 1 for s in arr.shape):
            raise InvariantError("posterior field must be (H, W, K) and non-empty")
        if not np.all(np.isfinite(arr)):
            raise InvariantError("posterior entries must be finite")
        if arr.min() <= 0 or arr.max() > 1:
            raise InvariantError("posterior entries must lie in (0, 1]")
        sums = arr.sum(axis=2)
        if np.abs(sums - 1.0).max() > 1e-6:
            raise InvariantError("posterior rows must sum to 1 within 1e-6")
        arr.setflags(write=False)
        self.data = arr

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def segment_count(self):
        return self.data.shape[2]


def fit_segment_gaussians(emb, seeds, floor=1e-4):
    """Mean and per-channel population variance of each seed's member vectors.

    Variances are floored so singleton or constant seeds stay well-posed.
    """
    if not floor > 0:
        raise InvariantError("variance floor must be > 0")
    data = emb.data.reshape(-1, emb.depth).astype(np.float64)
    means, variances = [], []
    for region in seeds.regions:
        vecs = data[region]
        means.append(vecs.mean(axis=0))
        variances.append(np.maximum(vecs.var(axis=0), floor))
    return GaussianSegmentModel(np.array(means), np.array(variances))


def mahalanobis_sq(r_i, model, j):
    """Squared Mahalanobis distance of a vector to seed j's diagonal Gaussian."""
    r = np.asarray(r_i, dtype=np.float64).reshape(-1)
    if r.size != model.means.shape[1]:
        raise InvariantError(f"vector depth {r.size} vs model depth {model.means.shape[1]}")
    diff = r - model.means[j]
    return float(np.sum(diff * diff / model.variances[j]))


def _row_softmax(log_z):
    """Softmax over the trailing axis, max-subtracted, entries clipped positive.

    Rows whose entries are all -inf come out uniform (the documented fallback
    for pixels unreachable from every seed when only D_g contributes).
    """
    peak = log_z.max(axis=-1, keepdims=True)
    dead = ~np.isfinite(peak[..., 0])
    peak = np.where(np.isfinite(peak), peak, 0.0)
    z = np.exp(log_z - peak)
    z[dead] = 1.0
    z = np.maximum(z, _TINY)
    return z / z.sum(axis=-1, keepdims=True)


def posterior_field(emb, model, geo_fields, params):
    """Posterior over seeds per pixel: softmax_j of -C_r*D_r(i,j) - C_g*D_g(i,j).

    geo_fields supplies one GeodesicField per seed and may be None only when
    C_g is 0 (the geodesic term then never contributes).
    """
    k = model.segment_count
    data = emb.data.astype(np.float64)
    h, w = data.shape[:2]
    log_z = np.zeros((h, w, k))
    if params.c_r > 0:
        for j in range(k):
            diff = data - model.means[j]
            log_z[:, :, j] -= params.c_r * np.sum(diff * diff / model.variances[j], axis=2)
    if params.c_g > 0:
        if geo_fields is None or len(geo_fields) != k:
            raise InvariantError("need one geodesic field per seed when C_g > 0")
        for j in range(k):
            dist = geo_fields[j].distances
            if dist.shape != (h, w):
                raise InvariantError("geodesic field grid does not match the embedding")
            log_z[:, :, j] -= params.c_g * dist
    return UnaryField(_row_softmax(log_z))


def unary_argmax(z):
    """Per-pixel argmax segmentation (ties to the lowest seed index), relabeled contiguous."""
    return relabel_contiguous(np.argmax(z.data, axis=2))
