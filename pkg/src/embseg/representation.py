"""Representation-quality toolkit: siamese/triplet losses, same-segment
pixel-pair classification, and PCA virtual colors."""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import InvariantError
from .tensors import EmbeddingField

_PAIR_CSV_HEADER = ["i_y", "i_x", "j_y", "j_x", "label"]


@dataclass(frozen=True)
class LossParams:
    """Margin and distance metric for the contrastive losses.

    distance defaults to Euclidean; pass any callable(vec, vec) -> real to
    ablate the metric.
    """

    margin: float = 1.0
    distance: object = None

    def __post_init__(self):
        if self.margin < 0:
            raise InvariantError(f"margin must be >= 0, got {self.margin}")

    def dist(self, a, b):
        if self.distance is not None:
            return float(self.distance(a, b))
        return float(np.linalg.norm(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)))


def _check_depths(*vectors):
    depths = {np.asarray(v).shape[-1] for v in vectors}
    if len(depths) != 1:
        raise InvariantError(f"vector depths differ: {sorted(depths)}")


def siamese_loss(r_i, r_j, y_ij, params):
    """Contrastive pair loss: d^2 for same-segment pairs, hinge max(0, m - d) otherwise.

    The positive term is squared and the hinge is not; the asymmetry is
    deliberate and load-bearing for the unit tests.
    """
    _check_depths(r_i, r_j)
    d = params.dist(r_i, r_j)
    if y_ij:
        return d * d
    return max(0.0, params.margin - d)


def triplet_loss(r_a, r_p, r_n, params):
    """Anchor/positive/negative loss: d(a,p)^2 + max(0, m - d(a,n))."""
    _check_depths(r_a, r_p, r_n)
    d_ap = params.dist(r_a, r_p)
    d_an = params.dist(r_a, r_n)
    return d_ap * d_ap + max(0.0, params.margin - d_an)


def siamese_loss_batch(emb, dataset, params):
    """Sum of siamese_loss over every pair in the dataset."""
    vecs = emb.data
    total = 0.0
    for (iy, ix, jy, jx), y in zip(dataset.pairs, dataset.labels):
        total += siamese_loss(vecs[iy, ix], vecs[jy, jx], y, params)
    return total


@dataclass(frozen=True)
class PairDataset:
    """Sampled pixel pairs with same-segment labels.

    pairs is an (n, 4) array of (i_y, i_x, j_y, j_x); labels is (n,) with 1
    for same-segment pairs. height/width pin the grid the indices refer to.
    """

    pairs: np.ndarray
    labels: np.ndarray
    height: int
    width: int

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 4)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if pairs.shape[0] != labels.shape[0]:
            raise InvariantError("pairs and labels disagree in length")
        if pairs.size:
            if pairs.min() < 0 or pairs[:, (0, 2)].max() >= self.height or pairs[:, (1, 3)].max() >= self.width:
                raise InvariantError("pair coordinates out of range")
            same_pixel = (pairs[:, 0] == pairs[:, 2]) & (pairs[:, 1] == pairs[:, 3])
            if same_pixel.any():
                raise InvariantError("pairs must join two distinct pixels")
        if labels.size and not np.isin(labels, (0, 1)).all():
            raise InvariantError("labels must be 0 or 1")
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.pairs.shape[0]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_PAIR_CSV_HEADER)
            for row, y in zip(self.pairs, self.labels):
                writer.writerow([*map(int, row), int(y)])

    @classmethod
    def from_csv(cls, path, height, width):
        rows = list(csv.reader(Path(path).open()))
        if not rows or rows[0] != _PAIR_CSV_HEADER:
            raise InvariantError(f"{path}: expected header {','.join(_PAIR_CSV_HEADER)}")
        data = np.array([[int(v) for v in row] for row in rows[1:]], dtype=np.int64).reshape(-1, 5)
        return cls(data[:, :4], data[:, 4], height, width)


def sample_pairs(labels, count, rng_seed):
    """Class-balanced pixel pairs: ceil(count/2) same-segment, floor(count/2) different.

    Pairs are uniform over the qualifying set (rejection sampling) and
    deterministic per seed.
    """
    if count < 0:
        raise InvariantError("count must be >= 0")
    n_same = (count + 1) // 2
    n_diff = count // 2
    arr = labels.labels
    h, w = arr.shape
    if n_diff > 0 and labels.segment_count < 2:
        raise InvariantError("different-segment pairs requested but the map has a single segment")
    if n_same > 0 and not (np.bincount(arr.ravel()) >= 2).any():
        raise InvariantError("same-segment pairs requested but every segment is a single pixel")
    rng = np.random.default_rng(rng_seed)
    flat = arr.ravel()
    got_same, got_diff = [], []
    while len(got_same) < n_same or len(got_diff) < n_diff:
        cand = rng.integers(0, h * w, size=(max(4 * count, 64), 2))
        cand = cand[cand[:, 0] != cand[:, 1]]
        same = flat[cand[:, 0]] == flat[cand[:, 1]]
        for row, s in zip(cand, same):
            if s and len(got_same) < n_same:
                got_same.append(row)
            elif not s and len(got_diff) < n_diff:
                got_diff.append(row)
    chosen = np.array(got_same + got_diff, dtype=np.int64).reshape(-1, 2)
    pairs = np.stack([chosen[:, 0] // w, chosen[:, 0] % w, chosen[:, 1] // w, chosen[:, 1] % w], axis=1)
    y = np.array([1] * n_same + [0] * n_diff, dtype=np.int64)
    return PairDataset(pairs, y, h, w)


def pair_distances(emb, dataset):
    """Euclidean embedding distance per pair, as float64."""
    if (dataset.height, dataset.width) != (emb.height, emb.width):
        raise InvariantError("pair dataset was sampled on a different grid")
    data = emb.data.astype(np.float64)
    a = data[dataset.pairs[:, 0], dataset.pairs[:, 1]]
    b = data[dataset.pairs[:, 2], dataset.pairs[:, 3]]
    return np.linalg.norm(a - b, axis=1)


@dataclass(frozen=True)
class PairThreshold:
    threshold: float
    validation_accuracy: float

    def __post_init__(self):
        if not np.isfinite(self.threshold):
            raise InvariantError("threshold must be finite")
        if not 0.0 <= self.validation_accuracy <= 1.0:
            raise InvariantError("validation_accuracy must be in [0, 1]")


class PairThresholdClassifier(BaseEstimator, ClassifierMixin):
    """Single-threshold classifier over pair distances: same iff d < threshold_.

    fit() scans the midpoints of consecutive sorted distances plus the two
    degenerate candidates (classify-everything-different at 0, since distances
    are non-negative and comparison is strict, and classify-everything-same at
    max+1), maximizing accuracy; ties go to the smaller threshold.
    """

    def fit(self, X, y):
        d = np.asarray(X, dtype=np.float64).reshape(-1)
        y = np.asarray(y, dtype=np.int64).reshape(-1)
        if d.size == 0:
            raise InvariantError("empty validation set")
        if np.unique(y).size < 2:
            raise InvariantError("validation set needs both classes")
        order = np.argsort(d, kind="stable")
        d, y = d[order], y[order]
        n = d.size
        cum_same = np.concatenate([[0], np.cumsum(y)])
        n_same = cum_same[-1]
        best_acc, best_t = -1.0, 0.0
        for i in range(n + 1):
            if i == 0:
                t = 0.0
            elif i == n:
                t = float(d[-1]) + 1.0
            else:
                if d[i - 1] == d[i]:
                    continue  # no threshold realizes this split
                t = 0.5 * (float(d[i - 1]) + float(d[i]))
            # first i pairs classified same, rest different
            acc = (cum_same[i] + ((n - n_same) - (i - cum_same[i]))) / n
            if acc > best_acc:
                best_acc, best_t = acc, t
        self.threshold_ = best_t
        self.validation_accuracy_ = float(best_acc)
        return self

    def predict(self, X):
        d = np.asarray(X, dtype=np.float64).reshape(-1)
        return (d < self.threshold_).astype(np.int64)

    def score(self, X, y):
        return float(np.mean(self.predict(X) == np.asarray(y).reshape(-1)))


def learn_threshold(emb, validation):
    """Pick the distance threshold maximizing accuracy on a validation PairDataset."""
    clf = PairThresholdClassifier().fit(pair_distances(emb, validation), validation.labels)
    return PairThreshold(clf.threshold_, clf.validation_accuracy_)


def pair_accuracy(emb, test, threshold):
    """Fraction of pairs classified correctly by d < threshold."""
    if len(test) == 0:
        raise InvariantError("empty test set")
    t = threshold.threshold if isinstance(threshold, PairThreshold) else float(threshold)
    d = pair_distances(emb, test)
    return float(np.mean((d < t).astype(np.int64) == test.labels))


def pca_projection(emb):
    """Top-3 principal axes of the pixel representations.

    Returns (components, variances): components has one orthonormal row per
    usable axis (possibly fewer than 3 when the covariance is rank-deficient),
    variances the matching eigenvalues in descending order.
    """
    data = emb.data.reshape(-1, emb.depth).astype(np.float64)
    centered = data - data.mean(axis=0)
    cov = centered.T @ centered / data.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals, kind="stable")[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    tol = max(eigvals[0], 0.0) * 1e-12 + 1e-30
    rank = int(np.sum(eigvals > tol))
    take = min(3, rank)
    return eigvecs[:, :take].T, eigvals[:take]


def pca_virtual_colors(emb):
    """Render embeddings as colors: project onto the top-3 principal axes and
    min-max normalize each channel to [0, 1]. Channels beyond the covariance
    rank are filled with 0.5, so a constant field comes out mid-gray."""
    if emb.height * emb.width < 2:
        raise InvariantError("virtual colors need at least 2 pixels")
    components, _ = pca_projection(emb)
    data = emb.data.reshape(-1, emb.depth).astype(np.float64)
    projected = (data - data.mean(axis=0)) @ components.T
    out = np.full((projected.shape[0], 3), 0.5)
    for c in range(projected.shape[1]):
        chan = projected[:, c]
        span = chan.max() - chan.min()
        if span > 0:
            out[:, c] = (chan - chan.min()) / span
    return out.reshape(emb.height, emb.width, 3)
