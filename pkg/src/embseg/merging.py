"""Seed merging: kNN graph over seed regions, a two-feature logistic edge
classifier, and threshold partitioning into merged regions.

The two edge features are the distance between the regions' mean embeddings
(f1) and the geodesic distance between the regions over the edge-strength
graph (f2). Edge weight semantics: probability that the two seeds belong to
the same segment; an edge survives a threshold t iff weight >= t.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import InvariantError
from .geodesic import region_geodesic
from .seeds import SeedRegionSet

_EDGE_CSV_HEADER = ["i", "j", "f1", "f2", "weight"]


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    features: object = None  # 2-vector once extracted
    weight: float = None  # P(same) once classified

    def __post_init__(self):
        if not 0 <= self.i < self.j:
            raise InvariantError(f"edge endpoints must satisfy 0 <= i < j, got ({self.i}, {self.j})")
        if self.features is not None:
            f = np.asarray(self.features, dtype=np.float64).reshape(-1)
            if f.size != 2 or not np.all(np.isfinite(f)):
                raise InvariantError("edge features must be a finite 2-vector")
            f.setflags(write=False)
            object.__setattr__(self, "features", f)
        if self.weight is not None and not 0.0 <= self.weight <= 1.0:
            raise InvariantError(f"edge weight must be in [0, 1], got {self.weight}")


@dataclass(frozen=True)
class SeedGraph:
    seeds: SeedRegionSet
    edges: tuple

    def __post_init__(self):
        edges = tuple(self.edges)
        pairs = [(e.i, e.j) for e in edges]
        if len(set(pairs)) != len(pairs):
            raise InvariantError("duplicate edges")
        v = len(self.seeds)
        if any(e.j >= v for e in edges):
            raise InvariantError("edge endpoint out of range")
        object.__setattr__(self, "edges", edges)


def build_seed_graph(seeds, k=5):
    """kNN graph over seed centroids, symmetrized (union of directed kNN lists).

    Neighbor ties are broken by (distance, index), so the construction is
    deterministic.
    """
    v = len(seeds)
    if v < 2:
        raise InvariantError("need at least 2 seeds to build a graph")
    if k < 1:
        raise InvariantError("k must be >= 1")
    cent = seeds.centroids()
    d = np.linalg.norm(cent[:, None] - cent[None, :], axis=2)
    pairs = set()
    for i in range(v):
        order = np.lexsort((np.arange(v), d[i]))
        picked = [j for j in order if j != i][: min(k, v - 1)]
        for j in picked:
            pairs.add((min(i, j), max(i, j)))
    edges = tuple(Edge(i, j) for i, j in sorted(pairs))
    return SeedGraph(seeds, edges)


def edge_features(emb, edge_strength, seeds, edge):
    """f1 = distance between mean embeddings; f2 = geodesic distance between the regions."""
    data = emb.data.reshape(-1, emb.depth).astype(np.float64)
    ri, rj = seeds.regions[edge.i], seeds.regions[edge.j]
    f1 = float(np.linalg.norm(data[ri].mean(axis=0) - data[rj].mean(axis=0)))
    f2 = region_geodesic(edge_strength, ri, rj)
    return np.array([f1, f2])


def featurize_graph(emb, edge_strength, graph):
    """New graph with features extracted for every edge."""
    edges = tuple(
        Edge(e.i, e.j, features=edge_features(emb, edge_strength, graph.seeds, e), weight=e.weight)
        for e in graph.edges
    )
    return SeedGraph(graph.seeds, edges)


def majority_region_labels(seeds, gt):
    """Ground-truth label per seed region by majority vote (ties to the lower label)."""
    out = []
    flat = gt.labels.ravel()
    for region in seeds.regions:
        out.append(int(np.bincount(flat[region]).argmax()))
    return np.array(out, dtype=np.int64)


def edge_labels_from_ground_truth(graph, gt):
    """1 for edges whose regions carry the same majority ground-truth label."""
    region_labels = majority_region_labels(graph.seeds, gt)
    return np.array([int(region_labels[e.i] == region_labels[e.j]) for e in graph.edges], dtype=np.int64)


class SeedEdgeClassifier(BaseEstimator, ClassifierMixin):
    """Logistic regression trained by plain full-batch gradient descent.

    Features are standardized to zero mean and unit variance before training;
    descent runs until the gradient norm of the mean log-loss drops below tol
    or max_iter is reached. Deterministic given the data order.
    """

    def __init__(self, learning_rate=1.0, max_iter=5000, tol=1e-6):
        self.learning_rate = learning_rate
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if X.shape[0] != y.size:
            raise InvariantError("features and labels disagree in length")
        if np.unique(y).size < 2:
            raise InvariantError("training set needs both classes")
        self.feature_mean_ = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        self.feature_scale_ = scale
        xs = (X - self.feature_mean_) / self.feature_scale_
        n, d = xs.shape
        w = np.zeros(d)
        b = 0.0
        for _ in range(self.max_iter):
            p = expit(xs @ w + b)
            err = p - y
            grad_w = xs.T @ err / n
            grad_b = err.mean()
            if np.sqrt(np.sum(grad_w**2) + grad_b**2) < self.tol:
                break
            w -= self.learning_rate * grad_w
            b -= self.learning_rate * grad_b
        self.weights_ = w
        self.bias_ = float(b)
        return self

    def predict_proba(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        xs = (X - self.feature_mean_) / self.feature_scale_
        p1 = expit(xs @ self.weights_ + self.bias_)
        return np.stack([1.0 - p1, p1], axis=1)

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    def score(self, X, y):
        return float(np.mean(self.predict(X) == np.asarray(y).reshape(-1)))

    def to_param_dict(self):
        return {
            "weights": self.weights_.tolist(),
            "bias": self.bias_,
            "feature_mean": self.feature_mean_.tolist(),
            "feature_scale": self.feature_scale_.tolist(),
        }

    @classmethod
    def from_param_dict(cls, params):
        clf = cls()
        clf.weights_ = np.asarray(params["weights"], dtype=np.float64)
        clf.bias_ = float(params["bias"])
        clf.feature_mean_ = np.asarray(params["feature_mean"], dtype=np.float64)
        clf.feature_scale_ = np.asarray(params["feature_scale"], dtype=np.float64)
        if not (
            np.all(np.isfinite(clf.weights_))
            and np.isfinite(clf.bias_)
            and np.all(np.isfinite(clf.feature_mean_))
            and np.all(np.isfinite(clf.feature_scale_))
        ):
            raise InvariantError("classifier parameters must be finite")
        return clf


def train_edge_classifier(features, labels):
    """Fit the logistic edge classifier on (n, 2) features and 0/1 same-labels."""
    return SeedEdgeClassifier().fit(np.asarray(features, dtype=np.float64), labels)


def classify_edges(graph, clf):
    """New graph with each edge weighted by the classifier's P(same)."""
    feats = [e.features for e in graph.edges]
    if any(f is None for f in feats):
        raise InvariantError("graph edges must be featurized before classification")
    if not feats:
        return graph
    proba = clf.predict_proba(np.asarray(feats))[:, 1]
    proba = np.clip(proba, 0.0, 1.0)
    edges = tuple(
        Edge(e.i, e.j, features=e.features, weight=float(p)) for e, p in zip(graph.edges, proba)
    )
    return SeedGraph(graph.seeds, edges)


class _DisjointSet:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:  # path compression
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def merge_seeds(graph, threshold):
    """Union seeds across edges with weight >= threshold.

    Output regions are unions of member seeds' pixels (not necessarily
    4-connected), ordered by their smallest member index; provenance carries
    the member index tuple.
    """
    v = len(graph.seeds)
    ds = _DisjointSet(v)
    for e in graph.edges:
        if e.weight is None:
            raise InvariantError("graph edges must be classified before merging")
        if e.weight >= threshold:
            ds.union(e.i, e.j)
    groups = {}
    for i in range(v):
        groups.setdefault(ds.find(i), []).append(i)
    members = [groups[root] for root in sorted(groups)]
    regions = [np.concatenate([graph.seeds.regions[i] for i in m]) for m in members]
    return SeedRegionSet(
        graph.seeds.shape,
        regions,
        provenance=[tuple(m) for m in members],
        check_connectivity=False,
    )


def threshold_sweep(graph, thresholds):
    """merge_seeds per threshold; region counts are non-decreasing in the threshold."""
    return [merge_seeds(graph, t) for t in thresholds]


def edges_to_csv(graph, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_EDGE_CSV_HEADER)
        for e in graph.edges:
            f1, f2 = (e.features if e.features is not None else (float("nan"), float("nan")))
            writer.writerow([e.i, e.j, repr(float(f1)), repr(float(f2)),
                             "" if e.weight is None else repr(float(e.weight))])
