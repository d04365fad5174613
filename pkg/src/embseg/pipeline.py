"""End-to-end segmentation pipeline: configuration, orchestration, and an
estimator-style wrapper.

The full chain is: edge strength -> distance transform -> multi-scale seeds ->
(optional) learned seed merging -> per-segment Gaussians -> posterior ->
unary potentials -> dense mean-field refinement -> label map.

Every stage is deterministic, so identical inputs and configuration produce
byte-identical label maps.
"""

import copy
import json
from dataclasses import dataclass, field, replace

from sklearn.base import BaseEstimator

from ._validation import check_positive
from .crf import CrfParams, color_features, mean_field_bruteforce, mean_field_fast, unary_potentials
from .errors import DimensionMismatchError, InvariantError
from .geodesic import geodesic_fields_for_seeds
from .merging import (
    SeedEdgeClassifier,
    build_seed_graph,
    classify_edges,
    featurize_graph,
    merge_seeds,
)
from .seeds import SeedGenConfig, multiscale_seed_regions, threshold_components
from .synth import SynthConfig, exact_distance_transform
from .tensors import ScalarField, resize_bilinear
from .unary import UnaryParams, fit_segment_gaussians, posterior_field

DEFAULT_MERGE_THRESHOLD = 0.5
DEFAULT_KNN = 5
DEFAULT_BOUNDARY_TAU = 0.5
DEFAULT_HALO = 2.0


@dataclass(frozen=True)
class PipelineConfig:
    """Bundle of per-stage parameters plus optional edge-classifier weights.

    ``classifier`` is either None (merging disabled) or the parameter dict
    produced by ``SeedEdgeClassifier.to_param_dict``; keeping it as plain data
    makes the config JSON-serializable.
    """

    synth: SynthConfig = field(default_factory=SynthConfig)
    seeds: SeedGenConfig = field(default_factory=SeedGenConfig)
    unary: UnaryParams = field(default_factory=UnaryParams)
    crf: CrfParams = field(default_factory=CrfParams)
    halo: float = DEFAULT_HALO
    boundary_tau: float = DEFAULT_BOUNDARY_TAU
    knn: int = DEFAULT_KNN
    merge_threshold: float = DEFAULT_MERGE_THRESHOLD
    use_fast_crf: bool = True
    classifier: dict | None = None

    def __post_init__(self):
        check_positive(self.knn, "knn")
        if not 0.0 <= self.merge_threshold <= 1.0:
            raise InvariantError(f"merge_threshold must lie in [0, 1], got {self.merge_threshold}")
        if not 0.0 <= self.boundary_tau <= 1.0:
            raise InvariantError(f"boundary_tau must lie in [0, 1], got {self.boundary_tau}")
        if self.halo < 0:
            raise InvariantError(f"halo must be >= 0, got {self.halo}")
        if self.classifier is not None and not isinstance(self.classifier, dict):
            raise InvariantError("classifier must be a parameter dict or None")

    def to_dict(self):
        out = {
            "synth": {
                "rng_seed": self.synth.rng_seed,
                "height": self.synth.height,
                "width": self.synth.width,
                "segment_count": self.synth.segment_count,
                "depth": self.synth.depth,
                "separation": self.synth.separation,
                "noise_sigma": self.synth.noise_sigma,
                "halo": self.halo,
            },
            "seeds": {
                "epsilon": self.seeds.epsilon,
                "erosion_radii": list(self.seeds.erosion_radii),
                "min_region_area": self.seeds.min_region_area,
                "boundary_tau": self.boundary_tau,
            },
            "merge": {
                "knn": self.knn,
                "threshold": self.merge_threshold,
                "classifier": copy.deepcopy(self.classifier),
            },
            "unary": {
                "c_r": self.unary.c_r,
                "c_g": self.unary.c_g,
                "variance_floor": self.unary.variance_floor,
            },
            "crf": {
                "w1": self.crf.w1,
                "w2": self.crf.w2,
                "theta_a": self.crf.theta_a,
                "theta_b": self.crf.theta_b,
                "theta_gamma": self.crf.theta_gamma,
                "iterations": self.crf.iterations,
                "fast": self.use_fast_crf,
            },
        }
        return out

    @classmethod
    def from_dict(cls, data):
        """Build a config from a (possibly partial) nested dict.

        Missing sections and keys fall back to the defaults, so configs only
        need to mention what they change.
        """
        if not isinstance(data, dict):
            raise InvariantError("config must be a JSON object")
        known = {"synth", "seeds", "merge", "unary", "crf"}
        unknown = set(data) - known
        if unknown:
            raise InvariantError(f"unknown config sections: {sorted(unknown)}")

        def section(name):
            sec = data.get(name, {})
            if not isinstance(sec, dict):
                raise InvariantError(f"config section {name!r} must be an object")
            return dict(sec)

        def build(name, defaults, overrides):
            try:
                return replace(defaults, **overrides)
            except TypeError:
                known_keys = set(type(defaults).__dataclass_fields__)
                bad = sorted(set(overrides) - known_keys)
                raise InvariantError(f"unknown keys in config section {name!r}: {bad}") from None

        sy = section("synth")
        halo = sy.pop("halo", DEFAULT_HALO)
        se = section("seeds")
        tau = se.pop("boundary_tau", DEFAULT_BOUNDARY_TAU)
        if "erosion_radii" in se:
            se["erosion_radii"] = tuple(se["erosion_radii"])
        me = section("merge")
        knn = me.pop("knn", DEFAULT_KNN)
        merge_threshold = me.pop("threshold", DEFAULT_MERGE_THRESHOLD)
        classifier = me.pop("classifier", None)
        if me:
            raise InvariantError(f"unknown keys in config section 'merge': {sorted(me)}")
        cr = section("crf")
        fast = cr.pop("fast", True)
        return cls(
            synth=build("synth", SynthConfig(), sy),
            seeds=build("seeds", SeedGenConfig(), se),
            unary=build("unary", UnaryParams(), section("unary")),
            crf=build("crf", CrfParams(), cr),
            halo=float(halo),
            boundary_tau=float(tau),
            knn=int(knn),
            merge_threshold=float(merge_threshold),
            classifier=classifier,
            use_fast_crf=bool(fast),
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class SegmentationResult:
    """Everything the pipeline produced for one field, final labels first."""

    labels: object
    seeds: object
    merged: object
    posterior: object
    marginals: object
    metadata: dict


def _prepare_embedding(embedding, height, width):
    if (embedding.height, embedding.width) == (height, width):
        return embedding
    return resize_bilinear(embedding, height, width)


def segment_field(embedding, edge_strength, config=None, dt=None, image=None):
    """Run the full pipeline on one embedding field.

    ``edge_strength`` fixes the working grid; the embedding is bilinearly
    resampled onto it when their sizes differ. ``dt`` (a precomputed distance
    transform) and ``image`` (an (H, W, 3) array in [0, 1] supplying CRF
    colors) are optional and must already live on the working grid.
    """
    config = config or PipelineConfig()
    if not isinstance(edge_strength, ScalarField):
        raise InvariantError("edge_strength must be a ScalarField")
    height, width = edge_strength.height, edge_strength.width
    embedding = _prepare_embedding(embedding, height, width)

    if dt is None:
        dt = exact_distance_transform(edge_strength, tau=config.boundary_tau)
    elif (dt.height, dt.width) != (height, width):
        raise DimensionMismatchError(
            f"distance transform {dt.height}x{dt.width} vs grid {height}x{width}"
        )
    if image is not None and image.shape[:2] != (height, width):
        raise DimensionMismatchError(
            f"image {image.shape[0]}x{image.shape[1]} vs grid {height}x{width}"
        )

    seeds = multiscale_seed_regions(dt, config.seeds)

    merged = seeds
    edge_count = 0
    if config.classifier is not None and len(seeds.regions) >= 2:
        classifier = SeedEdgeClassifier.from_param_dict(config.classifier)
        graph = build_seed_graph(seeds, k=config.knn)
        graph = featurize_graph(embedding, edge_strength, graph)
        graph = classify_edges(graph, classifier)
        edge_count = len(graph.edges)
        merged = merge_seeds(graph, config.merge_threshold)

    model = fit_segment_gaussians(embedding, merged, config.unary.variance_floor)
    geo = None
    if config.unary.c_g > 0:
        geo = geodesic_fields_for_seeds(edge_strength, merged)
    posterior = posterior_field(embedding, model, geo, config.unary)

    psi = unary_potentials(posterior)
    colors, color_source = color_features(
        emb=embedding if image is None else None,
        image=image,
    )
    refine = mean_field_fast if config.use_fast_crf else mean_field_bruteforce
    marginals, labels = refine(psi, colors, config.crf)

    metadata = {
        "height": height,
        "width": width,
        "seed_count": len(seeds.regions),
        "merged_count": len(merged.regions),
        "edge_count": edge_count,
        "segment_count": labels.segment_count,
        "color_source": color_source,
        "crf_mode": "fast" if config.use_fast_crf else "bruteforce",
    }
    return SegmentationResult(labels, seeds, merged, posterior, marginals, metadata)


class GenericSegmenter(BaseEstimator):
    """Estimator wrapper around the pipeline.

    ``fit`` trains the seed-merging edge classifier from edge features and
    binary same-segment labels; ``predict`` segments an embedding field.
    With no fit (or ``merge_threshold`` > 1 never reached) seeds pass through
    unmerged, which is still a valid segmenter for over-seeded inputs.
    """

    def __init__(
        self,
        epsilon=1.5,
        erosion_radii=(15, 7, 0),
        min_region_area=10,
        boundary_tau=DEFAULT_BOUNDARY_TAU,
        knn=DEFAULT_KNN,
        merge_threshold=DEFAULT_MERGE_THRESHOLD,
        c_r=1.25,
        c_g=0.5,
        variance_floor=1e-4,
        w1=6.0,
        w2=1.0,
        theta_a=60.0,
        theta_b=10.0,
        theta_gamma=3.0,
        iterations=10,
        use_fast_crf=True,
    ):
        self.epsilon = epsilon
        self.erosion_radii = erosion_radii
        self.min_region_area = min_region_area
        self.boundary_tau = boundary_tau
        self.knn = knn
        self.merge_threshold = merge_threshold
        self.c_r = c_r
        self.c_g = c_g
        self.variance_floor = variance_floor
        self.w1 = w1
        self.w2 = w2
        self.theta_a = theta_a
        self.theta_b = theta_b
        self.theta_gamma = theta_gamma
        self.iterations = iterations
        self.use_fast_crf = use_fast_crf

    def _config(self):
        classifier = None
        if hasattr(self, "edge_classifier_"):
            classifier = self.edge_classifier_.to_param_dict()
        return PipelineConfig(
            seeds=SeedGenConfig(
                epsilon=self.epsilon,
                erosion_radii=tuple(self.erosion_radii),
                min_region_area=self.min_region_area,
            ),
            unary=UnaryParams(c_r=self.c_r, c_g=self.c_g, variance_floor=self.variance_floor),
            crf=CrfParams(
                w1=self.w1,
                w2=self.w2,
                theta_a=self.theta_a,
                theta_b=self.theta_b,
                theta_gamma=self.theta_gamma,
                iterations=self.iterations,
            ),
            boundary_tau=self.boundary_tau,
            knn=self.knn,
            merge_threshold=self.merge_threshold,
            use_fast_crf=self.use_fast_crf,
            classifier=classifier,
        )

    def fit(self, X, y):
        """Train the edge classifier on (n, 2) edge features and 0/1 labels."""
        clf = SeedEdgeClassifier()
        clf.fit(X, y)
        self.edge_classifier_ = clf
        return self

    def predict(self, embedding, edge_strength, dt=None, image=None):
        """Segment one field; returns the final LabelMap."""
        return self.segment(embedding, edge_strength, dt=dt, image=image).labels

    def segment(self, embedding, edge_strength, dt=None, image=None):
        """Segment one field; returns the full SegmentationResult."""
        return segment_field(embedding, edge_strength, self._config(), dt=dt, image=image)


def oversegment(edge_strength, epsilon=1.5, boundary_tau=DEFAULT_BOUNDARY_TAU):
    """Components of the thresholded distance transform, with no erosion.

    Convenience entry point for building over-segmented seed inputs.
    """
    dt = exact_distance_transform(edge_strength, tau=boundary_tau)
    return threshold_components(dt, epsilon)


__all__ = [
    "PipelineConfig",
    "SegmentationResult",
    "segment_field",
    "GenericSegmenter",
    "oversegment",
]
