"""Segmentation of per-pixel embedding fields.

Seeds are grown from the boundary distance transform, optionally merged by a
learned edge classifier, converted to Gaussian posteriors over segments, and
refined with a fully connected pairwise CRF. Everything consumes and produces
small self-describing tensor files, so each stage can be run and inspected on
its own through the `embseg` command-line tool.
"""

from .crf import (
    CrfParams,
    MarginalField,
    color_features,
    mean_field_bruteforce,
    mean_field_fast,
    pairwise_kernel,
    unary_potentials,
)
from .errors import (
    BadMagicError,
    DimensionMismatchError,
    EmbsegError,
    EmptySeedError,
    FormatError,
    InvariantError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)
from .geodesic import GeodesicField, geodesic_field, geodesic_fields_for_seeds, region_geodesic
from .merging import (
    Edge,
    SeedEdgeClassifier,
    SeedGraph,
    build_seed_graph,
    classify_edges,
    edge_features,
    edge_labels_from_ground_truth,
    featurize_graph,
    majority_region_labels,
    merge_seeds,
    threshold_sweep,
    train_edge_classifier,
)
from .metrics import (
    BenchmarkSummary,
    PrPoint,
    aggregate,
    boundary_f,
    boundary_pixels,
    covering,
    grid_search,
    pooled_curve,
    region_f,
    write_pr_csv,
    write_pr_svg,
)
from .pipeline import (
    GenericSegmenter,
    PipelineConfig,
    SegmentationResult,
    oversegment,
    segment_field,
)
from .ppm import read_ppm, write_ppm
from .representation import (
    LossParams,
    PairDataset,
    PairThreshold,
    PairThresholdClassifier,
    learn_threshold,
    pair_accuracy,
    pair_distances,
    pca_projection,
    pca_virtual_colors,
    sample_pairs,
    siamese_loss,
    siamese_loss_batch,
    triplet_loss,
)
from .seeds import (
    SeedGenConfig,
    SeedRegionSet,
    erode_disk,
    multiscale_seed_regions,
    threshold_components,
)
from .synth import (
    SynthConfig,
    edge_strength_from_labels,
    exact_distance_transform,
    generate_color_image,
    generate_embeddings,
    generate_oversegmentation,
    generate_segmentation,
    segment_centers,
    voronoi_labels_from_sites,
)
from .tensors import (
    EmbeddingField,
    LabelMap,
    ScalarField,
    embedding_from_colors,
    load_tensor,
    relabel_contiguous,
    resize_bilinear,
    save_tensor,
)
from .unary import (
    GaussianSegmentModel,
    UnaryField,
    UnaryParams,
    fit_segment_gaussians,
    mahalanobis_sq,
    posterior_field,
    unary_argmax,
)

__version__ = "0.1.0"

__all__ = [
    "BadMagicError",
    "BenchmarkSummary",
    "CrfParams",
    "DimensionMismatchError",
    "Edge",
    "EmbeddingField",
    "EmbsegError",
    "EmptySeedError",
    "FormatError",
    "GaussianSegmentModel",
    "GenericSegmenter",
    "GeodesicField",
    "InvariantError",
    "LabelMap",
    "LossParams",
    "MarginalField",
    "PairDataset",
    "PairThreshold",
    "PairThresholdClassifier",
    "PipelineConfig",
    "PrPoint",
    "ScalarField",
    "SeedEdgeClassifier",
    "SeedGenConfig",
    "SeedGraph",
    "SeedRegionSet",
    "SegmentationResult",
    "SynthConfig",
    "TruncatedPayloadError",
    "UnaryField",
    "UnaryParams",
    "UnsupportedVersionError",
    "aggregate",
    "boundary_f",
    "boundary_pixels",
    "build_seed_graph",
    "classify_edges",
    "color_features",
    "covering",
    "edge_features",
    "edge_labels_from_ground_truth",
    "edge_strength_from_labels",
    "embedding_from_colors",
    "erode_disk",
    "exact_distance_transform",
    "featurize_graph",
    "fit_segment_gaussians",
    "generate_color_image",
    "generate_embeddings",
    "generate_oversegmentation",
    "generate_segmentation",
    "geodesic_field",
    "geodesic_fields_for_seeds",
    "grid_search",
    "learn_threshold",
    "load_tensor",
    "mahalanobis_sq",
    "majority_region_labels",
    "mean_field_bruteforce",
    "mean_field_fast",
    "merge_seeds",
    "multiscale_seed_regions",
    "oversegment",
    "pair_accuracy",
    "pair_distances",
    "pairwise_kernel",
    "pca_projection",
    "pca_virtual_colors",
    "pooled_curve",
    "posterior_field",
    "read_ppm",
    "region_f",
    "region_geodesic",
    "relabel_contiguous",
    "resize_bilinear",
    "sample_pairs",
    "save_tensor",
    "segment_centers",
    "segment_field",
    "siamese_loss",
    "siamese_loss_batch",
    "threshold_components",
    "threshold_sweep",
    "train_edge_classifier",
    "triplet_loss",
    "unary_argmax",
    "unary_potentials",
    "voronoi_labels_from_sites",
    "write_ppm",
    "write_pr_csv",
    "write_pr_svg",
]
