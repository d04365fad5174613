"""Command-line front end.

Subcommands: synth | segment | pair-eval | train-edges | bench | grid-search |
visualize. Runs are driven by a JSON config (see PipelineConfig); individual
flags override config values. All randomness is seeded through the config or
flags, so every subcommand is deterministic.

Exit codes: 0 success, 2 seed generation found nothing usable, 3 a required
input file is missing or dimensions disagree, 1 any other pipeline error.
(argparse keeps its conventional exit 2 for usage errors.)
"""

import argparse
import copy
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, EmbsegError, EmptySeedError, InvariantError
from .merging import (
    build_seed_graph,
    edge_labels_from_ground_truth,
    featurize_graph,
    train_edge_classifier,
)
from .metrics import (
    aggregate,
    boundary_f,
    covering,
    grid_search,
    pooled_curve,
    region_f,
    write_pr_csv,
    write_pr_svg,
)
from .pipeline import PipelineConfig, segment_field
from .ppm import read_ppm, write_ppm
from .representation import learn_threshold, pair_accuracy, pca_virtual_colors, sample_pairs
from .seeds import multiscale_seed_regions
from .synth import (
    edge_strength_from_labels,
    exact_distance_transform,
    generate_color_image,
    generate_embeddings,
    generate_oversegmentation,
    generate_segmentation,
)
from .tensors import EmbeddingField, LabelMap, ScalarField, embedding_from_colors, load_tensor, save_tensor

# (flag attribute) -> (config section, key, cast)
_OVERRIDES = {
    "epsilon": ("seeds", "epsilon", float),
    "erosion_radii": ("seeds", "erosion_radii", lambda s: [int(x) for x in s.split(",")]),
    "min_region_area": ("seeds", "min_region_area", int),
    "boundary_tau": ("seeds", "boundary_tau", float),
    "knn": ("merge", "knn", int),
    "merge_threshold": ("merge", "threshold", float),
    "c_r": ("unary", "c_r", float),
    "c_g": ("unary", "c_g", float),
    "w1": ("crf", "w1", float),
    "w2": ("crf", "w2", float),
    "theta_a": ("crf", "theta_a", float),
    "theta_b": ("crf", "theta_b", float),
    "theta_gamma": ("crf", "theta_gamma", float),
    "crf_iters": ("crf", "iterations", int),
}


def _add_pipeline_flags(p):
    p.add_argument("--config", type=Path, default=None, help="JSON pipeline config")
    p.add_argument("--epsilon", type=float, default=None, help="seed distance threshold")
    p.add_argument("--erosion-radii", dest="erosion_radii", default=None,
                   help="comma-separated descending radii, e.g. 15,7,0")
    p.add_argument("--min-region-area", dest="min_region_area", type=int, default=None)
    p.add_argument("--boundary-tau", dest="boundary_tau", type=float, default=None,
                   help="edge-strength threshold for the distance transform")
    p.add_argument("--knn", type=int, default=None, help="seed-graph neighbor count")
    p.add_argument("--merge-threshold", dest="merge_threshold", type=float, default=None)
    p.add_argument("--c-r", dest="c_r", type=float, default=None, help="embedding unary weight")
    p.add_argument("--c-g", dest="c_g", type=float, default=None, help="geodesic unary weight")
    p.add_argument("--w1", type=float, default=None, help="appearance kernel weight")
    p.add_argument("--w2", type=float, default=None, help="smoothness kernel weight")
    p.add_argument("--theta-a", dest="theta_a", type=float, default=None)
    p.add_argument("--theta-b", dest="theta_b", type=float, default=None)
    p.add_argument("--theta-gamma", dest="theta_gamma", type=float, default=None)
    p.add_argument("--crf-iters", dest="crf_iters", type=int, default=None)
    p.add_argument("--brute-crf", action="store_true", help="use the O(N^2) reference mean field")


def _load_config(args):
    """Config file (if any) merged over defaults, then flag overrides on top."""
    data = {}
    if getattr(args, "config", None) is not None:
        with open(args.config, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    data = copy.deepcopy(data)
    for attr, (section, key, cast) in _OVERRIDES.items():
        value = getattr(args, attr, None)
        if value is not None:
            data.setdefault(section, {})[key] = cast(value)
    if getattr(args, "brute_crf", False):
        data.setdefault("crf", {})["fast"] = False
    return PipelineConfig.from_dict(data)


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_typed(path, want, what):
    field = load_tensor(path)
    if not isinstance(field, want):
        raise InvariantError(f"{path}: expected {what}, found {type(field).__name__}")
    return field


def cmd_synth(args):
    config = _load_config(args)
    synth = config.synth
    if args.seed is not None:
        synth = replace(synth, rng_seed=args.seed)
    for attr in ("height", "width", "depth"):
        if getattr(args, attr) is not None:
            synth = replace(synth, **{attr: getattr(args, attr)})
    if args.segments is not None:
        synth = replace(synth, segment_count=args.segments)
    if args.separation is not None:
        synth = replace(synth, separation=args.separation)
    if args.noise_sigma is not None:
        synth = replace(synth, noise_sigma=args.noise_sigma)
    halo = config.halo if args.halo is None else args.halo

    if args.subsegments is not None and args.subsegments < synth.segment_count:
        raise InvariantError("--subsegments must be >= the segment count")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    images = []
    for idx in range(args.images):
        cfg_i = replace(synth, rng_seed=synth.rng_seed + idx)
        fine = None
        if args.subsegments is None:
            labels = generate_segmentation(cfg_i)
        else:
            labels, fine = generate_oversegmentation(cfg_i, args.subsegments)
        emb = generate_embeddings(labels, cfg_i)
        # Edge strength follows the finest partition available, so seeds
        # over-segment the ground truth whenever --subsegments is set.
        edges = edge_strength_from_labels(labels if fine is None else fine, halo=halo)
        entry = {
            "id": idx,
            "rng_seed": cfg_i.rng_seed,
            "embedding": f"emb_{idx:03d}.dgst",
            "labels": f"labels_{idx:03d}.dgst",
            "edges": f"edges_{idx:03d}.dgst",
        }
        save_tensor(emb, out / entry["embedding"])
        save_tensor(labels, out / entry["labels"])
        save_tensor(edges, out / entry["edges"])
        if fine is not None:
            entry["fine_labels"] = f"fine_{idx:03d}.dgst"
            save_tensor(fine, out / entry["fine_labels"])
        if args.with_color:
            entry["color"] = f"color_{idx:03d}.ppm"
            write_ppm(out / entry["color"], generate_color_image(labels, cfg_i.rng_seed))
        images.append(entry)

    manifest_config = config.to_dict()
    manifest_config["synth"] = {
        "rng_seed": synth.rng_seed,
        "height": synth.height,
        "width": synth.width,
        "segment_count": synth.segment_count,
        "depth": synth.depth,
        "separation": synth.separation,
        "noise_sigma": synth.noise_sigma,
        "halo": halo,
    }
    manifest = {"config": manifest_config, "images": images}
    if args.subsegments is not None:
        manifest["subsegments"] = args.subsegments
    _write_json(out / "manifest.json", manifest)
    print(f"wrote {len(images)} image triple(s) to {out}")
    return 0


def cmd_segment(args):
    config = _load_config(args)
    emb = _load_typed(args.embedding, EmbeddingField, "an embedding tensor")
    edges = _load_typed(args.edges, ScalarField, "a scalar edge-strength tensor")
    dt = _load_typed(args.dt, ScalarField, "a scalar distance tensor") if args.dt else None
    image = read_ppm(args.image) if args.image else None

    result = segment_field(emb, edges, config, dt=dt, image=image)

    z_rows = result.posterior.data.sum(axis=2)
    if np.abs(z_rows - 1.0).max() > 1e-6:  # spot check before anything is written
        raise InvariantError("posterior rows do not sum to 1")

    if args.debug_artifacts:
        debug = Path(args.debug_artifacts)
        debug.mkdir(parents=True, exist_ok=True)
        save_tensor(result.seeds.to_label_map(), debug / "seeds.dgst")
        save_tensor(result.merged.to_label_map(), debug / "merged.dgst")
        save_tensor(EmbeddingField(result.posterior.data), debug / "posterior.dgst")
        save_tensor(EmbeddingField(result.marginals.data), debug / "marginals.dgst")

    save_tensor(result.labels, args.out)
    if args.report:
        _write_json(args.report, {"config": config.to_dict(), **result.metadata})
    print(
        f"{result.metadata['seed_count']} seeds -> {result.metadata['merged_count']} regions -> "
        f"{result.metadata['segment_count']} segments ({result.metadata['color_source']} colors)"
    )
    return 0


def cmd_pair_eval(args):
    if args.rgb_baseline:
        if not args.image:
            raise InvariantError("--rgb-baseline needs --image")
        emb = embedding_from_colors(read_ppm(args.image))
        source = "rgb"
    else:
        if not args.embedding:
            raise InvariantError("need --embedding (or --rgb-baseline with --image)")
        emb = _load_typed(args.embedding, EmbeddingField, "an embedding tensor")
        source = "embedding"
    labels = _load_typed(args.labels, LabelMap, "a label tensor")

    validation = sample_pairs(labels, args.val_count, args.seed)
    test = sample_pairs(labels, args.test_count, args.seed + 1)
    learned = learn_threshold(emb, validation)
    report = {
        "source": source,
        "rng_seed": args.seed,
        "val_count": len(validation.labels),
        "test_count": len(test.labels),
        "threshold": learned.threshold,
        "validation_accuracy": learned.validation_accuracy,
        "test_accuracy": pair_accuracy(emb, test, learned.threshold),
    }
    if args.out:
        _write_json(args.out, report)
    print(json.dumps(report, sort_keys=True))
    return 0


def _read_manifest(dataset):
    root = Path(dataset)
    with open(root / "manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if not manifest.get("images"):
        raise InvariantError(f"{root}: manifest lists no images")
    return root, manifest


def _collect_edge_training(root, manifest, config):
    """Featurized edges + ground-truth same-segment labels across a dataset."""
    features, labels01 = [], []
    for entry in manifest["images"]:
        emb = _load_typed(root / entry["embedding"], EmbeddingField, "an embedding tensor")
        gt = _load_typed(root / entry["labels"], LabelMap, "a label tensor")
        edges = _load_typed(root / entry["edges"], ScalarField, "a scalar tensor")
        dt = exact_distance_transform(edges, tau=config.boundary_tau)
        seeds = multiscale_seed_regions(dt, config.seeds)
        if len(seeds) < 2:
            continue
        graph = featurize_graph(emb, edges, build_seed_graph(seeds, k=config.knn))
        features.extend(e.features for e in graph.edges)
        labels01.extend(edge_labels_from_ground_truth(graph, gt).tolist())
    if not features:
        raise InvariantError("dataset produced no seed edges to train on")
    return np.asarray(features, dtype=np.float64), np.asarray(labels01, dtype=np.int64)


def cmd_train_edges(args):
    config = _load_config(args)
    root, manifest = _read_manifest(args.dataset)
    features, labels01 = _collect_edge_training(root, manifest, config)
    clf = train_edge_classifier(features, labels01)
    accuracy = float(np.mean(clf.predict(features) == labels01))
    trained = replace(config, classifier=clf.to_param_dict())
    trained.save(args.out)
    print(f"trained on {len(labels01)} edges, accuracy {accuracy:.4f}, config -> {args.out}")
    return 0


def _bench_curves(root, manifest, config, thresholds, metric, tol, gamma):
    per_image = []
    for entry in manifest["images"]:
        emb = _load_typed(root / entry["embedding"], EmbeddingField, "an embedding tensor")
        gt = _load_typed(root / entry["labels"], LabelMap, "a label tensor")
        edges = _load_typed(root / entry["edges"], ScalarField, "a scalar tensor")
        curve = []
        for t in thresholds:
            cfg_t = replace(config, merge_threshold=t)
            labels = segment_field(emb, edges, cfg_t).labels
            if metric == "region":
                pt = region_f(labels, gt, jaccard_gamma=gamma, threshold=t)
            else:
                pt = boundary_f(labels, gt, tol=tol, threshold=t)
            curve.append(pt)
        per_image.append(curve)
    return per_image


def cmd_bench(args):
    config = _load_config(args)
    root, manifest = _read_manifest(args.dataset)
    thresholds = [float(x) for x in args.thresholds.split(",")]
    if not thresholds:
        raise InvariantError("threshold grid is empty")

    if config.classifier is None:
        features, labels01 = _collect_edge_training(root, manifest, config)
        clf = train_edge_classifier(features, labels01)
        config = replace(config, classifier=clf.to_param_dict())

    per_image = _bench_curves(
        root, manifest, config, thresholds, args.metric, args.tol, args.jaccard_gamma
    )
    summary = aggregate(per_image)
    pooled = pooled_curve(per_image)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_pr_csv(out / "pr.csv", pooled)
    write_pr_svg(out / "pr.svg", {"dataset": pooled})
    _write_json(
        out / "summary.json",
        {
            **summary.to_dict(),
            "metric": args.metric,
            "thresholds": thresholds,
            "images": len(per_image),
        },
    )
    print(f"ODS {summary.ods:.4f}  OIS {summary.ois:.4f}  AP {summary.ap:.4f} -> {out}")
    return 0


def _set_dotted(data, dotted, value):
    section, _, key = dotted.partition(".")
    if not section or not key or "." in key:
        raise InvariantError(f"grid key {dotted!r} must look like 'section.key'")
    data.setdefault(section, {})[key] = value


def cmd_grid_search(args):
    config = _load_config(args)
    root, manifest = _read_manifest(args.dataset)
    with open(args.grid, "r", encoding="utf-8") as fh:
        space = json.load(fh)
    if not isinstance(space, dict) or not space:
        raise InvariantError("grid file must be a non-empty JSON object")

    base = config.to_dict()
    triples = [
        (
            _load_typed(root / e["embedding"], EmbeddingField, "an embedding tensor"),
            _load_typed(root / e["labels"], LabelMap, "a label tensor"),
            _load_typed(root / e["edges"], ScalarField, "a scalar tensor"),
        )
        for e in manifest["images"]
    ]

    def evaluate(params):
        data = copy.deepcopy(base)
        for dotted, value in params.items():
            _set_dotted(data, dotted, value)
        cfg = PipelineConfig.from_dict(data)
        scores = []
        for emb, gt, edges in triples:
            labels = segment_field(emb, edges, cfg).labels
            if args.objective == "covering":
                scores.append(covering(labels, gt))
            else:
                scores.append(region_f(labels, gt, jaccard_gamma=args.jaccard_gamma).f_measure)
        return float(np.mean(scores))

    best, results = grid_search(space, evaluate)
    payload = {
        "objective": args.objective,
        "best": best,
        "results": [
            {"params": params, "score": score, **({"error": err} if err else {})}
            for params, score, err in results
        ],
    }
    _write_json(args.out, payload)
    best_score = max(score for _, score, _ in results)
    print(f"best {best} -> {best_score:.4f} ({len(results)} points) -> {args.out}")
    return 0


def cmd_visualize(args):
    emb = _load_typed(args.embedding, EmbeddingField, "an embedding tensor")
    write_ppm(args.out, pca_virtual_colors(emb))
    print(f"wrote {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="embseg",
        description="Embedding-field segmentation: synthesis, inference, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    _add_pipeline_flags(p)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--images", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="base rng seed (image i uses seed+i)")
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--segments", type=int, default=None)
    p.add_argument("--depth", type=int, default=None, help="embedding channels")
    p.add_argument("--separation", type=float, default=None)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=None)
    p.add_argument("--halo", type=float, default=None, help="edge-strength falloff width")
    p.add_argument("--subsegments", type=int, default=None,
                   help="split segments into this many Voronoi cells so seeds over-segment")
    p.add_argument("--with-color", dest="with_color", action="store_true",
                   help="also render a color image per label map")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("segment", help="segment one embedding field")
    _add_pipeline_flags(p)
    p.add_argument("--embedding", required=True)
    p.add_argument("--edges", required=True, help="edge-strength tensor")
    p.add_argument("--dt", default=None, help="precomputed distance transform")
    p.add_argument("--image", default=None, help="pixmap supplying CRF colors")
    p.add_argument("--out", required=True, help="output label tensor")
    p.add_argument("--report", default=None, help="run metadata JSON")
    p.add_argument("--debug-artifacts", dest="debug_artifacts", default=None,
                   help="directory for intermediate tensors")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("pair-eval", help="pair-classification accuracy of a representation")
    p.add_argument("--embedding", default=None)
    p.add_argument("--labels", required=True, help="ground-truth label tensor")
    p.add_argument("--image", default=None, help="pixmap for the RGB baseline")
    p.add_argument("--rgb-baseline", dest="rgb_baseline", action="store_true",
                   help="score raw colors instead of the embedding")
    p.add_argument("--val-count", dest="val_count", type=int, default=200)
    p.add_argument("--test-count", dest="test_count", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="report JSON path")
    p.set_defaults(func=cmd_pair_eval)

    p = sub.add_parser("train-edges", help="fit the seed-merge edge classifier on a dataset")
    _add_pipeline_flags(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="trained pipeline config JSON")
    p.set_defaults(func=cmd_train_edges)

    p = sub.add_parser("bench", help="sweep merge thresholds and aggregate ODS/OIS/AP")
    _add_pipeline_flags(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--thresholds", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")
    p.add_argument("--metric", choices=("region", "boundary"), default="region")
    p.add_argument("--tol", type=float, default=2.0, help="boundary match tolerance")
    p.add_argument("--jaccard-gamma", dest="jaccard_gamma", type=float, default=0.5)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("grid-search", help="exhaustive config search against a dataset")
    _add_pipeline_flags(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--grid", required=True, help="JSON of dotted config keys to value lists")
    p.add_argument("--objective", choices=("covering", "region-f"), default="covering")
    p.add_argument("--jaccard-gamma", dest="jaccard_gamma", type=float, default=0.5)
    p.add_argument("--out", required=True, help="results JSON path")
    p.set_defaults(func=cmd_grid_search)

    p = sub.add_parser("visualize", help="render an embedding as virtual colors")
    p.add_argument("--embedding", required=True)
    p.add_argument("--out", required=True, help="output pixmap")
    p.set_defaults(func=cmd_visualize)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return int(args.func(args) or 0)
    except EmptySeedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, DimensionMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except EmbsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
