"""Acceptance suite: one test per shipping criterion.

Each test prints a single summary line with the measured numbers, so a
verbose run doubles as a release report. Constructions with free seeds are
frozen; every number here reproduces exactly on rerun.
"""

import math
import time
from dataclasses import replace

import numpy as np

from embseg.cli import main
from embseg.crf import CrfParams, mean_field_bruteforce, mean_field_fast
from embseg.geodesic import geodesic_field
from embseg.merging import (
    build_seed_graph,
    edge_labels_from_ground_truth,
    featurize_graph,
    train_edge_classifier,
)
from embseg.metrics import aggregate, boundary_f, covering, region_f
from embseg.pipeline import PipelineConfig, segment_field
from embseg.representation import (
    LossParams,
    learn_threshold,
    pair_accuracy,
    sample_pairs,
    siamese_loss,
    triplet_loss,
)
from embseg.seeds import threshold_components
from embseg.synth import (
    SynthConfig,
    edge_strength_from_labels,
    exact_distance_transform,
    generate_color_image,
    generate_embeddings,
    generate_oversegmentation,
    generate_segmentation,
)
from embseg.tensors import LabelMap, ScalarField, embedding_from_colors
from embseg.unary import UnaryField, unary_argmax

from oracles import (
    distance_transform_bruteforce,
    flood_fill_components,
    geodesic_bruteforce,
)
from conftest import random_mask


def random_crf_instance(seed, h, w, k):
    r = np.random.default_rng(seed)
    psi = r.uniform(0.0, 3.0, size=(h, w, k))
    colors = r.uniform(0.0, 255.0, size=(h, w, 3))
    return psi, colors


def voronoi_instance(seed, noise_sigma, size=64, k=5, separation=8.0):
    cfg = SynthConfig(
        rng_seed=seed,
        height=size,
        width=size,
        segment_count=k,
        depth=8,
        separation=separation,
        noise_sigma=noise_sigma,
    )
    labels = generate_segmentation(cfg)
    emb = generate_embeddings(labels, cfg)
    strength = edge_strength_from_labels(labels, halo=2.0)
    return emb, strength, labels


def test_distance_geodesic_component_oracles():
    """Exact algorithms agree with brute-force oracles; all three in < 30 s."""
    start = time.perf_counter()
    rng = np.random.default_rng(42)

    for _ in range(100):
        mask = random_mask(rng, 16, 16)
        dt = exact_distance_transform((~mask).astype(np.float32))
        assert np.array_equal(dt.data, distance_transform_bruteforce(mask).astype(np.float32))

    for seed in range(100):
        r = np.random.default_rng(seed)
        strength = r.uniform(0.0, 1.0, (3, 3))
        src = (int(r.integers(0, 3)), int(r.integers(0, 3)))
        got = geodesic_field(ScalarField(strength), [src]).distances
        want = geodesic_bruteforce(strength.astype(np.float32).astype(np.float64), [src])
        assert np.array_equal(got, want)

    for _ in range(100):
        mask = random_mask(rng, 16, 16, p_inside=0.5)
        seeds = threshold_components(ScalarField(np.where(mask, 2.5, 0.0)), 1.5)
        oracle_labels, count = flood_fill_components(mask)
        assert len(seeds) == count
        got = {frozenset(r.tolist()) for r in seeds.regions}
        want = {
            frozenset(np.flatnonzero((oracle_labels == c).ravel()).tolist())
            for c in range(1, count + 1)
        }
        assert got == want

    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    print(f"PASS oracle equivalence: edt 100/100, geodesic 100/100, "
          f"components 100/100 bitwise, {elapsed:.1f}s")


def test_mean_field_update_correctness():
    """Single-update closed form, unary fixed points, and row normalization."""
    # two adjacent pixels, two labels, one synchronous update
    psi = np.array([[[0.4, 1.1], [0.9, 0.2]]])
    colors = np.zeros((1, 2, 3))
    colors[0, 1] = [3.0, 4.0, 0.0]
    marg, _ = mean_field_bruteforce(psi, colors, CrfParams(iterations=1))
    k01 = 6.0 * math.exp(-1.0 / 7200.0 - 25.0 / 200.0) + math.exp(-1.0 / 18.0)
    q0 = np.exp(-psi[0, 0]) / np.exp(-psi[0, 0]).sum()
    q1 = np.exp(-psi[0, 1]) / np.exp(-psi[0, 1]).sum()
    want0 = np.exp(-psi[0, 0] - k01 * (1.0 - q1))
    want1 = np.exp(-psi[0, 1] - k01 * (1.0 - q0))
    closed_form_dev = max(
        np.abs(marg.data[0, 0] - want0 / want0.sum()).max(),
        np.abs(marg.data[0, 1] - want1 / want1.sum()).max(),
    )
    assert closed_form_dev <= 1e-9

    psi, colors = random_crf_instance(7, 16, 16, 4)
    z = np.exp(-psi + psi.min(axis=2, keepdims=True))  # stabilized like the library
    z /= z.sum(axis=2, keepdims=True)
    base, labels0 = mean_field_bruteforce(psi, colors, CrfParams(iterations=0))
    assert np.array_equal(np.asarray(base.data), z)
    assert np.array_equal(labels0.labels, unary_argmax(UnaryField(z)).labels)

    for iters in (1, 4, 9):
        frozen, _ = mean_field_bruteforce(
            psi, colors, CrfParams(w1=0.0, w2=0.0, iterations=iters)
        )
        assert np.array_equal(np.asarray(frozen.data), np.asarray(base.data))

    worst_row = 0.0
    for iters in range(6):
        marg, _ = mean_field_bruteforce(psi, colors, CrfParams(iterations=iters))
        rows = np.asarray(marg.data).sum(axis=2)
        worst_row = max(worst_row, np.abs(rows - 1.0).max())
    assert worst_row <= 1e-6
    print(f"PASS mean-field correctness: closed form dev {closed_form_dev:.2e}, "
          f"unary fixed points exact, worst row-sum dev {worst_row:.2e}")


def test_fast_crf_matches_bruteforce_and_is_faster():
    """Windowed path tracks the dense path on labels, then beats it on time."""
    params = CrfParams()
    agree = total = 0
    worst = 1.0
    for seed in range(20):
        psi, colors = random_crf_instance(seed, 32, 32, 4)
        _, brute = mean_field_bruteforce(psi, colors, params)
        _, fast = mean_field_fast(psi, colors, params)
        same = int((brute.labels == fast.labels).sum())
        agree += same
        total += brute.labels.size
        worst = min(worst, same / brute.labels.size)
    pooled = agree / total
    assert pooled >= 0.99

    psi, colors = random_crf_instance(99, 128, 128, 8)
    t0 = time.perf_counter()
    mean_field_bruteforce(psi, colors, params)
    brute_s = time.perf_counter() - t0
    t0 = time.perf_counter()
    mean_field_fast(psi, colors, params)
    fast_s = time.perf_counter() - t0
    assert brute_s >= 10.0 * fast_s
    print(f"PASS fast vs brute force: agreement {pooled:.4f} pooled "
          f"(worst image {worst:.4f}), speedup {brute_s / fast_s:.1f}x "
          f"({brute_s:.1f}s vs {fast_s:.2f}s at 128x128, K=8)")


def test_end_to_end_synthetic_recovery():
    """Default pipeline recovers a well-separated Voronoi partition."""
    emb, strength, gt = voronoi_instance(seed=1, noise_sigma=1.0)
    t0 = time.perf_counter()
    result = segment_field(emb, strength, PipelineConfig())
    elapsed = time.perf_counter() - t0
    cov = covering(result.labels, gt)
    pt = region_f(result.labels, gt, jaccard_gamma=0.5)
    assert cov >= 0.95
    assert pt.f_measure == 1.0
    assert elapsed < 60.0

    emb0, strength0, gt0 = voronoi_instance(seed=1, noise_sigma=0.0)
    result0 = segment_field(emb0, strength0, PipelineConfig())
    cov0 = covering(result0.labels, gt0)
    assert cov0 == 1.0
    print(f"PASS end-to-end synthetic: covering {cov:.4f}, region F {pt.f_measure:.1f} "
          f"at gamma 0.5, noise-free covering {cov0:.1f}, {elapsed:.1f}s/image")


def test_pair_classification_protocol():
    """Learned threshold on clean embeddings beats the RGB baseline."""
    emb, _, gt = voronoi_instance(seed=1, noise_sigma=1.0)
    rgb = embedding_from_colors(generate_color_image(gt, rng_seed=1))
    validation = sample_pairs(gt, 200, rng_seed=1)
    test = sample_pairs(gt, 200, rng_seed=2)

    emb_acc = pair_accuracy(emb, test, learn_threshold(emb, validation).threshold)
    rgb_acc = pair_accuracy(rgb, test, learn_threshold(rgb, validation).threshold)
    assert emb_acc >= 0.95
    assert rgb_acc < emb_acc
    print(f"PASS pair classification: embedding {emb_acc:.4f} >= 0.95, "
          f"rgb baseline {rgb_acc:.4f} strictly lower")


def benchmark_edges(base_seed=0, need=200):
    """Seed-graph edges over blocky group partitions, labeled same/not-same.

    Embedding distance stays informative through the noise; the strength map
    feeding the geodesic keeps only 90% of the group walls, so both features
    carry real but imperfect signal.
    """
    feats, labels01 = [], []
    idx = 0
    while len(labels01) < need:
        cfg = SynthConfig(
            rng_seed=base_seed + idx,
            height=48,
            width=48,
            segment_count=4,
            depth=8,
            separation=3.0,
            noise_sigma=2.5,
        )
        groups, fine = generate_oversegmentation(cfg, 12)
        emb = generate_embeddings(groups, cfg)
        dt = exact_distance_transform(edge_strength_from_labels(fine, halo=2.0))
        seeds = threshold_components(dt, 1.5)
        if len(seeds) < 2:
            idx += 1
            continue
        wall = edge_strength_from_labels(groups, halo=2.0).data.copy()
        keep = np.random.default_rng(1000 + base_seed + idx).random(wall.shape) < 0.9
        corrupted = ScalarField((wall * keep).astype(np.float32))
        graph = featurize_graph(emb, corrupted, build_seed_graph(seeds, k=5))
        feats.extend(e.features for e in graph.edges)
        labels01.extend(edge_labels_from_ground_truth(graph, groups).tolist())
        idx += 1
    X = np.asarray(feats, dtype=np.float64)[:need]
    return X, np.asarray(labels01, dtype=np.int64)[:need]


def test_edge_classifier_feature_ordering():
    """Two features together at least match the better single feature."""
    X, y = benchmark_edges()
    assert len(y) == 200
    acc = {}
    for name, cols in (("both", slice(None)), ("embedding", slice(0, 1)), ("geodesic", slice(1, 2))):
        clf = train_edge_classifier(X[:, cols], y)
        acc[name] = float(np.mean(clf.predict(X[:, cols]) == y))
    assert acc["both"] >= max(acc["embedding"], acc["geodesic"]) - 0.01
    print(f"PASS edge-feature ordering: both {acc['both']:.4f} >= "
          f"max(embedding {acc['embedding']:.4f}, geodesic {acc['geodesic']:.4f}) - 0.01 "
          f"on 200 edges")


def test_metric_sanity():
    """Perfect predictions score 1, OIS >= ODS, labels are nominal."""
    _, _, gt = voronoi_instance(seed=2, noise_sigma=1.0, size=32, k=4)
    assert boundary_f(gt, gt).f_measure == 1.0
    assert region_f(gt, gt).f_measure == 1.0
    assert covering(gt, gt) == 1.0

    rng = np.random.default_rng(5)
    checked = 0
    for _ in range(20):
        per_image = []
        for _ in range(3):
            gt_i = LabelMap(rng.integers(0, 3, size=(12, 16)))
            curve = [
                region_f(LabelMap(rng.integers(0, 4, size=(12, 16))), gt_i, threshold=t)
                for t in (0.2, 0.4, 0.6, 0.8)
            ]
            per_image.append(curve)
        summary = aggregate(per_image)
        assert summary.ois >= summary.ods - 1e-12
        checked += 1

    for trial in range(50):
        r = np.random.default_rng(trial)
        machine = LabelMap(r.integers(0, 4, size=(10, 14)))
        gt_t = LabelMap(r.integers(0, 3, size=(10, 14)))
        base = (
            boundary_f(machine, gt_t).f_measure,
            region_f(machine, gt_t).f_measure,
            covering(machine, gt_t),
        )
        pm = LabelMap(r.permutation(4)[machine.labels])
        pg = LabelMap(r.permutation(3)[gt_t.labels])
        assert boundary_f(pm, pg).f_measure == base[0]
        assert region_f(pm, pg).f_measure == base[1]
        assert covering(pm, pg) == base[2]
    print(f"PASS metric sanity: identity scores 1.0, OIS >= ODS on {checked} aggregates, "
          f"permutation-invariant over 50 trials")


def test_contrastive_loss_unit_values():
    """Published toy values for both losses, plus non-negativity."""
    p = LossParams(margin=2.0)
    assert siamese_loss((1.0, 2.0), (1.0, 2.0), 1, p) == 0.0
    assert siamese_loss((0.0, 0.0), (3.0, 0.0), 0, p) == 0.0  # d=3 >= m=2
    assert siamese_loss((0.0, 0.0), (1.0, 0.0), 0, p) == 1.0

    p1 = LossParams(margin=1.0)
    assert triplet_loss((0.0, 0.0), (0.0, 0.0), (5.0, 0.0), p1) == 0.0
    assert triplet_loss((0.0, 0.0), (0.0, 1.0), (0.0, 0.5), p1) == 1.5

    rng = np.random.default_rng(0)
    floor = min(
        triplet_loss(rng.normal(size=3), rng.normal(size=3), rng.normal(size=3), p1)
        for _ in range(1000)
    )
    assert floor >= 0.0
    print(f"PASS loss unit values: five closed-form values exact, "
          f"min of 1000 random triplet losses {floor:.4f} >= 0")


def test_segment_command_determinism(tmp_path):
    """Identical config and inputs give byte-identical label files."""
    data = tmp_path / "data"
    rc = main([
        "synth", "--out", str(data), "--images", "1", "--seed", "4",
        "--height", "24", "--width", "24", "--segments", "3",
        "--separation", "8", "--noise-sigma", "0.5",
    ])
    assert rc == 0
    outputs = []
    for name in ("first.dgst", "second.dgst"):
        out = tmp_path / name
        rc = main([
            "segment", "--embedding", str(data / "emb_000.dgst"),
            "--edges", str(data / "edges_000.dgst"), "--out", str(out),
            "--erosion-radii", "3,0", "--min-region-area", "4",
        ])
        assert rc == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
    print(f"PASS determinism: two segment runs identical "
          f"({len(outputs[0])} bytes each)")
