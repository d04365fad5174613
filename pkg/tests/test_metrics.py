import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embseg.errors import InvariantError
from embseg.metrics import (
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
from embseg.synth import SynthConfig, generate_segmentation
from embseg.tensors import LabelMap, relabel_contiguous
from oracles import boundary_pixels_reference, covering_reference


def halves(h=8, w=8):
    lab = np.zeros((h, w), dtype=np.int64)
    lab[:, w // 2:] = 1
    return LabelMap(lab)


def pr(threshold, p_num, p_den, r_num, r_den):
    precision = p_num / p_den if p_den else 1.0
    recall = r_num / r_den if r_den else 1.0
    f = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PrPoint(threshold, precision, recall, f, p_num, p_den, r_num, r_den)


class TestBoundaryPixels:
    def test_matches_reference(self, rng):
        for _ in range(10):
            lab = relabel_contiguous(rng.integers(0, 3, (7, 9)))
            got = {tuple(p) for p in boundary_pixels(lab)}
            assert got == boundary_pixels_reference(lab.labels)

    def test_uniform_map_has_none(self):
        assert len(boundary_pixels(LabelMap(np.zeros((5, 5), dtype=np.int64)))) == 0


class TestBoundaryF:
    def test_perfect_match(self):
        pt = boundary_f(halves(), halves())
        assert pt.precision == pt.recall == pt.f_measure == 1.0

    def test_one_pixel_shift_inside_tolerance(self):
        lab = np.zeros((8, 8), dtype=np.int64)
        lab[:, 5:] = 1
        pt = boundary_f(LabelMap(lab), halves(), tol=2.0)
        assert pt.f_measure == 1.0

    def test_one_pixel_shift_outside_tolerance(self):
        lab = np.zeros((8, 8), dtype=np.int64)
        lab[:, 5:] = 1
        pt = boundary_f(LabelMap(lab), halves(), tol=0.0)
        assert pt.f_measure == 0.0

    def test_no_machine_boundary_gives_full_precision_zero_recall(self):
        pt = boundary_f(LabelMap(np.zeros((8, 8), dtype=np.int64)), halves())
        assert pt.precision == 1.0  # vacuous: no claims made
        assert pt.recall == 0.0

    def test_matching_is_one_to_one(self):
        # two machine boundary columns compete for one gt column
        m = np.zeros((4, 6), dtype=np.int64)
        m[:, 2:] = 1
        m[:, 4:] = 2
        pt = boundary_f(LabelMap(m), halves(4, 6), tol=3.0)
        assert pt.p_den == 8 and pt.r_den == 4
        assert pt.p_num == 4  # only one machine pixel per gt pixel


class TestRegionF:
    def test_perfect_match(self):
        pt = region_f(halves(), halves())
        assert pt.f_measure == 1.0

    def test_split_quarters_rejected_above_gamma_half(self):
        m = np.zeros((8, 8), dtype=np.int64)
        m[:, 4:] = 1
        m[4:, 4:] = 2  # right half split in two -> each quarter has Jaccard 0.5
        pt = region_f(LabelMap(m), halves(), jaccard_gamma=0.6)
        assert pt.p_num == 1 and pt.p_den == 3
        assert pt.r_num == 1 and pt.r_den == 2

    def test_gamma_half_accepts_splits_but_claims_one_to_one(self):
        m = np.zeros((8, 8), dtype=np.int64)
        m[:, 4:] = 1
        m[4:, 4:] = 2
        pt = region_f(LabelMap(m), halves(), jaccard_gamma=0.5)
        assert pt.p_num == 3
        # both quarters qualify but only one can claim the right gt half
        assert pt.r_num == 2


class TestCovering:
    def test_identity_is_one(self):
        assert covering(halves(), halves()) == 1.0

    def test_halves_against_single_region(self):
        single = LabelMap(np.zeros((8, 8), dtype=np.int64))
        assert covering(halves(), single) == pytest.approx(0.5)

    def test_matches_reference(self, rng):
        for seed in range(5):
            cfg = SynthConfig(rng_seed=seed, height=12, width=12, segment_count=3)
            gt = generate_segmentation(cfg)
            m = relabel_contiguous(rng.integers(0, 4, (12, 12)))
            assert covering(m, gt) == pytest.approx(covering_reference(m.labels, gt.labels))

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_label_permutation_invariant(self, seed):
        r = np.random.default_rng(seed)
        gt = generate_segmentation(SynthConfig(rng_seed=seed, height=10, width=10, segment_count=3))
        m = relabel_contiguous(r.integers(0, 4, (10, 10)))
        perm = r.permutation(m.segment_count)
        permuted = relabel_contiguous(perm[m.labels])
        assert covering(permuted, gt) == pytest.approx(covering(m, gt))


class TestAggregate:
    def curves(self):
        img_a = [pr(0.3, 3, 4, 3, 5), pr(0.6, 2, 4, 4, 5)]
        img_b = [pr(0.3, 1, 2, 1, 3), pr(0.6, 2, 2, 2, 3)]
        return [img_a, img_b]

    def test_hand_computed_ods_ois_ap(self):
        summary = aggregate(self.curves())
        assert summary.ods == pytest.approx(12.0 / 17.0)
        assert summary.ois == pytest.approx(11.0 / 15.0)
        assert summary.ap == pytest.approx(0.5)

    def test_ois_at_least_ods(self):
        summary = aggregate(self.curves())
        assert summary.ois >= summary.ods

    def test_pooling_requires_shared_grid(self):
        with pytest.raises(InvariantError):
            pooled_curve([[pr(0.3, 1, 2, 1, 2)], [pr(0.4, 1, 2, 1, 2)]])

    def test_pooled_counts_sum(self):
        pooled = pooled_curve(self.curves())
        assert (pooled[0].p_num, pooled[0].p_den) == (4, 6)
        assert (pooled[1].r_num, pooled[1].r_den) == (6, 8)


class TestGridSearch:
    def test_exhaustive_product_and_best(self):
        space = {"a": [1, 2, 3], "b": [10, 20]}
        best, results = grid_search(space, lambda p: p["a"] * p["b"])
        assert len(results) == 6
        assert best == {"a": 3, "b": 20}

    def test_failures_score_neg_inf_and_recorded(self):
        def evaluate(p):
            if p["a"] == 2:
                raise ValueError("boom")
            return p["a"]

        best, results = grid_search({"a": [1, 2, 3]}, evaluate)
        assert best == {"a": 3}
        failed = [r for r in results if r[2] is not None]
        assert len(failed) == 1
        assert failed[0][2] == "ValueError: boom"

    def test_ties_keep_first(self):
        best, _ = grid_search({"a": [1, 2]}, lambda p: 0.0)
        assert best == {"a": 1}


class TestReports:
    def test_csv_layout(self, tmp_path):
        path = tmp_path / "pr.csv"
        write_pr_csv(path, [pr(0.5, 1, 2, 1, 2)])
        lines = path.read_text().splitlines()
        assert lines[0] == "threshold,precision,recall,f"
        assert lines[1].startswith("0.5,0.5,0.5,")

    def test_svg_written(self, tmp_path):
        path = tmp_path / "pr.svg"
        write_pr_svg(path, {"region": [pr(0.3, 1, 2, 1, 2), pr(0.6, 3, 4, 2, 4)]})
        text = path.read_text()
        assert text.startswith("<svg") and "polyline" in text
