import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embseg.errors import InvariantError
from embseg.geodesic import GeodesicField
from embseg.seeds import SeedRegionSet
from embseg.tensors import EmbeddingField
from embseg.unary import (
    GaussianSegmentModel,
    UnaryField,
    UnaryParams,
    fit_segment_gaussians,
    mahalanobis_sq,
    posterior_field,
    unary_argmax,
)
from oracles import variance_welford


class TestParams:
    def test_defaults(self):
        p = UnaryParams()
        assert (p.c_r, p.c_g) == (1.25, 0.5)

    def test_both_weights_zero_rejected(self):
        with pytest.raises(InvariantError):
            UnaryParams(c_r=0.0, c_g=0.0)

    def test_negative_weight_rejected(self):
        with pytest.raises(InvariantError):
            UnaryParams(c_r=-1.0)

    def test_variance_floor_positive(self):
        with pytest.raises(InvariantError):
            UnaryParams(variance_floor=0.0)


class TestModelFit:
    def test_matches_welford_variance(self, rng):
        emb = EmbeddingField(rng.standard_normal((4, 6, 3)))
        seeds = SeedRegionSet((4, 6), [[0, 1, 2, 6], [15, 16]], check_connectivity=False)
        model = fit_segment_gaussians(emb, seeds, floor=1e-12)
        data = emb.data.reshape(-1, 3).astype(np.float64)
        for j, region in enumerate(seeds.regions):
            vecs = data[region]
            assert np.allclose(model.means[j], vecs.mean(axis=0), atol=1e-12)
            for c in range(3):
                assert model.variances[j, c] == pytest.approx(variance_welford(vecs[:, c]), rel=1e-9)

    def test_singleton_seed_hits_floor(self):
        emb = EmbeddingField(np.arange(8, dtype=float).reshape(2, 2, 2))
        seeds = SeedRegionSet((2, 2), [[0]])
        model = fit_segment_gaussians(emb, seeds, floor=1e-4)
        assert np.all(model.variances == 1e-4)
        assert np.allclose(model.means[0], [0.0, 1.0])

    def test_model_validates_shapes(self):
        with pytest.raises(InvariantError):
            GaussianSegmentModel(np.zeros((2, 3)), np.zeros((2, 2)))
        with pytest.raises(InvariantError):
            GaussianSegmentModel(np.zeros((2, 3)), np.zeros((2, 3)))  # variance not > 0


class TestMahalanobis:
    def test_hand_value(self):
        model = GaussianSegmentModel(np.zeros((1, 2)), np.array([[1.0, 4.0]]))
        assert mahalanobis_sq([1.0, 2.0], model, 0) == pytest.approx(2.0, abs=0)

    def test_depth_mismatch(self):
        model = GaussianSegmentModel(np.zeros((1, 2)), np.ones((1, 2)))
        with pytest.raises(InvariantError):
            mahalanobis_sq([1.0, 2.0, 3.0], model, 0)


class TestPosterior:
    def test_geodesic_only_closed_form(self):
        # softmax(-[0, ln 3]) = (0.75, 0.25)
        emb = EmbeddingField(np.zeros((1, 1, 2)))
        model = GaussianSegmentModel(np.zeros((2, 2)), np.ones((2, 2)))
        geo = [GeodesicField(np.zeros((1, 1))), GeodesicField(np.full((1, 1), np.log(3.0)))]
        z = posterior_field(emb, model, geo, UnaryParams(c_r=0.0, c_g=1.0))
        assert np.allclose(z.data[0, 0], [0.75, 0.25], atol=1e-12)

    def test_representation_only_prefers_nearer_mean(self):
        emb = EmbeddingField(np.array([[[0.0], [4.0]]]))
        model = GaussianSegmentModel(np.array([[0.0], [4.0]]), np.ones((2, 1)))
        z = posterior_field(emb, model, None, UnaryParams(c_r=1.25, c_g=0.0))
        assert z.data[0, 0, 0] > 0.5 > z.data[0, 0, 1]
        assert z.data[0, 1, 1] > 0.5 > z.data[0, 1, 0]

    def test_rows_sum_to_one(self, rng):
        emb = EmbeddingField(rng.standard_normal((5, 5, 3)))
        seeds = SeedRegionSet((5, 5), [[0, 1], [20, 21], [12]], check_connectivity=False)
        model = fit_segment_gaussians(emb, seeds)
        z = posterior_field(emb, model, None, UnaryParams(c_r=1.25, c_g=0.0))
        assert np.allclose(z.data.sum(axis=2), 1.0, atol=1e-6)

    def test_missing_geo_fields_rejected(self):
        emb = EmbeddingField(np.zeros((1, 1, 2)))
        model = GaussianSegmentModel(np.zeros((2, 2)), np.ones((2, 2)))
        with pytest.raises(InvariantError):
            posterior_field(emb, model, None, UnaryParams(c_r=1.0, c_g=0.5))
        with pytest.raises(InvariantError):
            posterior_field(emb, model, [GeodesicField(np.zeros((1, 1)))], UnaryParams(c_r=1.0, c_g=0.5))

    def test_geo_grid_mismatch_rejected(self):
        emb = EmbeddingField(np.zeros((1, 1, 2)))
        model = GaussianSegmentModel(np.zeros((1, 2)), np.ones((1, 2)))
        with pytest.raises(InvariantError):
            posterior_field(emb, model, [GeodesicField(np.zeros((2, 2)))], UnaryParams(c_r=0.0, c_g=0.5))

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_seed_permutation_permutes_columns(self, seed):
        r = np.random.default_rng(seed)
        emb = EmbeddingField(r.standard_normal((3, 4, 2)))
        means = r.standard_normal((3, 2))
        variances = r.uniform(0.5, 2.0, (3, 2))
        model = GaussianSegmentModel(means, variances)
        perm = r.permutation(3)
        permuted = GaussianSegmentModel(means[perm], variances[perm])
        p = UnaryParams(c_r=1.25, c_g=0.0)
        z = posterior_field(emb, model, None, p)
        zp = posterior_field(emb, permuted, None, p)
        assert np.allclose(zp.data, z.data[:, :, perm], atol=1e-12)


class TestArgmax:
    def test_ties_to_lowest_and_relabels(self):
        z = UnaryField(np.array([[[0.5, 0.5], [0.2, 0.8]]]))
        lab = unary_argmax(z)
        assert lab.labels.tolist() == [[0, 1]]

    def test_unary_field_validates_rows(self):
        with pytest.raises(InvariantError):
            UnaryField(np.array([[[0.9, 0.3]]]))
