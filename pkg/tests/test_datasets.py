"""Synthetic benchmark generators and label-driven similarity sampling."""

import numpy as np
import pytest

from fasthash.core import FeatureMatrix
from fasthash.datasets import (
    Dataset,
    build_similarity,
    gaussian_clusters,
    lsh_codes,
    xor_clusters,
)


class TestDataset:
    def test_split_accessors(self):
        fm = FeatureMatrix(np.arange(12, dtype=float).reshape(6, 2))
        data = Dataset(fm, np.array([0, 0, 1, 1, 2, 2]), np.arange(4), np.array([4, 5]))
        feats, labels = data.db()
        assert feats.n_examples == 4
        np.testing.assert_array_equal(labels, [0, 0, 1, 1])
        feats, labels = data.query()
        np.testing.assert_array_equal(labels, [2, 2])

    def test_list_labels_subset(self):
        fm = FeatureMatrix(np.zeros((3, 1)))
        data = Dataset(fm, [{"a"}, {"b"}, {"c"}], np.array([0, 1]), np.array([2]))
        _, labels = data.query()
        assert labels == [{"c"}]

    def test_validation(self):
        fm = FeatureMatrix(np.zeros((3, 1)))
        with pytest.raises(ValueError):
            Dataset(fm, [0, 1], np.array([0]), np.array([1]))
        with pytest.raises(ValueError):
            Dataset(fm, [0, 1, 2], np.array([0]), np.array([9]))


class TestGenerators:
    def test_gaussian_clusters_shapes_and_determinism(self):
        a = gaussian_clusters(50, 10, n_dims=7, n_clusters=4, seed=3)
        b = gaussian_clusters(50, 10, n_dims=7, n_clusters=4, seed=3)
        assert a.features.values.shape == (60, 7)
        np.testing.assert_array_equal(a.features.values, b.features.values)
        np.testing.assert_array_equal(a.labels, b.labels)
        assert set(np.unique(a.labels)) <= set(range(4))
        assert a.db_indices.size == 50 and a.query_indices.size == 10

    def test_gaussian_clusters_are_separated(self):
        data = gaussian_clusters(200, 5, n_dims=20, n_clusters=3,
                                 center_scale=2.0, noise=0.2, seed=1)
        x, labels = data.db()
        centers = np.stack([x.values[labels == c].mean(axis=0) for c in range(3)])
        # every point sits closest to its own cluster mean
        d = np.linalg.norm(x.values[:, None, :] - centers[None], axis=2)
        np.testing.assert_array_equal(np.argmin(d, axis=1), labels)

    def test_xor_corner_structure(self):
        data = xor_clusters(400, 5, n_dims=5, offset=2.0, noise=0.3, seed=2)
        x, labels = data.db()
        prod = x.values[:, 0] * x.values[:, 1]
        # class 0 occupies the (+,+)/(-,-) corners, class 1 the others
        assert prod[labels == 0].mean() > 1.0
        assert prod[labels == 1].mean() < -1.0

    def test_xor_not_linearly_separated_on_axes(self):
        data = xor_clusters(400, 5, seed=4)
        x, labels = data.db()
        for dim in range(2):
            side = x.values[:, dim] > 0
            # either half-space holds a near-even class mix
            frac = labels[side].mean()
            assert 0.3 < frac < 0.7

    def test_lsh_codes(self):
        fm = FeatureMatrix(np.random.default_rng(0).normal(size=(10, 4)))
        a = lsh_codes(fm, 16, seed=5)
        b = lsh_codes(fm, 16, seed=5)
        assert a.bit_count == 16 and a.n_examples == 10
        np.testing.assert_array_equal(a.words, b.words)


class TestBuildSimilarity:
    def test_multiclass_signs_follow_labels(self):
        labels = np.array([0, 0, 1, 1, 2])
        sim = build_similarity(labels, max_neighbors=10, seed=0)
        for i, j, s in zip(sim.pair_i, sim.pair_j, sim.pair_sign):
            assert s == (1 if labels[i] == labels[j] else -1)

    def test_small_cap_limits_draws(self):
        labels = np.zeros(30, dtype=int)  # one class: similar pairs only
        sim = build_similarity(labels, max_neighbors=2, seed=1)
        # each example draws exactly 2, union-symmetrized: between n and 2n
        assert 30 <= sim.pair_count <= 60
        assert np.all(sim.pair_sign == 1)

    def test_deterministic(self):
        labels = np.random.default_rng(0).integers(3, size=40)
        a = build_similarity(labels, max_neighbors=5, seed=7)
        b = build_similarity(labels, max_neighbors=5, seed=7)
        np.testing.assert_array_equal(a.pair_i, b.pair_i)
        np.testing.assert_array_equal(a.pair_j, b.pair_j)
        np.testing.assert_array_equal(a.pair_sign, b.pair_sign)

    def test_singleton_class_warns(self, caplog):
        labels = np.array([0, 0, 0, 7])
        with caplog.at_level("WARNING", logger="fasthash.datasets"):
            sim = build_similarity(labels, seed=0)
        assert "single example" in caplog.text
        assert sim.sign_of(0, 3) == -1  # still gets dissimilar pairs

    def test_multilabel_shared_tag_rules(self):
        tags = [
            frozenset({"a", "b", "c"}),
            frozenset({"a", "b"}),
            frozenset({"a"}),
            frozenset({"z"}),
        ]
        sim = build_similarity(tags, mode="multilabel", max_neighbors=10, seed=0)
        assert sim.sign_of(0, 1) == 1    # two shared tags
        assert sim.sign_of(0, 2) == 0    # exactly one shared: undefined
        assert sim.sign_of(1, 2) == 0
        assert sim.sign_of(0, 3) == -1   # disjoint
        assert sim.sign_of(1, 3) == -1
        assert sim.sign_of(2, 3) == -1

    def test_all_undefined_raises(self):
        tags = [frozenset({"a", "b"}), frozenset({"b", "c"}), frozenset({"c", "a"})]
        with pytest.raises(ValueError, match="no defined pairs"):
            build_similarity(tags, mode="multilabel", seed=0)

    def test_unknown_mode(self):
        with pytest.raises(ValueError, match="unknown similarity mode"):
            build_similarity([0, 1], mode="pairwise")
