"""Packed codes, similarity pairs, and 256-bin quantization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fasthash.core import (
    NUM_BINS,
    BitMatrix,
    FeatureMatrix,
    SimilarityGraph,
    apply_edges,
    fit_edges,
    hamming_affinity,
    hamming_distance,
    hamming_distances,
    quantize,
    words_per_code,
)


class TestBitMatrix:
    def test_words_per_code(self):
        assert [words_per_code(m) for m in (1, 63, 64, 65, 128, 129)] == [
            1, 1, 1, 2, 2, 3,
        ]

    @pytest.mark.parametrize("m", [1, 7, 63, 64, 65, 100, 128])
    def test_round_trip(self, m):
        rng = np.random.default_rng(m)
        signs = rng.choice([-1, 1], size=(m, 11)).astype(np.int8)
        mat = BitMatrix.from_signs(signs)
        assert mat.bit_count == m
        assert mat.n_examples == 11
        assert mat.words.shape == (11, words_per_code(m))
        np.testing.assert_array_equal(mat.to_signs(), signs)

    def test_column_accessors_match_full_unpack(self):
        rng = np.random.default_rng(0)
        signs = rng.choice([-1, 1], size=(70, 5)).astype(np.int8)
        mat = BitMatrix.from_signs(signs)
        for j in range(5):
            np.testing.assert_array_equal(mat.column_signs(j), signs[:, j])
            np.testing.assert_array_equal(mat.column_words(j), mat.words[j])

    def test_bit_layout_is_little_endian_in_words(self):
        # bit r of a code sits in word r // 64 at position r % 64
        signs = -np.ones((70, 1), dtype=np.int8)
        signs[0, 0] = 1   # lowest bit of word 0
        signs[65, 0] = 1  # bit 1 of word 1
        mat = BitMatrix.from_signs(signs)
        assert mat.words[0, 0] == 1
        assert mat.words[0, 1] == 2

    def test_nonzero_padding_rejected(self):
        words = np.zeros((1, 1), dtype=np.uint64)
        words[0, 0] = np.uint64(1) << np.uint64(63)
        with pytest.raises(ValueError, match="[Pp]adding"):
            BitMatrix(words, 63)
        BitMatrix(words, 64)  # same word is fine at full width

    def test_rejects_bad_signs(self):
        with pytest.raises(ValueError):
            BitMatrix.from_signs(np.zeros((4, 2)))

    @given(
        m=st.integers(min_value=1, max_value=130),
        n=st.integers(min_value=1, max_value=8),
        seed=st.integers(min_value=0, max_value=2**31),
    )
    @settings(max_examples=60, deadline=None)
    def test_round_trip_property(self, m, n, seed):
        rng = np.random.default_rng(seed)
        signs = rng.choice([-1, 1], size=(m, n)).astype(np.int8)
        np.testing.assert_array_equal(BitMatrix.from_signs(signs).to_signs(), signs)


class TestHamming:
    def test_known_distance(self):
        # columns [1, 1, -1, -1] and [1, -1, 1, -1] differ at bits 1 and 2
        signs = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=np.int8)
        mat = BitMatrix.from_signs(signs)
        a, b = mat.column_words(0), mat.column_words(1)
        assert hamming_distance(a, b, 4) == 2
        assert hamming_affinity(a, b, 4) == 4 - 2 * 2

    @pytest.mark.parametrize("m", [1, 64, 65, 100])
    def test_matches_sign_comparison(self, m):
        rng = np.random.default_rng(m + 1)
        signs = rng.choice([-1, 1], size=(m, 20)).astype(np.int8)
        mat = BitMatrix.from_signs(signs)
        for _ in range(30):
            i, j = rng.integers(0, 20, size=2)
            want = int(np.count_nonzero(signs[:, i] != signs[:, j]))
            got = hamming_distance(mat.column_words(i), mat.column_words(j), m)
            assert got == want
            assert hamming_affinity(mat.column_words(i), mat.column_words(j), m) == (
                m - 2 * want
            )

    def test_batch_matches_pairwise(self):
        rng = np.random.default_rng(7)
        signs = rng.choice([-1, 1], size=(96, 40)).astype(np.int8)
        mat = BitMatrix.from_signs(signs)
        q = mat.column_words(3)
        batch = hamming_distances(q, mat)
        want = [hamming_distance(q, mat.column_words(j), 96) for j in range(40)]
        np.testing.assert_array_equal(batch, want)

    def test_distance_axioms(self):
        rng = np.random.default_rng(11)
        signs = rng.choice([-1, 1], size=(33, 6)).astype(np.int8)
        mat = BitMatrix.from_signs(signs)
        for i in range(6):
            assert hamming_distance(mat.column_words(i), mat.column_words(i), 33) == 0
            for j in range(6):
                dij = hamming_distance(mat.column_words(i), mat.column_words(j), 33)
                dji = hamming_distance(mat.column_words(j), mat.column_words(i), 33)
                assert dij == dji
                assert 0 <= dij <= 33


class TestSimilarityGraph:
    def test_canonical_order_and_symmetry(self):
        g = SimilarityGraph.from_pairs(5, [(3, 1, -1), (0, 2, 1), (4, 0, 1)])
        np.testing.assert_array_equal(g.pair_i, [0, 0, 1])
        np.testing.assert_array_equal(g.pair_j, [2, 4, 3])
        np.testing.assert_array_equal(g.pair_sign, [1, 1, -1])
        assert g.sign_of(1, 3) == -1
        assert g.sign_of(3, 1) == -1
        assert g.sign_of(0, 1) == 0
        nbrs, sgns = g.neighbors(0)
        np.testing.assert_array_equal(nbrs, [2, 4])
        np.testing.assert_array_equal(sgns, [1, 1])

    def test_neighbor_lists_sorted(self):
        rng = np.random.default_rng(5)
        from conftest import random_similarity

        g = random_similarity(rng, 30)
        for i in range(30):
            nbrs, _ = g.neighbors(i)
            assert np.all(np.diff(nbrs) > 0)

    def test_duplicate_pair_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            SimilarityGraph.from_pairs(4, [(0, 1, 1), (1, 0, -1)])

    def test_self_pair_rejected(self):
        with pytest.raises(ValueError):
            SimilarityGraph.from_pairs(4, [(2, 2, 1)])

    def test_bad_sign_rejected(self):
        with pytest.raises(ValueError):
            SimilarityGraph.from_pairs(4, [(0, 1, 2)])

    def test_empty_graph(self):
        g = SimilarityGraph.from_pairs(3, [])
        assert g.pair_count == 0
        nbrs, sgns = g.neighbors(0)
        assert nbrs.size == 0 and sgns.size == 0


class TestFeatureMatrix:
    def test_rejects_nan(self):
        with pytest.raises(ValueError, match="finite"):
            FeatureMatrix(np.array([[0.0, np.nan]]))

    def test_rejects_1d(self):
        with pytest.raises(ValueError):
            FeatureMatrix(np.zeros(4))

    def test_casts_to_float64(self):
        fm = FeatureMatrix(np.arange(6, dtype=np.float32).reshape(2, 3))
        assert fm.values.dtype == np.float64
        assert (fm.n_examples, fm.n_dims) == (2, 3)


class TestQuantization:
    def test_unit_interval_reference_bins(self):
        fm = FeatureMatrix(np.array([[0.0], [0.5], [1.0]]))
        q = quantize(fm)
        np.testing.assert_array_equal(q.bins[:, 0], [0, 128, 255])

    def test_edges_are_linear_over_observed_range(self):
        fm = FeatureMatrix(np.array([[2.0], [10.0]]))
        edges = fit_edges(fm)
        assert edges.shape == (1, NUM_BINS + 1)
        np.testing.assert_allclose(edges[0], 2.0 + np.arange(257) / 256 * 8.0)

    def test_interior_edge_falls_into_right_bin(self):
        fm = FeatureMatrix(np.array([[0.0], [1.0]]))
        edges = fit_edges(fm)
        # a value sitting exactly on edge k belongs to bin k, not k - 1
        probe = FeatureMatrix(edges[0, 1:5].reshape(-1, 1).copy())
        np.testing.assert_array_equal(apply_edges(probe, edges)[:, 0], [1, 2, 3, 4])

    def test_max_value_stays_in_last_bin(self):
        fm = FeatureMatrix(np.array([[0.0], [1.0]]))
        q = quantize(fm)
        assert q.bins[1, 0] == NUM_BINS - 1

    def test_out_of_range_clamps(self):
        train = FeatureMatrix(np.array([[0.0], [1.0]]))
        edges = fit_edges(train)
        probe = FeatureMatrix(np.array([[-5.0], [5.0]]))
        np.testing.assert_array_equal(apply_edges(probe, edges)[:, 0], [0, 255])

    def test_constant_dimension_maps_to_bin_zero(self):
        train = FeatureMatrix(np.full((4, 2), 3.0))
        q = quantize(train)
        np.testing.assert_array_equal(q.bins, 0)
        probe = FeatureMatrix(np.array([[2.0, 9.0]]))
        np.testing.assert_array_equal(apply_edges(probe, q.edges), 0)

    def test_binning_is_monotone_in_value(self):
        rng = np.random.default_rng(3)
        fm = FeatureMatrix(rng.normal(size=(200, 1)))
        q = quantize(fm)
        order = np.argsort(fm.values[:, 0], kind="stable")
        assert np.all(np.diff(q.bins[order, 0].astype(int)) >= 0)

    @given(seed=st.integers(min_value=0, max_value=2**31))
    @settings(max_examples=40, deadline=None)
    def test_quantize_reapply_is_identical(self, seed):
        rng = np.random.default_rng(seed)
        fm = FeatureMatrix(rng.normal(size=(30, 4)))
        q = quantize(fm)
        np.testing.assert_array_equal(apply_edges(fm, q.edges), q.bins)
