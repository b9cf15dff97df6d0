"""Exact min-cut solving and the energy-to-cut reduction."""

import itertools

import numpy as np
import pytest
from conftest import enumerate_min_cut, enumerate_min_energy, random_cut_graph, random_energy

from fasthash.errors import SubmodularityError
from fasthash.maxflow import (
    CutGraph,
    EnergyInstance,
    cut_value,
    max_flow,
    minimize_energy,
    reduce_energy_to_cut,
)


class TestCutGraph:
    def test_terminal_ids(self):
        g = CutGraph(3)
        assert (g.source, g.sink) == (3, 4)

    def test_rejects_bad_arcs(self):
        g = CutGraph(2)
        with pytest.raises(ValueError):
            g.add_arc(0, 0, 1.0)
        with pytest.raises(ValueError):
            g.add_arc(0, 9, 1.0)
        with pytest.raises(ValueError):
            g.add_arc(0, 1, -1.0)
        with pytest.raises(ValueError):
            g.add_arc(0, 1, np.inf)

    def test_frozen_graph_refuses_new_arcs(self):
        g = CutGraph(1)
        g.add_arc(g.source, 0, 1.0)
        g.add_arc(0, g.sink, 1.0)
        max_flow(g)
        with pytest.raises(RuntimeError, match="frozen"):
            g.add_arc(g.source, 0, 1.0)

    def test_from_arrays_matches_incremental(self):
        a = CutGraph(2)
        a.add_arc(a.source, 0, 2.0)
        a.add_arc(0, 1, 1.0, 1.0)
        a.add_arc(1, a.sink, 2.0)
        b = CutGraph.from_arrays(2, [2, 0, 1], [0, 1, 3], [2.0, 1.0, 2.0],
                                 [0.0, 1.0, 0.0])
        fa, sa = max_flow(a)
        fb, sb = max_flow(b)
        assert fa == fb == 1.0
        np.testing.assert_array_equal(sa, sb)


class TestMaxFlow:
    def test_single_chain(self):
        g = CutGraph(1)
        g.add_arc(g.source, 0, 3.0)
        g.add_arc(0, g.sink, 5.0)
        flow, side = max_flow(g)
        assert flow == 3.0
        # the bottleneck is the source arc, so node 0 ends sink-side
        np.testing.assert_array_equal(side, [False])

    def test_parallel_paths(self):
        g = CutGraph(2)
        g.add_terminal(0, 4.0, 4.0)
        g.add_terminal(1, 3.0, 3.0)
        flow, _ = max_flow(g)
        assert flow == 7.0

    def test_cross_arc_network(self):
        # routing through 0 -> 1 lifts the flow from 4 to 5
        g = CutGraph(2)
        g.add_arc(g.source, 0, 3.0)
        g.add_arc(g.source, 1, 2.0)
        g.add_arc(0, 1, 5.0)
        g.add_arc(0, g.sink, 2.0)
        g.add_arc(1, g.sink, 3.0)
        flow, side = max_flow(g)
        assert flow == 5.0
        assert cut_value(g, side) == 5.0

    def test_needs_residual_reversal(self):
        # classic instance where a naive augmenting order must push flow back
        g = CutGraph(2)
        g.add_arc(g.source, 0, 1.0)
        g.add_arc(g.source, 1, 1.0)
        g.add_arc(0, 1, 1.0)
        g.add_arc(0, g.sink, 1.0)
        g.add_arc(1, g.sink, 1.0)
        flow, _ = max_flow(g)
        assert flow == 2.0

    def test_disconnected_sink(self):
        g = CutGraph(2)
        g.add_arc(g.source, 0, 4.0)
        g.add_arc(0, 1, 2.0)
        flow, side = max_flow(g)
        assert flow == 0.0
        np.testing.assert_array_equal(side, [True, True])

    def test_solve_does_not_mutate(self):
        rng = np.random.default_rng(0)
        g = random_cut_graph(rng, max_nodes=6)
        f1, s1 = max_flow(g)
        f2, s2 = max_flow(g)
        assert f1 == f2
        np.testing.assert_array_equal(s1, s2)

    def test_flow_equals_exhaustive_min_cut(self):
        """On integer capacities the flow value is exact, so compare == ."""
        rng = np.random.default_rng(123)
        for _ in range(60):
            g = random_cut_graph(rng, max_nodes=7)
            flow, side = max_flow(g)
            assert flow == enumerate_min_cut(g)
            assert cut_value(g, side) == flow  # returned labeling is optimal

    def test_real_capacities_close_to_exhaustive(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            k = int(rng.integers(2, 6))
            g = CutGraph(k)
            for v in range(k):
                g.add_arc(g.source, v, float(rng.uniform(0, 5)))
                g.add_arc(v, g.sink, float(rng.uniform(0, 5)))
            for u in range(k):
                for v in range(u + 1, k):
                    if rng.random() < 0.5:
                        g.add_arc(u, v, float(rng.uniform(0, 3)),
                                  float(rng.uniform(0, 3)))
            flow, side = max_flow(g)
            best = enumerate_min_cut(g)
            np.testing.assert_allclose(flow, best, rtol=1e-9)
            np.testing.assert_allclose(cut_value(g, side), best, rtol=1e-9)


class TestEnergyInstance:
    def test_value_by_hand(self):
        e = EnergyInstance([[0.0, 1.0], [0.0, 2.0]], [0], [1], [-1.0])
        assert e.value(np.array([-1, -1])) == -1.0
        assert e.value(np.array([-1, 1])) == 3.0
        assert e.value(np.array([1, -1])) == 2.0
        assert e.value(np.array([1, 1])) == 2.0

    def test_positive_pair_coefficient_rejected(self):
        with pytest.raises(SubmodularityError):
            EnergyInstance([[0.0, 0.0], [0.0, 0.0]], [0], [1], [0.5])

    def test_zero_coefficient_allowed(self):
        e = EnergyInstance([[0.0, 0.0], [0.0, 0.0]], [0], [1], [0.0])
        assert e.value(np.array([1, -1])) == 0.0

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            EnergyInstance(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            EnergyInstance(np.zeros((2, 2)), [0], [0], [-1.0])
        with pytest.raises(ValueError):
            EnergyInstance([[np.nan, 0.0]])


class TestReduction:
    def test_cut_tracks_energy_on_every_labeling(self):
        """cut(labeling) = energy(z) + offset holds for all assignments.

        source-side corresponds to z = -1. The identity over the whole cube,
        not just the minimum, pins the reduction's algebra completely.
        """
        rng = np.random.default_rng(9)
        for _ in range(40):
            k = int(rng.integers(1, 7))
            e = random_energy(rng, k, integer=False)
            graph, offset = reduce_energy_to_cut(e)
            for bits in itertools.product((-1, 1), repeat=k):
                z = np.asarray(bits, dtype=np.int8)
                got = cut_value(graph, z == -1)
                np.testing.assert_allclose(got, e.value(z) + offset,
                                           rtol=1e-12, atol=1e-9)

    def test_terminal_capacities_are_nonnegative(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            e = random_energy(rng, int(rng.integers(1, 8)))
            graph, _ = reduce_energy_to_cut(e)
            _, arc_cap, *_ = graph.freeze()
            assert np.all(arc_cap >= 0.0)


class TestMinimizeEnergy:
    def test_unary_only(self):
        z, v = minimize_energy(EnergyInstance([[5.0, 2.0]]))
        assert z[0] == 1 and v == 2.0
        z, v = minimize_energy(EnergyInstance([[1.0, 4.0]]))
        assert z[0] == -1 and v == 1.0

    def test_two_node_hand_case(self):
        e = EnergyInstance([[0.0, 1.0], [0.0, 2.0]], [0], [1], [-1.0])
        z, v = minimize_energy(e)
        np.testing.assert_array_equal(z, [-1, -1])
        assert v == -1.0

    def test_matches_exhaustive_on_random_instances(self):
        rng = np.random.default_rng(77)
        for _ in range(80):
            e = random_energy(rng, int(rng.integers(1, 10)))
            _, best = enumerate_min_energy(e)
            z, v = minimize_energy(e)
            assert v == e.value(z)
            assert v == best  # integer-valued instance, exact agreement

    def test_real_valued_instances(self):
        rng = np.random.default_rng(13)
        for _ in range(30):
            e = random_energy(rng, int(rng.integers(1, 9)), integer=False)
            _, best = enumerate_min_energy(e)
            _, v = minimize_energy(e)
            np.testing.assert_allclose(v, best, rtol=1e-9)

    def test_deterministic_under_ties(self):
        # all-equal unaries with a coupling pair: two optimal assignments
        e = EnergyInstance(np.zeros((3, 2)), [0, 1], [1, 2], [-1.0, -1.0])
        z1, v1 = minimize_energy(e)
        z2, v2 = minimize_energy(e)
        assert v1 == v2 == -2.0
        np.testing.assert_array_equal(z1, z2)
