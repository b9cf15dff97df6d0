"""Brute-force oracles and random instance builders shared across tests.

Every oracle here is an independent, direct-from-definition implementation
so tests never compare optimized code against itself.
"""

import itertools

import numpy as np

from fasthash.core import SimilarityGraph
from fasthash.maxflow import CutGraph, EnergyInstance, cut_value


def enumerate_min_energy(energy: EnergyInstance):
    """Exhaustive minimum of a pairwise energy over {-1,+1}^k."""
    best_z, best_v = None, np.inf
    for bits in itertools.product((-1, 1), repeat=energy.k):
        z = np.asarray(bits, dtype=np.int8)
        v = energy.value(z)
        if v < best_v:
            best_z, best_v = z, v
    return best_z, best_v


def enumerate_min_cut(graph: CutGraph) -> float:
    """Exhaustive min s-t cut value over all internal-node labelings."""
    best = np.inf
    for bits in itertools.product((True, False), repeat=graph.node_count):
        best = min(best, cut_value(graph, np.asarray(bits)))
    return best


def random_energy(rng, k, pair_density=0.6, scale=6, integer=True) -> EnergyInstance:
    """Random submodular energy; integer=True keeps every value integral."""
    if integer:
        draw = lambda size: rng.integers(-scale, scale + 1, size=size).astype(float)
    else:
        draw = lambda size: rng.uniform(-scale, scale, size=size)
    unary = draw((k, 2))
    pi, pj = [], []
    for i in range(k):
        for j in range(i + 1, k):
            if rng.random() < pair_density:
                pi.append(i)
                pj.append(j)
    pv = -np.abs(draw(len(pi)))
    return EnergyInstance(unary, pi, pj, pv)


def random_cut_graph(rng, max_nodes=10, max_cap=10) -> CutGraph:
    """Random small network with integer-valued capacities."""
    k = int(rng.integers(2, max_nodes + 1))
    g = CutGraph(k)
    for v in range(k):
        if rng.random() < 0.7:
            g.add_arc(g.source, v, float(rng.integers(1, max_cap + 1)))
        if rng.random() < 0.7:
            g.add_arc(v, g.sink, float(rng.integers(1, max_cap + 1)))
    for u in range(k):
        for v in range(u + 1, k):
            if rng.random() < 0.4:
                g.add_arc(u, v, float(rng.integers(0, max_cap + 1)),
                          float(rng.integers(0, max_cap + 1)))
    return g


def random_similarity(rng, n, p_similar=0.2, p_dissimilar=0.2) -> SimilarityGraph:
    """Random labeled pair set over n examples."""
    pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            r = rng.random()
            if r < p_similar:
                pairs.append((i, j, 1))
            elif r < p_similar + p_dissimilar:
                pairs.append((i, j, -1))
    return SimilarityGraph.from_pairs(n, pairs)


def naive_pair_loss_sum(kind, sim, code_matrix) -> float:
    """Sum of the full loss over all defined pairs, straight from codes.

    code_matrix is (m, n) over {-1,+1}; the loss argument is the Hamming
    distance between full columns.
    """
    from fasthash.loss import loss_value

    m = code_matrix.shape[0]
    total = 0.0
    for i, j, s in zip(sim.pair_i, sim.pair_j, sim.pair_sign):
        d = int(np.count_nonzero(code_matrix[:, i] != code_matrix[:, j]))
        total += loss_value(kind, m, int(s), d)
    return total
