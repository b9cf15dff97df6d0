"""Exact s-t max-flow / min-cut and the submodular-energy reduction.

Capacities are float64 throughout; no integer scaling is applied. The solver
is Dinic's algorithm (level graph + blocking flow), which terminates for real
capacities because every augmentation saturates its bottleneck arc exactly.
Residual capacities below RESIDUAL_EPS are treated as empty so floating-point
crumbs cannot spawn endless augmenting paths; with integer-valued capacities
all arithmetic is exact and the flow value is exact as well.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .errors import SubmodularityError

RESIDUAL_EPS = 1e-12


class CutGraph:
    """Directed flow network over ``node_count`` internal nodes plus s and t.

    The source is node ``node_count`` and the sink ``node_count + 1``. Arcs
    are stored in pairs: arc 2k and its reverse 2k+1, so the reverse of arc a
    is always a ^ 1. Construction order fixes the solver's traversal order,
    so identical build sequences give identical cuts.
    """

    def __init__(self, node_count: int):
        if node_count < 1:
            raise ValueError("need at least one internal node")
        self.node_count = int(node_count)
        self._tail: list | np.ndarray = []
        self._head: list | np.ndarray = []
        self._cap: list | np.ndarray = []
        self._rev_cap: list | np.ndarray = []
        self._frozen = None

    @property
    def source(self) -> int:
        return self.node_count

    @property
    def sink(self) -> int:
        return self.node_count + 1

    def _check_node(self, v):
        if not 0 <= v <= self.sink:
            raise ValueError(f"node {v} out of range")

    def add_arc(self, u: int, v: int, cap: float, rev_cap: float = 0.0) -> None:
        """Add arc u -> v with capacity cap and reverse capacity rev_cap."""
        if self._frozen is not None:
            raise RuntimeError("graph already frozen by a solve")
        self._check_node(u)
        self._check_node(v)
        if u == v:
            raise ValueError("self loops are not allowed")
        for c in (cap, rev_cap):
            if not (np.isfinite(c) and c >= 0.0):
                raise ValueError(f"capacity must be finite and >= 0, got {c}")
        self._tail.append(u)
        self._head.append(v)
        self._cap.append(float(cap))
        self._rev_cap.append(float(rev_cap))

    def add_terminal(self, v: int, cap_from_source: float, cap_to_sink: float) -> None:
        if cap_from_source > 0.0:
            self.add_arc(self.source, v, cap_from_source)
        if cap_to_sink > 0.0:
            self.add_arc(v, self.sink, cap_to_sink)

    @classmethod
    def from_arrays(cls, node_count, tail, head, cap, rev_cap=None) -> "CutGraph":
        """Bulk construction from parallel arrays (reverse caps default 0)."""
        g = cls(node_count)
        tail = np.asarray(tail, dtype=np.int64)
        head = np.asarray(head, dtype=np.int64)
        cap = np.asarray(cap, dtype=np.float64)
        if rev_cap is None:
            rev_cap = np.zeros_like(cap)
        else:
            rev_cap = np.asarray(rev_cap, dtype=np.float64)
        if not (tail.shape == head.shape == cap.shape == rev_cap.shape):
            raise ValueError("arc arrays must be parallel")
        if tail.size:
            if tail.min() < 0 or max(tail.max(), head.max()) > g.sink:
                raise ValueError("node index out of range")
            if np.any(tail == head):
                raise ValueError("self loops are not allowed")
            bad = ~(np.isfinite(cap) & (cap >= 0) & np.isfinite(rev_cap) & (rev_cap >= 0))
            if np.any(bad):
                raise ValueError("capacities must be finite and >= 0")
        g._tail, g._head = tail, head
        g._cap, g._rev_cap = cap, rev_cap
        return g

    def freeze(self):
        """Build the paired-arc arrays and CSR adjacency (cached)."""
        if self._frozen is None:
            tail = np.asarray(self._tail, dtype=np.int64)
            head = np.asarray(self._head, dtype=np.int64)
            cap = np.asarray(self._cap, dtype=np.float64)
            rev = np.asarray(self._rev_cap, dtype=np.float64)
            n_all = self.sink + 1
            arc_to = np.empty(2 * tail.size, dtype=np.int64)
            arc_cap = np.empty(2 * tail.size, dtype=np.float64)
            arc_to[0::2] = head
            arc_to[1::2] = tail
            arc_cap[0::2] = cap
            arc_cap[1::2] = rev
            arc_tail = np.empty_like(arc_to)
            arc_tail[0::2] = tail
            arc_tail[1::2] = head
            order = np.argsort(arc_tail, kind="stable").astype(np.int64)
            indptr = np.zeros(n_all + 1, dtype=np.int64)
            np.cumsum(np.bincount(arc_tail, minlength=n_all), out=indptr[1:])
            self._frozen = (arc_to, arc_cap, indptr, order, arc_tail)
        return self._frozen

    @property
    def arc_count(self) -> int:
        return len(self._tail)


@njit(cache=True)
def _dinic(arc_to, res, indptr, adj, source, sink):
    n = indptr.shape[0] - 1
    level = np.empty(n, np.int32)
    queue = np.empty(n, np.int64)
    cursor = np.empty(n, np.int64)
    path = np.empty(n, np.int64)
    total = 0.0
    while True:
        level[:] = -1
        level[source] = 0
        queue[0] = source
        qh, qt = 0, 1
        while qh < qt:
            u = queue[qh]
            qh += 1
            for p in range(indptr[u], indptr[u + 1]):
                a = adj[p]
                v = arc_to[a]
                if res[a] > RESIDUAL_EPS and level[v] < 0:
                    level[v] = level[u] + 1
                    queue[qt] = v
                    qt += 1
        if level[sink] < 0:
            return total
        for i in range(n):
            cursor[i] = indptr[i]
        while True:
            u = source
            depth = 0
            found = False
            while True:
                if u == sink:
                    found = True
                    break
                advanced = False
                while cursor[u] < indptr[u + 1]:
                    a = adj[cursor[u]]
                    v = arc_to[a]
                    if res[a] > RESIDUAL_EPS and level[v] == level[u] + 1:
                        path[depth] = a
                        depth += 1
                        u = v
                        advanced = True
                        break
                    cursor[u] += 1
                if advanced:
                    continue
                if u == source:
                    break
                level[u] = -1  # dead end, prune from this phase
                depth -= 1
                a = path[depth]
                u = arc_to[a ^ 1]
                cursor[u] += 1
            if not found:
                break
            bottleneck = res[path[0]]
            for i in range(1, depth):
                if res[path[i]] < bottleneck:
                    bottleneck = res[path[i]]
            for i in range(depth):
                a = path[i]
                res[a] -= bottleneck
                res[a ^ 1] += bottleneck
            total += bottleneck


@njit(cache=True)
def _source_reachable(arc_to, res, indptr, adj, source):
    n = indptr.shape[0] - 1
    seen = np.zeros(n, np.bool_)
    queue = np.empty(n, np.int64)
    seen[source] = True
    queue[0] = source
    qh, qt = 0, 1
    while qh < qt:
        u = queue[qh]
        qh += 1
        for p in range(indptr[u], indptr[u + 1]):
            a = adj[p]
            v = arc_to[a]
            if res[a] > RESIDUAL_EPS and not seen[v]:
                seen[v] = True
                queue[qt] = v
                qt += 1
    return seen


def max_flow(graph: CutGraph) -> tuple[float, np.ndarray]:
    """Solve the network; returns (flow value, per-node source-side flags).

    The min-cut labeling is the deterministic one: internal nodes reachable
    from the source in the final residual graph are source-side. The graph's
    stored capacities are not mutated, so the same instance can be solved
    repeatedly.
    """
    arc_to, arc_cap, indptr, adj, _ = graph.freeze()
    res = arc_cap.copy()
    flow = _dinic(arc_to, res, indptr, adj, graph.source, graph.sink)
    seen = _source_reachable(arc_to, res, indptr, adj, graph.source)
    return float(flow), seen[: graph.node_count].copy()


def cut_value(graph: CutGraph, source_side: np.ndarray) -> float:
    """Capacity of the cut induced by a source-side labeling (for checks)."""
    source_side = np.asarray(source_side, dtype=bool)
    if source_side.shape != (graph.node_count,):
        raise ValueError("labeling must cover exactly the internal nodes")
    arc_to, arc_cap, indptr, adj, arc_tail = graph.freeze()
    side = np.concatenate([source_side, [True, False]])  # source True, sink False
    crossing = side[arc_tail] & ~side[arc_to]
    return float(arc_cap[crossing].sum())


class EnergyInstance:
    """Binary energy over z in {-1,+1}^k with non-positive pair coefficients.

    energy(z) = sum_i unary[i][z_i] + sum over listed pairs of v_ij z_i z_j,
    each listed pair counted once. A positive v_ij raises SubmodularityError
    because the corresponding energy cannot be minimized by a cut.
    """

    __slots__ = ("unary", "pair_i", "pair_j", "pair_value")

    def __init__(self, unary, pair_i=(), pair_j=(), pair_value=()):
        unary = np.ascontiguousarray(unary, dtype=np.float64)
        if unary.ndim != 2 or unary.shape[1] != 2 or unary.shape[0] < 1:
            raise ValueError("unary must be (k, 2): cost at z=-1, cost at z=+1")
        if not np.all(np.isfinite(unary)):
            raise ValueError("unary costs must be finite")
        pi = np.asarray(pair_i, dtype=np.int64)
        pj = np.asarray(pair_j, dtype=np.int64)
        pv = np.asarray(pair_value, dtype=np.float64)
        if not (pi.shape == pj.shape == pv.shape) or pi.ndim != 1:
            raise ValueError("pair arrays must be parallel 1-D")
        k = unary.shape[0]
        if pi.size:
            if pi.min() < 0 or max(pi.max(), pj.max()) >= k or np.any(pi == pj):
                raise ValueError("pair indices out of range")
            if not np.all(np.isfinite(pv)):
                raise ValueError("pair coefficients must be finite")
            worst = pv.max()
            if worst > 0.0:
                raise SubmodularityError(
                    f"positive pairwise coefficient {worst}: energy is not submodular"
                )
        self.unary = unary
        self.pair_i, self.pair_j, self.pair_value = pi, pj, pv

    @property
    def k(self) -> int:
        return self.unary.shape[0]

    def value(self, z: np.ndarray) -> float:
        z = np.asarray(z)
        if z.shape != (self.k,) or not np.all(np.abs(z) == 1):
            raise ValueError("assignment must be a length-k array over {-1,+1}")
        picks = self.unary[np.arange(self.k), (z > 0).astype(np.int64)]
        total = float(picks.sum())
        if self.pair_i.size:
            total += float(
                (self.pair_value * z[self.pair_i] * z[self.pair_j]).sum()
            )
        return total


def reduce_energy_to_cut(energy: EnergyInstance) -> tuple[CutGraph, float]:
    """Standard reduction: returns (graph, offset) with cut = energy + offset.

    Internal node v labeled source-side in the cut means z_v = -1, sink-side
    means z_v = +1. Each pair term v_ij z_i z_j (v_ij <= 0) becomes one arc
    j -> i of weight -4 v_ij plus unary adjustments of +-2 v_ij; per-node net
    costs are shifted so all terminal capacities are non-negative, with the
    shifts collected into the offset.
    """
    k = energy.k
    c_neg = energy.unary[:, 0].copy()  # cost when z = -1 (source side)
    c_pos = energy.unary[:, 1].copy()
    const = 0.0
    tails = []
    heads = []
    caps = []
    if energy.pair_i.size:
        v = energy.pair_value
        const += float(v.sum())
        np.add.at(c_pos, energy.pair_i, 2.0 * v)
        np.add.at(c_pos, energy.pair_j, -2.0 * v)
        keep = v < 0.0  # zero-weight pairs add nothing
        tails.append(energy.pair_j[keep])
        heads.append(energy.pair_i[keep])
        caps.append(-4.0 * v[keep])
    base = np.minimum(c_neg, c_pos)
    const += float(base.sum())
    from_source = c_pos - base  # charged when the node ends sink-side (z=+1)
    to_sink = c_neg - base
    nodes = np.arange(k, dtype=np.int64)
    src_mask = from_source > 0.0
    snk_mask = to_sink > 0.0
    tails.append(np.full(int(src_mask.sum()), k, dtype=np.int64))
    heads.append(nodes[src_mask])
    caps.append(from_source[src_mask])
    tails.append(nodes[snk_mask])
    heads.append(np.full(int(snk_mask.sum()), k + 1, dtype=np.int64))
    caps.append(to_sink[snk_mask])
    graph = CutGraph.from_arrays(
        k,
        np.concatenate(tails) if tails else [],
        np.concatenate(heads) if heads else [],
        np.concatenate(caps) if caps else [],
    )
    return graph, -const


def minimize_energy(energy: EnergyInstance) -> tuple[np.ndarray, float]:
    """Exact minimizer of a submodular EnergyInstance via one cut.

    Returns (z, energy value). Ties between optimal assignments resolve to
    the residual-reachability labeling of the cut.
    """
    graph, _ = reduce_energy_to_cut(energy)
    _, source_side = max_flow(graph)
    z = np.where(source_side, -1, 1).astype(np.int8)
    return z, energy.value(z)
