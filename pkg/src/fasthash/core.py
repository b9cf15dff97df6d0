"""Packed binary codes, pairwise similarity labels, and feature quantization.

Codes live in {-1,+1} at the API surface and are stored as {0,1} bits packed
into little-endian 64-bit words (code value = 2*bit - 1). One example's words
are contiguous so Hamming scans are a single XOR + popcount pass.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

NUM_BINS = 256


def words_per_code(bit_count: int) -> int:
    return (int(bit_count) + 63) // 64


class BitMatrix:
    """An m x n matrix of binary codes, one packed column per example.

    ``words[j]`` holds example j's code: bit r sits in word r // 64 at bit
    position r % 64. Padding bits past ``bit_count`` must stay zero so that
    XOR/popcount distances need no masking.
    """

    __slots__ = ("bit_count", "n_examples", "words")

    def __init__(self, words: np.ndarray, bit_count: int):
        words = np.ascontiguousarray(words, dtype=np.uint64)
        if bit_count < 1:
            raise ValueError("bit_count must be >= 1")
        if words.ndim != 2 or words.shape[1] != words_per_code(bit_count):
            raise ValueError(
                f"words shape {words.shape} does not match bit_count={bit_count}"
            )
        pad = words.shape[1] * 64 - bit_count
        if pad and np.any(words[:, -1] >> np.uint64(64 - pad)):
            raise ValueError("padding bits past bit_count must be zero")
        self.words = words
        self.bit_count = int(bit_count)
        self.n_examples = words.shape[0]

    @classmethod
    def from_signs(cls, signs: np.ndarray) -> "BitMatrix":
        """Pack an (m, n) array over {-1,+1} into code columns."""
        signs = np.asarray(signs)
        if signs.ndim != 2:
            raise ValueError("signs must be 2-D (bits x examples)")
        if not np.all(np.abs(signs) == 1):
            raise ValueError("signs must be -1 or +1")
        m, n = signs.shape
        bits = (signs.T > 0).astype(np.uint8)  # (n, m), bit-per-code-position
        width = words_per_code(m) * 64
        if width != m:
            bits = np.hstack([bits, np.zeros((n, width - m), np.uint8)])
        packed = np.packbits(bits, axis=1, bitorder="little")
        # packbits may hand back a Fortran-ordered result; the word view
        # needs the byte axis contiguous
        return cls(np.ascontiguousarray(packed).view("<u8"), m)

    def to_signs(self) -> np.ndarray:
        """Unpack to an (m, n) int8 array over {-1,+1}."""
        raw = np.unpackbits(
            self.words.reshape(self.n_examples, -1).view(np.uint8),
            axis=1,
            bitorder="little",
        )[:, : self.bit_count]
        return (raw.T.astype(np.int8) << 1) - 1

    def column_words(self, j: int) -> np.ndarray:
        """Packed words of example j (a view, do not mutate)."""
        return self.words[j]

    def column_signs(self, j: int) -> np.ndarray:
        raw = np.unpackbits(
            self.words[j : j + 1].view(np.uint8), axis=1, bitorder="little"
        )[0, : self.bit_count]
        return (raw.astype(np.int8) << 1) - 1


def hamming_distance(a: np.ndarray, b: np.ndarray, bit_count: int) -> int:
    """Hamming distance between two packed code columns of bit_count bits."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    expect = words_per_code(bit_count)
    if a.shape != (expect,) or b.shape != (expect,):
        raise ValueError("code columns do not match bit_count")
    return int(np.bitwise_count(a ^ b).sum())


def hamming_affinity(a: np.ndarray, b: np.ndarray, bit_count: int) -> int:
    """Code inner product, equal to bit_count - 2 * hamming_distance."""
    return bit_count - 2 * hamming_distance(a, b, bit_count)


def hamming_distances(query_words: np.ndarray, db: BitMatrix) -> np.ndarray:
    """Distances from one packed query column to every column of db."""
    query_words = np.asarray(query_words, dtype=np.uint64)
    if query_words.shape != (db.words.shape[1],):
        raise ValueError("query column does not match database bit_count")
    return np.bitwise_count(db.words ^ query_words[None, :]).sum(
        axis=1, dtype=np.int64
    )


class SimilarityGraph:
    """Sparse pairwise supervision: y = +1 similar, y = -1 dissimilar.

    Pairs are stored once in canonical (i < j) order plus a CSR adjacency
    over both directions with neighbor lists sorted by index, which fixes
    every iteration order downstream.
    """

    __slots__ = ("n", "pair_i", "pair_j", "pair_sign", "indptr", "nbr", "sgn")

    def __init__(self, n, pair_i, pair_j, pair_sign):
        self.n = int(n)
        pi = np.asarray(pair_i, dtype=np.int32)
        pj = np.asarray(pair_j, dtype=np.int32)
        ps = np.asarray(pair_sign, dtype=np.int8)
        if not (pi.shape == pj.shape == ps.shape) or pi.ndim != 1:
            raise ValueError("pair arrays must be 1-D and equally sized")
        if np.any(pi == pj):
            raise ValueError("self pairs are not allowed")
        if not np.all(np.abs(ps) == 1):
            raise ValueError("pair signs must be -1 or +1")
        if pi.size and (pi.min() < 0 or max(pi.max(), pj.max()) >= self.n):
            raise ValueError("pair index out of range")
        # canonicalize to i < j, then sort lexicographically
        lo = np.minimum(pi, pj)
        hi = np.maximum(pi, pj)
        order = np.lexsort((hi, lo))
        lo, hi, ps = lo[order], hi[order], ps[order]
        key = lo.astype(np.int64) * self.n + hi
        if np.any(np.diff(key) == 0):
            raise ValueError("duplicate pair")
        self.pair_i, self.pair_j, self.pair_sign = lo, hi, ps

        src = np.concatenate([lo, hi])
        dst = np.concatenate([hi, lo])
        sg = np.concatenate([ps, ps])
        order = np.lexsort((dst, src))
        self.nbr = dst[order]
        self.sgn = sg[order]
        counts = np.bincount(src, minlength=self.n)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    @classmethod
    def from_pairs(cls, n, pairs) -> "SimilarityGraph":
        """Build from an iterable of (i, j, sign) triples."""
        if len(pairs) == 0:
            return cls(n, [], [], [])
        arr = np.asarray(pairs)
        return cls(n, arr[:, 0], arr[:, 1], arr[:, 2])

    @property
    def pair_count(self) -> int:
        return self.pair_i.size

    def neighbors(self, i: int):
        """(neighbor indices, signs) of example i, index-sorted views."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.nbr[lo:hi], self.sgn[lo:hi]

    def sign_of(self, i: int, j: int) -> int:
        """Sign of pair (i, j), or 0 when the pair is undefined."""
        nbrs, sgns = self.neighbors(i)
        pos = np.searchsorted(nbrs, j)
        if pos < nbrs.size and nbrs[pos] == j:
            return int(sgns[pos])
        return 0


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense (n, d) feature array; values must be finite."""

    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("features must be 2-D (examples x dimensions)")
        if not np.all(np.isfinite(values)):
            raise ValueError("features must be finite")
        object.__setattr__(self, "values", values)

    @property
    def n_examples(self) -> int:
        return self.values.shape[0]

    @property
    def n_dims(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class QuantizedFeatures:
    """Features mapped to 256 per-dimension bins.

    ``edges`` is a (d, 257) monotone table: column 0 and 256 hold the fitted
    min/max and columns 1..255 the interior cut points. Bin k covers
    [edges[k], edges[k+1]) with the last bin closed on the right.
    """

    bins: np.ndarray
    edges: np.ndarray

    def __post_init__(self):
        bins = np.ascontiguousarray(self.bins, dtype=np.uint8)
        edges = np.ascontiguousarray(self.edges, dtype=np.float64)
        if bins.ndim != 2 or edges.shape != (bins.shape[1], NUM_BINS + 1):
            raise ValueError("bins (n, d) and edges (d, 257) must agree")
        if np.any(np.diff(edges, axis=1) < 0):
            raise ValueError("edges must be non-decreasing per dimension")
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "edges", edges)


def fit_edges(features: FeatureMatrix) -> np.ndarray:
    """Per-dimension linear bin edges over the observed [min, max] range."""
    x = features.values
    lo = x.min(axis=0)
    hi = x.max(axis=0)
    steps = np.arange(NUM_BINS + 1, dtype=np.float64) / NUM_BINS
    return lo[:, None] + steps[None, :] * (hi - lo)[:, None]


def apply_edges(features: FeatureMatrix, edges: np.ndarray) -> np.ndarray:
    """Bin features with a fitted edge table; out-of-range values clamp.

    Returns an (n, d) uint8 array. A value equal to an interior edge falls in
    the bin to its right (intervals are closed on the left). Dimensions that
    were constant at fit time map everything to bin 0. Clamped values are
    counted and logged, not rejected.
    """
    x = features.values
    edges = np.asarray(edges, dtype=np.float64)
    if edges.shape != (x.shape[1], NUM_BINS + 1):
        raise ValueError("edge table does not match feature dimensionality")
    bins = np.empty(x.shape, dtype=np.uint8)
    clamped = 0
    for dim in range(x.shape[1]):
        col = x[:, dim]
        if edges[dim, 0] == edges[dim, NUM_BINS]:
            bins[:, dim] = 0
            clamped += int(np.count_nonzero(col != edges[dim, 0]))
            continue
        bins[:, dim] = np.searchsorted(edges[dim, 1:NUM_BINS], col, side="right")
        clamped += int(
            np.count_nonzero(col < edges[dim, 0])
            + np.count_nonzero(col > edges[dim, NUM_BINS])
        )
    if clamped:
        log.info("quantization clamped %d out-of-range values", clamped)
    return bins


def quantize(features: FeatureMatrix) -> QuantizedFeatures:
    """Fit bin edges on the given features and quantize them."""
    edges = fit_edges(features)
    return QuantizedFeatures(apply_edges(features, edges), edges)
