"""Synthetic benchmark data, label-driven similarity graphs, and a trivial
random-projection code baseline."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import BitMatrix, FeatureMatrix, SimilarityGraph

log = logging.getLogger(__name__)

MAX_DENSE_MULTILABEL = 20000


@dataclass(frozen=True)
class Dataset:
    """Features and labels with a database/query split."""

    features: FeatureMatrix
    labels: object
    db_indices: np.ndarray
    query_indices: np.ndarray

    def __post_init__(self):
        n = self.features.n_examples
        if len(self.labels) != n:
            raise ValueError("labels must match the feature row count")
        for name in ("db_indices", "query_indices"):
            idx = np.asarray(getattr(self, name), dtype=np.int64)
            if idx.size == 0 or idx.min() < 0 or idx.max() >= n:
                raise ValueError(f"{name} out of range or empty")
            object.__setattr__(self, name, idx)

    def subset(self, indices) -> tuple[FeatureMatrix, object]:
        feats = FeatureMatrix(self.features.values[indices])
        if isinstance(self.labels, np.ndarray):
            return feats, self.labels[indices]
        return feats, [self.labels[i] for i in indices]

    def db(self):
        return self.subset(self.db_indices)

    def query(self):
        return self.subset(self.query_indices)


def gaussian_clusters(
    n_db: int,
    n_query: int,
    n_dims: int = 100,
    n_clusters: int = 10,
    center_scale: float = 1.0,
    noise: float = 0.35,
    seed=0,
) -> Dataset:
    """Isotropic Gaussian clusters with the cluster id as the class label."""
    rng = np.random.default_rng(seed)
    n = n_db + n_query
    centers = rng.standard_normal((n_clusters, n_dims)) * center_scale
    labels = rng.integers(n_clusters, size=n)
    x = centers[labels] + rng.standard_normal((n, n_dims)) * noise
    return Dataset(
        FeatureMatrix(x),
        labels.astype(np.int64),
        np.arange(n_db),
        np.arange(n_db, n),
    )


def xor_clusters(
    n_db: int,
    n_query: int,
    n_dims: int = 10,
    offset: float = 2.0,
    noise: float = 0.4,
    seed=0,
) -> Dataset:
    """Two classes of two diagonal blobs each: class 0 sits at (+,+) and
    (-,-) in the first two dimensions, class 1 at (+,-) and (-,+), so no
    single hyperplane separates the classes. Remaining dimensions are pure
    noise."""
    rng = np.random.default_rng(seed)
    n = n_db + n_query
    labels = rng.integers(2, size=n)
    corner = rng.integers(2, size=n)  # which of the class's two blobs
    sign0 = np.where(corner == 0, 1.0, -1.0)
    sign1 = np.where(labels == 0, sign0, -sign0)
    x = rng.standard_normal((n, n_dims)) * noise
    x[:, 0] += sign0 * offset
    x[:, 1] += sign1 * offset
    return Dataset(
        FeatureMatrix(x),
        labels.astype(np.int64),
        np.arange(n_db),
        np.arange(n_db, n),
    )


def lsh_codes(features: FeatureMatrix, bit_count: int, seed=0) -> BitMatrix:
    """Random-projection codes, a floor for sanity-checking trained models."""
    rng = np.random.default_rng(seed)
    proj = rng.standard_normal((features.n_dims, bit_count))
    signs = np.where(features.values @ proj >= 0.0, 1, -1).astype(np.int8)
    return BitMatrix.from_signs(signs.T)


def _shared_tag_counts(tag_sets) -> np.ndarray:
    vocab: dict = {}
    for tags in tag_sets:
        for t in tags:
            vocab.setdefault(t, len(vocab))
    incidence = np.zeros((len(tag_sets), len(vocab)), dtype=np.int32)
    for row, tags in enumerate(tag_sets):
        for t in tags:
            incidence[row, vocab[t]] = 1
    return incidence @ incidence.T


def build_similarity(
    labels, mode: str = "multiclass", max_neighbors: int = 100, seed=0
) -> SimilarityGraph:
    """Sample a supervision graph from labels.

    Every example draws up to max_neighbors similar and max_neighbors
    dissimilar partners uniformly without replacement; the union over both
    endpoints defines the pair set. Multiclass: same class is similar,
    different is dissimilar. Multilabel: sharing >= 2 tags is similar,
    sharing none is dissimilar, sharing exactly one leaves the pair
    undefined.
    """
    rng = np.random.default_rng(seed)
    if mode == "multiclass":
        labels = np.asarray(labels)
        n = labels.size
        classes, inverse = np.unique(labels, return_inverse=True)
        members = [np.flatnonzero(inverse == c) for c in range(classes.size)]
        others = [
            np.flatnonzero(inverse != c).astype(np.int64) for c in range(classes.size)
        ]
        for c, m in enumerate(members):
            if m.size == 1:
                log.warning("class %r has a single example: no similar pairs", classes[c])
        sim_pool = lambda i: np.delete(
            members[inverse[i]], np.searchsorted(members[inverse[i]], i)
        )
        dis_pool = lambda i: others[inverse[i]]
    elif mode == "multilabel":
        if len(labels) > MAX_DENSE_MULTILABEL:
            raise ValueError(
                f"multilabel similarity capped at {MAX_DENSE_MULTILABEL} examples"
            )
        n = len(labels)
        shared = _shared_tag_counts(labels)
        sim_pool = lambda i: np.flatnonzero((shared[i] >= 2) & (np.arange(n) != i))
        dis_pool = lambda i: np.flatnonzero(shared[i] == 0)
    else:
        raise ValueError(f"unknown similarity mode {mode!r}")

    pair_i: list[np.ndarray] = []
    pair_j: list[np.ndarray] = []
    pair_s: list[np.ndarray] = []
    isolated = 0
    for i in range(n):
        sims = sim_pool(i)
        diss = dis_pool(i)
        if sims.size == 0:
            isolated += 1
        for pool, sign in ((sims, 1), (diss, -1)):
            if pool.size == 0:
                continue
            take = min(max_neighbors, pool.size)
            picked = rng.choice(pool, size=take, replace=False)
            pair_i.append(np.full(take, i, dtype=np.int64))
            pair_j.append(picked.astype(np.int64))
            pair_s.append(np.full(take, sign, dtype=np.int8))
    if isolated:
        log.warning("%d examples have no similar partner", isolated)
    if not pair_i:
        raise ValueError("no defined pairs could be sampled")
    ii = np.concatenate(pair_i)
    jj = np.concatenate(pair_j)
    ss = np.concatenate(pair_s)
    lo = np.minimum(ii, jj)
    hi = np.maximum(ii, jj)
    key = lo * np.int64(n) + hi
    _, first = np.unique(key, return_index=True)  # union of both endpoints' draws
    return SimilarityGraph(n, lo[first], hi[first], ss[first])
