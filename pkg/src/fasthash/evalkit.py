"""Hamming-ranking retrieval metrics over packed code matrices."""

from __future__ import annotations

import io
import logging
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .core import BitMatrix, hamming_distances

log = logging.getLogger(__name__)

DEFAULT_PRECISION_K = 100


@dataclass(frozen=True)
class Ranking:
    """Database indices sorted by ascending distance, ties by ascending index."""

    indices: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        if self.indices.shape != self.distances.shape or self.indices.ndim != 1:
            raise ValueError("indices and distances must be parallel 1-D arrays")


def rank(query_words: np.ndarray, db: BitMatrix, k: int | None = None) -> Ranking:
    """Rank the database against one packed query column.

    A stable sort on distance keeps equal-distance entries in index order,
    which pins every downstream metric. k limits the returned prefix.
    """
    dist = hamming_distances(query_words, db)
    order = np.argsort(dist, kind="stable")
    if k is not None:
        if k < 1:
            raise ValueError("k must be >= 1")
        order = order[:k]
    return Ranking(order, dist[order])


class RelevanceOracle:
    """Query/database relevance from class labels or tag overlap."""

    def __init__(self, masks: np.ndarray):
        masks = np.asarray(masks, dtype=bool)
        if masks.ndim != 2:
            raise ValueError("masks must be (n_queries, n_db)")
        self._masks = masks

    @classmethod
    def multiclass(cls, query_labels, db_labels) -> "RelevanceOracle":
        q = np.asarray(query_labels)
        d = np.asarray(db_labels)
        return cls(q[:, None] == d[None, :])

    @classmethod
    def multilabel(cls, query_tags, db_tags, min_shared: int = 2) -> "RelevanceOracle":
        """Relevant means at least min_shared tags in common."""
        masks = np.empty((len(query_tags), len(db_tags)), dtype=bool)
        db_sets = [frozenset(t) for t in db_tags]
        for qi, tags in enumerate(query_tags):
            qs = frozenset(tags)
            masks[qi] = [len(qs & ds) >= min_shared for ds in db_sets]
        return cls(masks)

    @property
    def n_queries(self) -> int:
        return self._masks.shape[0]

    @property
    def n_db(self) -> int:
        return self._masks.shape[1]

    def mask(self, query_index: int) -> np.ndarray:
        return self._masks[query_index]

    def relevant(self, query_index: int, db_index: int) -> bool:
        return bool(self._masks[query_index, db_index])


def precision_at_k(ranking: Ranking, mask: np.ndarray, k: int = DEFAULT_PRECISION_K) -> float:
    """Fraction of relevant items in the top k (top len(ranking) if shorter)."""
    k = min(int(k), ranking.indices.size)
    if k < 1:
        raise ValueError("need a non-empty ranking and k >= 1")
    return float(np.asarray(mask, dtype=bool)[ranking.indices[:k]].sum() / k)


def average_precision(ranking: Ranking, mask: np.ndarray) -> float | None:
    """Mean of precision@p over relevant ranks p; None without relevant items."""
    rel = np.asarray(mask, dtype=bool)[ranking.indices]
    hits = np.flatnonzero(rel)
    if hits.size == 0:
        return None
    precisions = (np.arange(hits.size) + 1.0) / (hits + 1.0)
    return float(precisions.mean())


def mean_average_precision(rankings, oracle: RelevanceOracle) -> float:
    """MAP over full-database rankings; zero-relevant queries are skipped."""
    values = []
    skipped = 0
    for qi, ranking in enumerate(rankings):
        if ranking.indices.size != oracle.n_db:
            raise ValueError("MAP needs full-database rankings")
        ap = average_precision(ranking, oracle.mask(qi))
        if ap is None:
            skipped += 1
        else:
            values.append(ap)
    if skipped:
        log.info("MAP skipped %d queries with no relevant items", skipped)
    if not values:
        raise ValueError("every query had zero relevant items")
    return float(np.mean(values))


def pr_curve(ranking: Ranking, mask: np.ndarray):
    """(recall, precision) arrays over all cutoffs, anchored at recall 0."""
    rel = np.asarray(mask, dtype=bool)[ranking.indices]
    total = int(rel.sum())
    if total == 0:
        return None
    cum = np.cumsum(rel)
    cuts = np.arange(1, rel.size + 1)
    precision = cum / cuts
    recall = cum / total
    recall = np.concatenate([[0.0], recall])
    precision = np.concatenate([[precision[0]], precision])
    return recall, precision


def precision_recall_auc(rankings, oracle: RelevanceOracle) -> float:
    """Mean trapezoidal area under the per-query precision-recall curve."""
    areas = []
    skipped = 0
    for qi, ranking in enumerate(rankings):
        if ranking.indices.size != oracle.n_db:
            raise ValueError("PR-AUC needs full-database rankings")
        curve = pr_curve(ranking, oracle.mask(qi))
        if curve is None:
            skipped += 1
            continue
        recall, precision = curve
        areas.append(float(np.trapezoid(precision, recall)))
    if skipped:
        log.info("PR-AUC skipped %d queries with no relevant items", skipped)
    if not areas:
        raise ValueError("every query had zero relevant items")
    return float(np.mean(areas))


def knn_classify(query_words: np.ndarray, db: BitMatrix, db_labels, k: int):
    """Majority label of the k nearest codes.

    A tied vote resolves to the label of the nearest member among the tied
    labels, which is deterministic because ranking ties go by index.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    top = rank(query_words, db, k=k)
    labels = [db_labels[i] for i in top.indices]
    counts = Counter(labels)
    best = max(counts.values())
    tied = {label for label, c in counts.items() if c == best}
    if len(tied) == 1:
        return tied.pop()
    for label in labels:  # ranking order: nearest first
        if label in tied:
            return label
    raise AssertionError("unreachable")


def knn_accuracy(
    query_codes: BitMatrix, db: BitMatrix, db_labels, query_labels, k: int
) -> float:
    hits = 0
    for qi in range(query_codes.n_examples):
        pred = knn_classify(query_codes.column_words(qi), db, db_labels, k)
        hits += bool(pred == query_labels[qi])
    return hits / query_codes.n_examples


def retrieval_metrics(
    query_codes: BitMatrix,
    db: BitMatrix,
    oracle: RelevanceOracle,
    precision_k: int = DEFAULT_PRECISION_K,
) -> dict:
    """precision@k, MAP, and PR-AUC of query codes against database codes."""
    if query_codes.bit_count != db.bit_count:
        raise ValueError("query and database codes disagree on bit count")
    if oracle.n_queries != query_codes.n_examples or oracle.n_db != db.n_examples:
        raise ValueError("oracle shape does not match the code matrices")
    rankings = [
        rank(query_codes.column_words(qi), db)
        for qi in range(query_codes.n_examples)
    ]
    prec = float(
        np.mean(
            [precision_at_k(r, oracle.mask(qi), precision_k) for qi, r in enumerate(rankings)]
        )
    )
    return {
        "precision_at_k": prec,
        "map": mean_average_precision(rankings, oracle),
        "pr_auc": precision_recall_auc(rankings, oracle),
    }


METRIC_COLUMNS = ("metric", "value", "bits", "method", "seed")


def write_metrics_csv(target, rows) -> None:
    """Write (metric, value, bits, method, seed) rows as CSV."""
    own = isinstance(target, (str, bytes))
    fh = open(target, "w", encoding="utf-8") if own else target
    try:
        fh.write(",".join(METRIC_COLUMNS) + "\n")
        for metric, value, bits, method, seed in rows:
            fh.write(f"{metric},{float(value)!r},{bits},{method},{seed}\n")
    finally:
        if own:
            fh.close()


def format_metrics_table(rows) -> str:
    out = io.StringIO()
    width = max([len(str(r[0])) for r in rows] + [6])
    for metric, value, bits, method, seed in rows:
        out.write(f"{metric:<{width}}  {value:<22}  bits={bits} method={method} seed={seed}\n")
    return out.getvalue()
