"""Hash function learners: boosted decision trees over quantized features,
plus a linear SGD baseline.

Stump search runs on 256-bin quantized features with weighted class
histograms and prefix sums, so every (cut, polarity) candidate of one
dimension is scored in one vectorized pass.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import NUM_BINS, FeatureMatrix, QuantizedFeatures

log = logging.getLogger(__name__)

ERROR_FLOOR = 1e-10  # cap for a zero boosting error inside the alpha formula


def _bins_of(quantized) -> np.ndarray:
    bins = quantized.bins if isinstance(quantized, QuantizedFeatures) else quantized
    bins = np.asarray(bins)
    if bins.ndim != 2 or bins.dtype != np.uint8:
        raise ValueError("quantized features must be an (n, d) uint8 array")
    return bins


def _check_targets(labels, n) -> np.ndarray:
    y = np.asarray(labels)
    if y.shape != (n,) or not np.all(np.abs(y) == 1):
        raise ValueError("targets must be a length-n array over {-1,+1}")
    return y.astype(np.int8)


@dataclass(frozen=True)
class Stump:
    """Decision stump on quantized bins: predict polarity where bin <= cut."""

    dim: int
    threshold_bin: int
    polarity: int

    def __post_init__(self):
        if not 0 <= self.threshold_bin < NUM_BINS:
            raise ValueError("threshold_bin must lie in [0, 255]")
        if self.polarity not in (-1, 1):
            raise ValueError("polarity must be -1 or +1")

    def predict(self, bins: np.ndarray) -> np.ndarray:
        bins = _bins_of(bins)
        side = bins[:, self.dim] <= self.threshold_bin
        return np.where(side, self.polarity, -self.polarity).astype(np.int8)


def train_stump(
    quantized, labels, weights, dims=None, subset=None, require_split=False
):
    """Best single-dimension cut under weighted 0/1 error.

    Scans 255 candidate cuts per dimension via class-weight histograms and
    prefix sums. Returns (stump, weighted error normalized by the total
    weight in play). Ties break to the lowest dimension, then the lowest cut,
    then polarity +1. With require_split=True only cuts with at least one
    example strictly on each side are candidates, and the result is None when
    no such cut exists (all columns constant over the rows in play).
    """
    bins = _bins_of(quantized)
    n, d = bins.shape
    y = _check_targets(labels, n)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be non-negative and finite")
    if subset is not None:
        rows = np.asarray(subset, dtype=np.int64)
        bins_s, y_s, w_s = bins[rows], y[rows], w[rows]
    else:
        bins_s, y_s, w_s = bins, y, w
    total = float(w_s.sum())
    if total <= 0.0:
        raise ValueError("total weight must be positive")
    if dims is None:
        dims = range(d)
    else:
        dims = sorted(int(x) for x in dims)
        if dims and not 0 <= dims[0] <= dims[-1] < d:
            raise ValueError("dimension subset out of range")
    w_pos = w_s * (y_s > 0)
    w_neg = w_s * (y_s < 0)
    total_pos = float(w_pos.sum())
    total_neg = total - total_pos
    best = (np.inf, -1, -1, 0)  # error, dim, cut, polarity
    scores = np.empty(2 * (NUM_BINS - 1))
    for dim in dims:
        col = bins_s[:, dim]
        hp = np.bincount(col, weights=w_pos, minlength=NUM_BINS)
        hn = np.bincount(col, weights=w_neg, minlength=NUM_BINS)
        cp = np.cumsum(hp)[: NUM_BINS - 1]  # +1 mass at bins <= cut
        cn = np.cumsum(hn)[: NUM_BINS - 1]
        scores[0::2] = cn + (total_pos - cp)  # polarity +1 errs
        scores[1::2] = cp + (total_neg - cn)  # polarity -1 errs
        if require_split:
            counts = np.cumsum(np.bincount(col, minlength=NUM_BINS))[: NUM_BINS - 1]
            dead = (counts == 0) | (counts == bins_s.shape[0])
            if dead.all():
                continue
            scores[0::2][dead] = np.inf
            scores[1::2][dead] = np.inf
        k = int(np.argmin(scores))
        if scores[k] < best[0]:
            best = (float(scores[k]), dim, k // 2, 1 if k % 2 == 0 else -1)
    if best[1] < 0:
        if require_split:
            return None
        raise ValueError("no candidate dimension")
    err, dim, cut, pol = best
    return Stump(dim, cut, pol), err / total


@dataclass
class Tree:
    """Depth-limited binary tree in heap layout over quantized features.

    Slot s has children 2s+1 (bin <= cut) and 2s+2. Internal slots carry the
    trained stump fields; leaf slots carry an output in {-1,+1}. Unused slots
    are leaves with output +1 so serialization is byte-stable.
    """

    depth: int
    is_leaf: np.ndarray
    dim: np.ndarray
    cut: np.ndarray
    polarity: np.ndarray
    leaf: np.ndarray

    def __post_init__(self):
        slots = 2 ** (self.depth + 1) - 1
        for name in ("is_leaf", "dim", "cut", "polarity", "leaf"):
            if getattr(self, name).shape != (slots,):
                raise ValueError(f"{name} must have {slots} slots")

    @property
    def slots(self) -> int:
        return self.is_leaf.shape[0]

    def predict(self, bins: np.ndarray) -> np.ndarray:
        bins = _bins_of(bins)
        idx = np.zeros(bins.shape[0], dtype=np.int64)
        for _ in range(self.depth):
            active = ~self.is_leaf[idx]
            if not active.any():
                break
            at = idx[active]
            go_left = bins[np.flatnonzero(active), self.dim[at]] <= self.cut[at]
            idx[active] = 2 * at + np.where(go_left, 1, 2)
        return self.leaf[idx].astype(np.int8)


def train_tree(
    quantized, labels, weights, max_depth: int, rng=None, lazy_fraction: float = 0.0
) -> Tree:
    """Greedy tree of stumps; leaves take the weighted majority label.

    Node splits only consider cuts with examples on both sides. Growth stops
    at max_depth, at a node pure under the weights, or when no remaining cut
    splits the node. With lazy_fraction > 0 every node samples
    ceil(lazy_fraction * d) dimensions to scan instead of all d.
    """
    bins = _bins_of(quantized)
    n, d = bins.shape
    y = _check_targets(labels, n)
    w = np.asarray(weights, dtype=np.float64)
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    if not 0.0 <= lazy_fraction < 1.0:
        raise ValueError("lazy_fraction must lie in [0, 1)")
    rng = np.random.default_rng(rng)
    n_dims = d if lazy_fraction == 0.0 else min(d, math.ceil(lazy_fraction * d))
    slots = 2 ** (max_depth + 1) - 1
    tree = Tree(
        depth=max_depth,
        is_leaf=np.ones(slots, dtype=bool),
        dim=np.zeros(slots, dtype=np.int32),
        cut=np.zeros(slots, dtype=np.uint8),
        polarity=np.ones(slots, dtype=np.int8),
        leaf=np.ones(slots, dtype=np.int8),
    )

    def grow(slot: int, rows: np.ndarray, level: int) -> None:
        wy = w[rows] * y[rows]
        vote = float(wy.sum())
        tree.leaf[slot] = 1 if vote >= 0.0 else -1
        mass_pos = float(w[rows][y[rows] > 0].sum())
        mass_neg = float(w[rows][y[rows] < 0].sum())
        if level == max_depth or mass_pos == 0.0 or mass_neg == 0.0:
            return
        dims = None if n_dims == d else rng.choice(d, size=n_dims, replace=False)
        found = train_stump(bins, y, w, dims=dims, subset=rows, require_split=True)
        if found is None:  # every candidate column is constant here
            return
        stump, _ = found
        left = bins[rows, stump.dim] <= stump.threshold_bin
        if left.all() or not left.any():
            return
        tree.is_leaf[slot] = False
        tree.dim[slot] = stump.dim
        tree.cut[slot] = stump.threshold_bin
        tree.polarity[slot] = stump.polarity
        grow(2 * slot + 1, rows[left], level + 1)
        grow(2 * slot + 2, rows[~left], level + 1)

    grow(0, np.arange(n, dtype=np.int64), 0)
    return tree


@dataclass
class BoostedHash:
    """Weighted vote of boosted trees; the hash output is the vote's sign."""

    trees: list
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (len(self.trees),):
            raise ValueError("one weight per tree required")
        if np.any(self.weights < 0):
            raise ValueError("tree weights must be >= 0")

    def score(self, bins: np.ndarray) -> np.ndarray:
        bins = _bins_of(bins)
        acc = np.zeros(bins.shape[0])
        for tree, alpha in zip(self.trees, self.weights):
            acc += alpha * tree.predict(bins)
        return acc

    def predict(self, bins: np.ndarray) -> np.ndarray:
        return np.where(self.score(bins) >= 0.0, 1, -1).astype(np.int8)


def train_boosted_hash(
    quantized,
    target_bits,
    rounds: int,
    trim_fraction: float = 0.1,
    lazy_fraction: float = 0.2,
    max_depth: int = 4,
    seed=0,
) -> BoostedHash:
    """Discrete AdaBoost over depth-limited trees.

    Each round re-derives the trimmed distribution from the full one (the
    floor(trim_fraction * n) smallest weights are zeroed just for tree
    fitting), fits a tree, and reweights with the exact-optimal alpha.
    A round with weighted error >= 0.5 is dropped and boosting stops; a
    perfect round is kept with the error floored at 1e-10 and also stops.
    """
    bins = _bins_of(quantized)
    n = bins.shape[0]
    y = _check_targets(target_bits, n)
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if not 0.0 <= trim_fraction < 1.0:
        raise ValueError("trim_fraction must lie in [0, 1)")
    if np.all(y == y[0]):
        log.warning("constant target bit: boosted hash degenerates to one leaf")
    rng = np.random.default_rng(seed)
    w = np.full(n, 1.0 / n)
    n_trim = int(math.floor(trim_fraction * n))
    trees: list[Tree] = []
    alphas: list[float] = []
    for _ in range(rounds):
        if n_trim > 0:
            trimmed = w.copy()
            # stable selection keeps tie handling deterministic
            trimmed[np.argsort(w, kind="stable")[:n_trim]] = 0.0
        else:
            trimmed = w
        tree = train_tree(bins, y, trimmed, max_depth, rng, lazy_fraction)
        pred = tree.predict(bins)
        eps = float(w[pred != y].sum())
        if eps >= 0.5:
            log.warning("boosting stopped: round error %.4f >= 0.5", eps)
            break
        alpha = 0.5 * math.log((1.0 - max(eps, ERROR_FLOOR)) / max(eps, ERROR_FLOOR))
        trees.append(tree)
        alphas.append(alpha)
        if eps == 0.0:
            break
        w *= np.exp(-alpha * (y * pred))
        w /= w.sum()
    return BoostedHash(trees, np.asarray(alphas))


@dataclass
class LinearHash:
    """sign(w . x + b) hash with the usual tie-to-+1 rule."""

    w: np.ndarray
    b: float

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.ndim != 1:
            raise ValueError("w must be 1-D")
        self.b = float(self.b)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.where(x @ self.w + self.b >= 0.0, 1, -1).astype(np.int8)


def linear_objective(h: LinearHash, x, targets, reg_strength: float) -> float:
    """0.5 * reg * ||w||^2 + summed hinge loss, the value SGD minimizes."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    margins = y * (x @ h.w + h.b)
    return float(
        0.5 * reg_strength * h.w @ h.w + np.maximum(1.0 - margins, 0.0).sum()
    )


def train_linear_hash(
    features, target_bits, reg_strength: float = 1.0, epochs: int = 20, seed=0
) -> LinearHash:
    """Hinge-loss linear hash via stochastic subgradient descent.

    Minimizes 0.5 * reg * ||w||^2 + sum_i hinge_i with the 1/(reg * t) step
    schedule; the per-sample subgradient scales the hinge part by n. The bias
    is not regularized. Each step projects w onto the ball every minimizer
    must inhabit (0.5 * reg * ||w||^2 <= n, the objective at zero), and the
    returned iterate is averaged past a one-epoch burn-in; both are standard
    stabilizers for this step schedule. Deterministic for a fixed seed.
    """
    x = features.values if isinstance(features, FeatureMatrix) else np.asarray(
        features, dtype=np.float64
    )
    if x.ndim != 2:
        raise ValueError("features must be 2-D")
    n, d = x.shape
    y = _check_targets(target_bits, n).astype(np.float64)
    if reg_strength <= 0.0 or epochs < 1:
        raise ValueError("need reg_strength > 0 and epochs >= 1")
    rng = np.random.default_rng(seed)
    w = np.zeros(d)
    b = 0.0
    w_sum = np.zeros(d)
    b_sum = 0.0
    kept = 0
    burn = n if epochs > 1 else 0
    radius = math.sqrt(2.0 * n / reg_strength)
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (reg_strength * t)
            margin = y[i] * (x[i] @ w + b)
            w *= 1.0 - eta * reg_strength
            if margin < 1.0:
                gain = eta * n * y[i]
                w += gain * x[i]
                b += gain
            norm = math.sqrt(w @ w)
            if norm > radius:
                w *= radius / norm
            if t > burn:
                w_sum += w
                b_sum += b
                kept += 1
    return LinearHash(w_sum / kept, b_sum / kept)


def eval_hash(h, x):
    """Apply one hash function to one example or a batch.

    Boosted hashes consume quantized bin rows, linear hashes raw features.
    A 1-D input returns a scalar in {-1,+1}.
    """
    arr = np.asarray(x)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    out = h.predict(arr)
    return int(out[0]) if single else out
