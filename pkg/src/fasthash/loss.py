"""Pairwise hashing losses and their per-bit quadratic reduction.

Every supported loss depends on a pair only through the similarity label y
and the Hamming distance d between the two codes, so for a single bit
(conditioned on the distance accumulated over previous bits) it collapses to
a quadratic in the two code values:

    l(z_i, z_j) = 0.5 * z_i * z_j * (l11 - l_neg11) + 0.5 * (l11 + l_neg11)

where l11 is the loss when the new bits agree and l_neg11 when they differ.
Only the difference l11 - l_neg11 matters for optimization; it is the
pairwise coefficient fed to the code inference step.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class LossKind(enum.Enum):
    KSH = "ksh"
    HINGE = "hinge"
    BRE = "bre"
    EXPH = "exph"

    @classmethod
    def from_string(cls, name: str) -> "LossKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown loss kind {name!r}") from None


def loss_value(kind: LossKind, bit_count: int, y: int, distance: int) -> float:
    """Loss of one pair given code length, label, and Hamming distance.

    KSH penalizes the squared gap between the code inner product and its
    label target m*y. HINGE wants similar pairs at distance 0 and dissimilar
    pairs at distance >= m/2. BRE targets distance 0 (similar) or m
    (dissimilar). EXPH is an exponential in the normalized distance.
    """
    if y not in (-1, 1):
        raise ValueError(f"pair label must be -1 or +1, got {y}")
    if not 0 <= distance <= bit_count:
        raise ValueError(f"distance {distance} outside [0, {bit_count}]")
    m = float(bit_count)
    d = float(distance)
    if kind is LossKind.KSH:
        return (m * y - (m - 2.0 * d)) ** 2
    if kind is LossKind.HINGE:
        if y > 0:
            return d * d
        return max(0.5 * m - d, 0.0) ** 2
    if kind is LossKind.BRE:
        target = m if y < 0 else 0.0
        return (target - d) ** 2
    if kind is LossKind.EXPH:
        return math.exp(y * d / m + (1.0 if y < 0 else 0.0))
    raise TypeError(f"unsupported loss kind {kind!r}")


@dataclass(frozen=True)
class PairState:
    """Conditioning state of one pair while inferring bit ``bit_index``.

    ``prev_distance`` counts disagreements over bits 1..bit_index-1; the
    effective code length for the per-bit loss is bit_index itself.
    """

    y: int
    prev_distance: int
    bit_index: int

    def __post_init__(self):
        if self.y not in (-1, 1):
            raise ValueError("pair label must be -1 or +1")
        if self.bit_index < 1:
            raise ValueError("bit_index must be >= 1")
        if not 0 <= self.prev_distance <= self.bit_index - 1:
            raise ValueError("prev_distance must lie in [0, bit_index - 1]")


def bit_loss_terms(kind: LossKind, state: PairState) -> tuple[float, float]:
    """(loss if the new bits agree, loss if they differ) for one pair."""
    l_agree = loss_value(kind, state.bit_index, state.y, state.prev_distance)
    l_differ = loss_value(kind, state.bit_index, state.y, state.prev_distance + 1)
    return l_agree, l_differ


def pair_coefficient(kind: LossKind, state: PairState) -> float:
    """Quadratic coefficient l11 - l_neg11 of a pair for the current bit.

    Similar pairs always yield a coefficient <= 0, which is what makes the
    per-block energies representable as s-t cuts.
    """
    l_agree, l_differ = bit_loss_terms(kind, state)
    return l_agree - l_differ


def loss_values(kind: LossKind, bit_count: int, y: np.ndarray, distance: np.ndarray) -> np.ndarray:
    """Vectorized loss_value over parallel label/distance arrays."""
    y = np.asarray(y, dtype=np.float64)
    d = np.asarray(distance, dtype=np.float64)
    m = float(bit_count)
    if np.any(np.abs(y) != 1):
        raise ValueError("pair labels must be -1 or +1")
    if np.any(d < 0) or np.any(d > m):
        raise ValueError("distance outside [0, bit_count]")
    if kind is LossKind.KSH:
        return (m * y - (m - 2.0 * d)) ** 2
    if kind is LossKind.HINGE:
        return np.where(y > 0, d * d, np.maximum(0.5 * m - d, 0.0) ** 2)
    if kind is LossKind.BRE:
        return (np.where(y < 0, m, 0.0) - d) ** 2
    if kind is LossKind.EXPH:
        return np.exp(y * d / m + np.where(y < 0, 1.0, 0.0))
    raise TypeError(f"unsupported loss kind {kind!r}")


def pair_coefficients(
    kind: LossKind, bit_index: int, y: np.ndarray, prev_distance: np.ndarray
) -> np.ndarray:
    """Vectorized pair_coefficient for all pairs at one bit."""
    prev = np.asarray(prev_distance)
    if np.any(prev < 0) or np.any(prev > bit_index - 1):
        raise ValueError("prev_distance must lie in [0, bit_index - 1]")
    agree = loss_values(kind, bit_index, y, prev)
    differ = loss_values(kind, bit_index, y, prev + 1)
    return agree - differ
