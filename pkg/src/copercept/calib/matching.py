"""Descriptor quantization, budget planning and key-point matching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

# Re-ID style descriptors are non-negative (post-ReLU); values are clipped
# into this range before uniform quantization.
DESCRIPTOR_RANGE = (0.0, 4.0)

# optimal assignment up to this many candidates per side, greedy above
EXACT_MATCH_LIMIT = 64


class BudgetError(ValueError):
    """The channel budget cannot carry even one bit per component."""


@dataclass(frozen=True)
class QuantizationPlan:
    bits_per_component: int
    descriptor_dim: int
    n_keypoints: int

    @property
    def total_cost_bits(self) -> int:
        return self.bits_per_component * self.descriptor_dim * self.n_keypoints


def plan_quantization(dim: int, n_keypoints: int, budget_bits: float) -> QuantizationPlan:
    """Finest uniform bit depth whose total cost fits ``budget_bits``."""
    if dim < 1 or n_keypoints < 1:
        raise ValueError("dim and n_keypoints must be positive")
    q = int(budget_bits // (dim * n_keypoints))
    if q < 1:
        raise BudgetError(
            f"budget of {budget_bits} bits cannot carry {n_keypoints}x{dim} components at 1 bit"
        )
    return QuantizationPlan(q, dim, n_keypoints)


def quantize(values, bits: int | None, value_range=DESCRIPTOR_RANGE) -> np.ndarray:
    """Clip to ``value_range`` and snap to the centres of ``2**bits`` uniform bins.

    ``bits=None`` means no quantization (values are still clipped).
    """
    lo, hi = value_range
    x = np.clip(np.asarray(values, dtype=float), lo, hi)
    if bits is None:
        return x
    if bits < 1:
        raise ValueError("bits must be >= 1")
    levels = 2 ** int(bits)
    step = (hi - lo) / levels
    idx = np.minimum(np.floor((x - lo) / step), levels - 1)
    return lo + (idx + 0.5) * step


def pairwise_distances(a, b) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.sqrt(np.clip(d2, 0.0, None))


@dataclass(frozen=True)
class MatchResult:
    """Matched index pairs sorted by ascending descriptor distance."""

    pairs: np.ndarray  # (n, 2) indices into (a, b)
    distances: np.ndarray
    shortfall: bool = False

    def __len__(self):
        return len(self.distances)


def _greedy_mutual(dist: np.ndarray):
    rows, cols = [], []
    d = dist.copy()
    while np.isfinite(d).any():
        i, j = np.unravel_index(np.argmin(d), d.shape)
        rows.append(i)
        cols.append(j)
        d[i, :] = np.inf
        d[:, j] = np.inf
    return np.array(rows, dtype=int), np.array(cols, dtype=int)


def match_keypoints(descriptors_a, descriptors_b, top_n: int) -> MatchResult:
    """One-to-one matching minimising summed Euclidean distance, keeping the best ``top_n``."""
    a = np.atleast_2d(np.asarray(descriptors_a, dtype=float))
    b = np.atleast_2d(np.asarray(descriptors_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("both descriptor sets must be non-empty")
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    dist = pairwise_distances(a, b)
    if max(dist.shape) <= EXACT_MATCH_LIMIT:
        rows, cols = linear_sum_assignment(dist)
    else:
        rows, cols = _greedy_mutual(dist)
    d = dist[rows, cols]
    order = np.lexsort((cols, rows, d))
    keep = order[:top_n]
    pairs = np.column_stack([rows[keep], cols[keep]]).astype(int)
    return MatchResult(pairs, d[keep], shortfall=len(order) < top_n)
