"""Multi-target tracking error metrics.

Implements the GOSPA metric in its assignment form with the cardinality
penalty split evenly between missed and false targets, over either of two
base distances: Euclidean distance between centers, or the Hausdorff
distance between rectangle vertex sets (which also penalizes extent and
heading errors).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidParameterError, UnsupportedParameterError


@dataclass(frozen=True)
class GospaBreakdown:
    """GOSPA value and its decomposition.

    localization, missed_cost and false_cost are in p-th power units, so
    total equals (localization + missed_cost + false_cost) ** (1/p); for
    p = 1 the decomposition is additive in the metric itself.
    """

    total: float
    localization: float
    missed_cost: float
    false_cost: float


def euclidean_center_dist(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between two 2D points."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.hypot(*(a - b)))


def hausdorff_vertices(A: np.ndarray, B: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two small vertex sets."""
    A = np.asarray(A, dtype=float).reshape(-1, 2)
    B = np.asarray(B, dtype=float).reshape(-1, 2)
    d = np.hypot(*(A[:, None, :] - B[None, :, :]).transpose(2, 0, 1))
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def optimal_assignment(dist: np.ndarray, c: float, p: float) -> tuple[list[tuple[int, int]], float]:
    """Best one-to-one partial assignment under the GOSPA objective.

    dist is the truth-by-estimate base-distance matrix.  Each matched pair
    costs min(d, c)^p, each unmatched row or column costs c^p / 2.  Returns
    the matched pairs that count as proper detections (d < c) and the
    objective value in p-th power units.  Solved exactly by augmenting the
    matrix with per-item "unassigned" slots and running the Hungarian
    algorithm on the padded square matrix.
    """
    dist = np.asarray(dist, dtype=float)
    n, m = dist.shape
    cp = c**p
    half = 0.5 * cp
    if n == 0 or m == 0:
        return [], half * (n + m)

    big = cp * (n + m) + 1.0  # exceeds any feasible total: forbids dummy cross-edges
    full = np.full((n + m, n + m), big)
    full[:n, :m] = np.minimum(dist, c) ** p
    full[:n, m:] = np.where(np.eye(n, dtype=bool), half, big)
    full[n:, :m] = np.where(np.eye(m, dtype=bool), half, big)
    full[n:, m:] = 0.0

    rows, cols = linear_sum_assignment(full)
    pairs = [(int(r), int(cl)) for r, cl in zip(rows, cols)
             if r < n and cl < m and dist[r, cl] < c]
    value = 0.0
    for r, cl in zip(rows, cols):
        if r < n and cl < m:
            d = dist[r, cl]
            value += min(d, c) ** p if d < c else cp
        elif (r < n) != (cl < m):
            value += half
    return pairs, float(value)


_BASE_DISTANCES = {
    "euclidean": euclidean_center_dist,
    "hausdorff": hausdorff_vertices,
}


def gospa(estimates, truths, c: float, p: float, alpha: float = 2.0,
          base: str = "euclidean") -> GospaBreakdown:
    """GOSPA error between an estimate set and a truth set.

    estimates and truths are sequences of 2-vectors (base="euclidean") or of
    4x2 vertex arrays (base="hausdorff").  Only the alpha = 2 form — the one
    with the missed/false decomposition — is supported.
    """
    if alpha != 2.0:
        raise UnsupportedParameterError("only the alpha = 2 GOSPA form is supported")
    if c <= 0.0 or p < 1.0:
        raise InvalidParameterError("need c > 0 and p >= 1")
    try:
        base_dist = _BASE_DISTANCES[base]
    except KeyError:
        raise UnsupportedParameterError(f"unknown base distance {base!r}") from None

    truths = list(truths)
    estimates = list(estimates)
    n, m = len(truths), len(estimates)
    cp = c**p
    half = 0.5 * cp

    if n == 0 and m == 0:
        return GospaBreakdown(0.0, 0.0, 0.0, 0.0)
    dist = np.array([[base_dist(t, e) for e in estimates] for t in truths],
                    dtype=float).reshape(n, m)
    pairs, _ = optimal_assignment(dist, c, p)

    loc = sum(dist[r, cl] ** p for r, cl in pairs)
    n_missed = n - len(pairs)
    n_false = m - len(pairs)
    total = (loc + half * (n_missed + n_false)) ** (1.0 / p)
    return GospaBreakdown(float(total), float(loc),
                          float(half * n_missed), float(half * n_false))
