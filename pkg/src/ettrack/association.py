"""Scan clustering, cluster-to-target gating, and association enumeration.

A scan is first partitioned into clusters of nearby returns; gating then
decides which clusters could plausibly belong to which predicted targets,
which clusters are far enough from everything to seed new targets, and which
are neither (treated as clutter).  Finally, the admissible joint assignments
of clusters to targets are enumerated, cluster-atomically: a cluster is
explained by exactly one of (an existing target, a new target, clutter) and a
target receives at most one cluster.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError

#: assignment sentinel: the cluster starts a new target
NEW_TARGET = "new"
#: assignment sentinel: the cluster is treated as clutter
CLUTTER = "clutter"


@dataclass(frozen=True)
class ClusterResult:
    """Disjoint clusters (tuples of measurement indices) plus noise indices."""

    clusters: tuple[tuple[int, ...], ...]
    noise: tuple[int, ...]


@dataclass(frozen=True)
class GatingResult:
    """Gating of clusters against one set of predicted target positions.

    candidates maps cluster index -> gated target indices (any member point
    within d_in of the target's predicted position); distances holds the
    minimum member distance for each gated (cluster, target) pair;
    birth_clusters are the clusters whose centroid is farther than d_out
    from every predicted position and which gate to no target; the remaining
    clusters sit in the undecided middle band and are listed as clutter.
    """

    candidates: dict[int, tuple[int, ...]]
    distances: dict[tuple[int, int], float]
    birth_clusters: tuple[int, ...]
    clutter_clusters: tuple[int, ...]
    d_in: float


@dataclass
class Association:
    """One joint assignment of clusters to targets / new targets / clutter."""

    assignment: dict[int, int | str] = field(default_factory=dict)

    def missed(self, targets) -> tuple[int, ...]:
        """Targets from the given index set that received no cluster."""
        taken = {t for t in self.assignment.values() if not isinstance(t, str)}
        return tuple(t for t in targets if t not in taken)


def dbscan(points: np.ndarray, eps: float, min_pts: int) -> ClusterResult:
    """Density-based clustering with deterministic tie-breaking.

    A point is a core point when its eps-neighborhood (itself included)
    holds at least min_pts points.  Clusters are grown from core points in
    ascending index order, so a border point reachable from several clusters
    joins the one seeded earliest.
    """
    if eps <= 0.0:
        raise InvalidParameterError("eps must be positive")
    if min_pts < 1:
        raise InvalidParameterError("min_pts must be >= 1")
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    n = points.shape[0]
    if n == 0:
        return ClusterResult((), ())

    diff = points[:, None, :] - points[None, :, :]
    adj = np.einsum("ijk,ijk->ij", diff, diff) <= eps * eps
    core = adj.sum(axis=1) >= min_pts
    neighbors = [np.flatnonzero(adj[i]) for i in range(n)]

    label = np.full(n, -1)
    clusters: list[list[int]] = []
    for i in range(n):
        if label[i] != -1 or not core[i]:
            continue
        cid = len(clusters)
        members = [i]
        label[i] = cid
        queue = [i]
        while queue:
            j = queue.pop(0)
            if not core[j]:
                continue
            for k in neighbors[j]:
                if label[k] == -1:
                    label[k] = cid
                    members.append(int(k))
                    queue.append(int(k))
        clusters.append(sorted(members))

    noise = tuple(int(i) for i in np.flatnonzero(label == -1))
    return ClusterResult(tuple(tuple(c) for c in clusters), noise)


def gate(points: np.ndarray, clusters: ClusterResult, predicted: np.ndarray,
         d_in: float, d_out: float) -> GatingResult:
    """Classify clusters against predicted target positions.

    A cluster becomes a candidate for every target with some member point
    within d_in; a cluster with no candidates whose centroid is farther than
    d_out from every target is a birth cluster; anything else is implicitly
    clutter.
    """
    if not 0.0 < d_in <= d_out:
        raise InvalidParameterError("need 0 < d_in <= d_out")
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    predicted = np.asarray(predicted, dtype=float).reshape(-1, 2)

    candidates: dict[int, tuple[int, ...]] = {}
    distances: dict[tuple[int, int], float] = {}
    birth: list[int] = []
    for c, members in enumerate(clusters.clusters):
        pts = points[list(members)]
        gated = []
        if predicted.size:
            dmin = np.hypot(*(pts[:, None, :] - predicted[None, :, :]).transpose(2, 0, 1)).min(axis=0)
            for t in np.flatnonzero(dmin <= d_in):
                gated.append(int(t))
                distances[(c, int(t))] = float(dmin[t])
        if gated:
            candidates[c] = tuple(gated)
        else:
            centroid = pts.mean(axis=0)
            cent_d = (np.hypot(*(predicted - centroid).T)
                      if predicted.size else np.array([np.inf]))
            if np.all(cent_d > d_out):
                birth.append(c)
    clutter = tuple(c for c in range(len(clusters.clusters))
                    if c not in candidates and c not in birth)
    return GatingResult(candidates, distances, tuple(birth), clutter, d_in)


def enumerate_associations(g: GatingResult, targets, cap: int) -> list[Association]:
    """All admissible joint assignments, capped.

    Every candidate cluster picks one of its gated targets or NEW; birth
    clusters always map to NEW; the rest map to CLUTTER; no target may be
    picked twice.  When the raw option product exceeds cap, a beam search
    keeps the cap cheapest assignments under a per-cluster cost (gating
    distance for a target, d_in for NEW, zero for clutter).
    """
    if cap < 1:
        raise InvalidParameterError("cap must be >= 1")
    targets = tuple(targets)
    target_set = set(targets)
    cluster_ids = sorted(set(g.candidates) | set(g.birth_clusters))

    options: list[tuple[int, list]] = []
    size = 1
    for c in cluster_ids:
        if c in g.birth_clusters:
            opts = [NEW_TARGET]
        else:
            opts = [t for t in g.candidates[c] if t in target_set]
            opts.append(NEW_TARGET)
        options.append((c, opts))
        size *= len(opts)

    base = {c: CLUTTER for c in g.clutter_clusters}

    if size <= cap:
        out: list[Association] = []

        def dfs(i: int, used: set, acc: dict):
            if i == len(options):
                out.append(Association({**base, **acc}))
                return
            c, opts = options[i]
            for t in opts:
                if isinstance(t, str):
                    acc[c] = t
                    dfs(i + 1, used, acc)
                    del acc[c]
                elif t not in used:
                    used.add(t)
                    acc[c] = t
                    dfs(i + 1, used, acc)
                    del acc[c]
                    used.discard(t)

        dfs(0, set(), {})
        return out

    # beam search: states are (cost, choice ranks, assignment, used targets)
    beam = [(0.0, (), {}, frozenset())]
    for c, opts in options:
        grown = []
        for cost, ranks, acc, used in beam:
            for rank, t in enumerate(opts):
                if isinstance(t, str):
                    step = g.d_in if t == NEW_TARGET else 0.0
                    new_used = used
                else:
                    if t in used:
                        continue
                    step = g.distances[(c, t)]
                    new_used = used | {t}
                grown.append((cost + step, ranks + (rank,), {**acc, c: t}, new_used))
        grown.sort(key=lambda s: (s[0], s[1]))
        beam = grown[:cap]
    return [Association({**base, **acc}) for _, _, acc, _ in beam]
