"""Spatial k-means clustering of electrode positions and elbow selection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .signal_io import ElectrodeLayout, ValidationError

MAX_ITER = 300
MIN_CLUSTER_SIZE = 3


class TopologyError(ValueError):
    """Raised when a cluster cannot host a 3-channel convolution window."""


@dataclass
class ClusterAssignment:
    """Channel-to-cluster map with centroids and objective value.

    Attributes:
        assignment: Cluster index of every channel, in channel order.
        centroids: Array of shape (n_clusters, 3).
        wcss: Within-cluster sum of squared distances.
        history: WCSS after every Lloyd iteration (k-means only).
        remap: Original label -> compacted index, for fixed assignments.
    """

    assignment: np.ndarray
    centroids: np.ndarray
    wcss: float
    history: list[float] = field(default_factory=list)
    remap: dict[int, int] | None = None

    @property
    def n_clusters(self) -> int:
        return self.centroids.shape[0]

    def members(self, cluster: int) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.assignment == cluster)]

    def sizes(self) -> list[int]:
        return np.bincount(self.assignment, minlength=self.n_clusters).tolist()

    def check_topology(self, min_size: int = MIN_CLUSTER_SIZE) -> None:
        for c, size in enumerate(self.sizes()):
            if size < min_size:
                raise TopologyError(
                    f"cluster {c} has {size} channel(s); at least {min_size} required"
                )


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("ikd,ikd->ik", diff, diff)


def compute_wcss(points: np.ndarray, assignment: np.ndarray, centroids: np.ndarray) -> float:
    diff = points - centroids[assignment]
    return float(np.einsum("id,id->", diff, diff))


def _centroids(points: np.ndarray, assignment: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((k, points.shape[1]))
    for c in range(k):
        out[c] = points[assignment == c].mean(axis=0)
    return out


def farthest_point_init(points: np.ndarray, k: int, first: int) -> np.ndarray:
    """Greedy farthest-point seeding starting from ``points[first]``.

    Ties go to the lowest point index.
    """
    chosen = [first]
    nearest = np.sum((points - points[first]) ** 2, axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(nearest))
        chosen.append(nxt)
        nearest = np.minimum(nearest, np.sum((points - points[nxt]) ** 2, axis=1))
    return points[chosen].copy()


def _repair_empty(points: np.ndarray, assignment: np.ndarray, centroids: np.ndarray) -> bool:
    k = centroids.shape[0]
    repaired = False
    while True:
        counts = np.bincount(assignment, minlength=k)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            return repaired
        cost = np.sum((points - centroids[assignment]) ** 2, axis=1)
        cost[counts[assignment] < 2] = -1.0
        donor = int(np.argmax(cost))
        assignment[donor] = empty[0]
        centroids[empty[0]] = points[donor]
        repaired = True


def kmeans(positions, k: int, seed: int, max_iter: int = MAX_ITER) -> ClusterAssignment:
    """Lloyd's k-means with seeded farthest-point initialization.

    The first centre is drawn from ``seed``; the rest are chosen greedily.
    Iterates until the assignment stops changing or ``max_iter`` is hit.
    A cluster left empty takes over the point farthest from its centroid.
    """
    points = np.asarray(positions, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError("positions must be a non-empty (n, d) array")
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must be between 1 and the number of points ({n})")
    if not np.isfinite(points).all():
        raise ValueError("positions must be finite")

    first = int(np.random.default_rng(seed).integers(n))
    centroids = farthest_point_init(points, k, first)
    assignment = np.argmin(_sq_dists(points, centroids), axis=1)
    _repair_empty(points, assignment, centroids)
    history = []
    for _ in range(max_iter):
        centroids = _centroids(points, assignment, k)
        history.append(compute_wcss(points, assignment, centroids))
        new = np.argmin(_sq_dists(points, centroids), axis=1)
        _repair_empty(points, new, centroids)
        if np.array_equal(new, assignment):
            break
        assignment = new
    centroids = _centroids(points, assignment, k)
    wcss = compute_wcss(points, assignment, centroids)
    return ClusterAssignment(assignment.astype(np.int64), centroids, wcss, history)


def chord_knee(ks, wcss) -> int:
    """Index of the curve point farthest from the chord joining its ends.

    Ties resolve to the smaller index.
    """
    ks = np.asarray(ks, dtype=np.float64)
    w = np.asarray(wcss, dtype=np.float64)
    dx, dy = ks[-1] - ks[0], w[-1] - w[0]
    norm = np.hypot(dx, dy)
    if norm == 0:
        return 0
    dist = np.abs(dy * (ks - ks[0]) - dx * (w - w[0])) / norm
    return int(np.argmax(dist))


def elbow_select(positions, k_max: int, seed: int) -> tuple[int, list[float]]:
    """Pick the cluster count at the knee of the WCSS curve for k = 1..k_max.

    Each k is clustered with its own generator seeded from (seed, k).

    Returns:
        The selected k and the WCSS curve, ``curve[i]`` being WCSS for k = i + 1.
    """
    points = np.asarray(positions, dtype=np.float64)
    if not 2 <= k_max <= points.shape[0]:
        raise ValueError(f"k_max={k_max} must be between 2 and {points.shape[0]}")
    curve = [kmeans(points, k, derive_seed(seed, k)).wcss for k in range(1, k_max + 1)]
    return chord_knee(range(1, k_max + 1), curve) + 1, curve


def derive_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


def fixed_assignment(layout: ElectrodeLayout) -> ClusterAssignment:
    """Cluster assignment taken from the layout's cluster map.

    Labels are compacted to 0..n-1 in ascending order of the original
    labels; ``remap`` records the mapping.
    """
    if layout.clusters is None:
        raise ValidationError("layout carries no fixed cluster map")
    missing = [c for c in layout.channel_ids if c not in layout.clusters]
    if missing:
        raise ValidationError(f"cluster map missing channels {missing}")
    raw = [layout.clusters[c] for c in layout.channel_ids]
    remap = {label: i for i, label in enumerate(sorted(set(raw)))}
    assignment = np.array([remap[r] for r in raw], dtype=np.int64)
    centroids = _centroids(layout.positions, assignment, len(remap))
    wcss = compute_wcss(layout.positions, assignment, centroids)
    return ClusterAssignment(assignment, centroids, wcss, remap=remap)


def feasible(assignment: ClusterAssignment, min_size: int = MIN_CLUSTER_SIZE) -> bool:
    return min(assignment.sizes()) >= min_size
