"""Lloyd's K-Means with k-means++ seeding, used to group devices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError


@dataclass(frozen=True, eq=False)
class DeviceGroups:
    assignment: np.ndarray
    k: int
    inertia_history: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64).copy()
        if a.ndim != 1 or a.size == 0:
            raise ContractError("assignment must be a non-empty vector")
        if a.min() < 0 or a.max() >= self.k:
            raise ContractError(f"group indices must lie in [0, {self.k})")
        if np.unique(a).size != self.k:
            raise ContractError("every group must contain at least one device")
        a.flags.writeable = False
        object.__setattr__(self, "assignment", a)

    def __len__(self) -> int:
        return self.k

    def members(self, group: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == group)

    def groups(self) -> list[np.ndarray]:
        return [self.members(g) for g in range(self.k)]


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # explicit differences rather than the |x|^2 - 2xc + |c|^2 expansion so
    # identical points give exactly zero distance
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of k seed points chosen by D^2 weighting."""
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(points, points[chosen[0]][None, :])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            # fewer distinct points than k: take unused indices uniformly
            unused = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(unused))
        chosen.append(nxt)
        d2 = np.minimum(d2, _sq_dists(points, points[nxt][None, :])[:, 0])
    return np.array(chosen)


def _repair_empty(points, labels, centers, k):
    """Move the point farthest from its centroid into each empty cluster.

    Only points from clusters with more than one member are eligible, so a
    repair never empties another cluster.
    """
    for g in range(k):
        counts = np.bincount(labels, minlength=k)
        if counts[g]:
            continue
        d2 = np.einsum("ij,ij->i", points - centers[labels], points - centers[labels])
        d2 = np.where(counts[labels] > 1, d2, -1.0)
        far = int(np.argmax(d2))
        labels[far] = g
        centers[g] = points[far]
    return labels


def _centroids(points, labels, k):
    centers = np.zeros((k, points.shape[1]))
    # fixed-order accumulation keeps sums bit-identical across runs
    np.add.at(centers, labels, points)
    return centers / np.bincount(labels, minlength=k)[:, None]


def _inertia(points, labels, centers) -> float:
    diff = points - centers[labels]
    return float(np.einsum("ij,ij->", diff, diff))


def _lloyd(pts, k, rng, max_iters):
    centers = pts[kmeans_pp_init(pts, k, rng)].copy()
    labels = np.argmin(_sq_dists(pts, centers), axis=1)
    labels = _repair_empty(pts, labels, centers, k)
    history = []
    for _ in range(max_iters):
        centers = _centroids(pts, labels, k)
        history.append(_inertia(pts, labels, centers))
        new = np.argmin(_sq_dists(pts, centers), axis=1)
        new = _repair_empty(pts, new, centers, k)
        if np.array_equal(new, labels):
            break
        labels = new
    history.append(_inertia(pts, labels, _centroids(pts, labels, k)))
    return labels, history


def kmeans(points, k: int, seed: int, max_iters: int = 100, n_init: int = 10) -> DeviceGroups:
    """Cluster N points into k non-empty groups.

    Runs ``n_init`` independently seeded k-means++/Lloyd passes and keeps
    the lowest final within-cluster sum of squares (earliest run on ties).
    Nearest-centroid ties go to the lowest group index. Each pass stops when
    the assignment no longer changes or after ``max_iters`` iterations.
    Integer vectors (LSH codes) are clustered as real vectors.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    if k <= 0:
        raise ConfigurationError(f"group count must be positive, got {k}")
    if k > n:
        raise ConfigurationError(f"cannot form {k} groups from {n} devices")
    if max_iters < 1 or n_init < 1:
        raise ConfigurationError("max_iters and n_init must be >= 1")

    best = None
    for run in range(n_init):
        rng = np.random.default_rng([int(seed), 6, run])
        labels, history = _lloyd(pts, k, rng, max_iters)
        if best is None or history[-1] < best[1][-1]:
            best = (labels, history)
    return DeviceGroups(best[0], k, tuple(best[1]))


def purity(groups: DeviceGroups, true_labels) -> float:
    """Sum over groups of the majority-label count, divided by N."""
    labels = np.asarray(true_labels)
    if labels.shape != groups.assignment.shape:
        raise ContractError(f"{labels.shape[0]} labels for {groups.assignment.shape[0]} devices")
    total = 0
    for g in range(groups.k):
        _, counts = np.unique(labels[groups.assignment == g], return_counts=True)
        total += counts.max()
    return total / labels.shape[0]
