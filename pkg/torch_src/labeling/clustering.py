"""
Lloyd's k-means with k-means++ seeding, used to split the trajectories of a task into two behavior groups.
"""
from typing import List, NamedTuple, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from datasets.stage_world.io import PreferenceCorpus, TrajectoryRef
from torch_util import make_rng


class KMeansResult(NamedTuple):
    labels: np.ndarray  # (n,)
    centroids: np.ndarray  # (k, d)
    inertia: float


def _init_centroids(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centroids = [points[rng.integers(len(points))]]
    for _ in range(1, k):
        d2 = np.min(cdist(points, np.stack(centroids), "sqeuclidean"), axis=1)
        total = d2.sum()
        if total > 0:
            index = rng.choice(len(points), p=d2 / total)
        else:
            index = rng.integers(len(points))
        centroids.append(points[index])
    return np.stack(centroids).astype(np.float64)


def _repair_empty(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray, k: int) -> np.ndarray:
    """
    Move the point farthest from its centroid into each empty cluster (lowest index first on equal distances).
    """
    for c in range(k):
        if np.any(labels == c):
            continue
        counts = np.bincount(labels, minlength=k)
        dist = np.linalg.norm(points - centroids[labels], axis=1)
        dist[counts[labels] <= 1] = -1.
        labels[int(np.argmax(dist))] = c
    return labels


def _lloyd(points: np.ndarray, centroids: np.ndarray, max_iter: int, tolerance: float) -> KMeansResult:
    k = len(centroids)
    labels = np.zeros(len(points), dtype=np.int64)
    for _ in range(max_iter):
        labels = np.argmin(cdist(points, centroids, "sqeuclidean"), axis=1)
        labels = _repair_empty(points, labels, centroids, k)
        new_centroids = np.stack([points[labels == c].mean(axis=0) for c in range(k)])
        shift = np.linalg.norm(new_centroids - centroids)
        centroids = new_centroids
        if shift < tolerance:
            break
    labels = _repair_empty(points, np.argmin(cdist(points, centroids, "sqeuclidean"), axis=1), centroids, k)
    centroids = np.stack([points[labels == c].mean(axis=0) for c in range(k)])
    inertia = float(np.sum((points - centroids[labels]) ** 2))
    return KMeansResult(labels, centroids, inertia)


def kmeans(points: np.ndarray, k: int, seed: int = 0, n_init: int = 10, max_iter: int = 100,
           tolerance: float = 1e-6) -> KMeansResult:
    """
    :param points: (n, d) feature vectors, or (n,) scalars
    :param k: number of clusters, 1 <= k <= n
    :param seed: seed of the k-means++ initializations
    :param n_init: restarts; the result with the lowest inertia is kept (earliest on ties)
    :param max_iter: iterations per restart
    :param tolerance: stop when the centroids move less than this
    :return: KMeansResult; every cluster is non-empty
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if len(points) < k:
        raise ValueError(f"Cannot form {k} clusters from {len(points)} points")

    rng = make_rng(seed, "kmeans")
    best = None
    for _ in range(n_init):
        result = _lloyd(points, _init_centroids(points, k, rng), max_iter, tolerance)
        if best is None or result.inertia < best.inertia - 1e-12:
            best = result
    return best


def trajectory_features(frames: np.ndarray, states: np.ndarray) -> np.ndarray:
    """
    Observation-only features: the mean rendered frame concatenated with the final state.
    """
    return np.concatenate((np.asarray(frames, dtype=np.float64).mean(axis=0).ravel(),
                           np.asarray(states[-1], dtype=np.float64)))


def cluster_trajectories(corpus: PreferenceCorpus, refs: Sequence[TrajectoryRef], k: int = 2,
                         seed: int = 0) -> List[List[TrajectoryRef]]:
    """
    Split trajectories into k groups with k-means on their features.

    :return: k lists of references, in cluster order
    """
    if len(refs) < k:
        raise ValueError(f"Cannot form {k} clusters from {len(refs)} trajectories")
    features = np.stack([trajectory_features(corpus.frames(*r), corpus.trajectory(*r).states) for r in refs])
    labels = kmeans(features, k, seed).labels
    return [[r for r, label in zip(refs, labels) if label == c] for c in range(k)]
