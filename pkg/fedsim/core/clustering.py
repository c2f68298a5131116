"""
Deterministic 2-means used by Clipped-Clustering, SignGuard and FreqFed.

Initialisation takes the two points with the largest pairwise distance
(lexicographically first pair on ties), then runs Lloyd iterations through
scikit-learn's KMeans with a single init. BLAS/OpenMP threads are pinned to
one while clustering so results never depend on the host's thread count.
"""

from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform
from sklearn.cluster import KMeans
from threadpoolctl import threadpool_limits

MAX_LLOYD_ITERATIONS = 50


def farthest_pair(points: np.ndarray) -> tuple:
    dist = squareform(pdist(points, metric="euclidean"))
    # argmax over the flattened upper triangle scans row-major: first pair wins ties
    flat = int(np.argmax(np.triu(dist, k=1)))
    i, j = divmod(flat, dist.shape[0])
    return i, j, float(dist[i, j])


def two_means(points: np.ndarray, ids: Sequence[int], seed: int = 0) -> np.ndarray:
    """
    Boolean mask of the majority cluster.

    The larger cluster wins; on a size tie the cluster holding the lowest
    id wins. Fewer than two distinct points form a single cluster.
    """
    points = np.asarray(points, dtype=np.float64)
    ids = np.asarray(ids)
    n = points.shape[0]
    if n < 2:
        return np.ones(n, dtype=bool)

    i, j, spread = farthest_pair(points)
    if spread == 0.0:
        return np.ones(n, dtype=bool)

    with threadpool_limits(limits=1):
        km = KMeans(
            n_clusters=2,
            init=points[[i, j]],
            n_init=1,
            max_iter=MAX_LLOYD_ITERATIONS,
            algorithm="lloyd",
            random_state=seed,
        ).fit(points)
    labels = km.labels_

    sizes = np.bincount(labels, minlength=2)
    if sizes[0] != sizes[1]:
        winner = int(np.argmax(sizes))
    else:
        winner = int(labels[int(np.argmin(ids))])
    return labels == winner


__all__ = ["two_means", "farthest_pair", "MAX_LLOYD_ITERATIONS"]
